// Point clouds: data model, ASCII PLY / XYZ ingestion, subsampling and
// nearest-neighbour indexing.
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvreg/error.hpp"
#include "mvreg/kdtree.hpp"
#include "mvreg/lie.hpp"

namespace mvreg {

// An ordered, non-empty list of finite 3D points. `id` is the 1-based scan
// index (0 when the cloud is not part of a scan set).
class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(std::vector<Vector3> points, int id = 0) : points_(std::move(points)), id_(id) {
    if (points_.empty()) throw EmptyCloud("point cloud has no points");
    for (std::size_t i = 0; i < points_.size(); ++i)
      if (!points_[i].allFinite())
        throw ParseError("point " + std::to_string(i) + " has a non-finite coordinate");
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vector3& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<Vector3>& points() const { return points_; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  int id() const { return id_; }
  void set_id(int id) { id_ = id; }

 private:
  std::vector<Vector3> points_;
  int id_ = 0;
};

// Immutable spatial index over one cloud's points.
class NearestNeighborIndex {
 public:
  NearestNeighborIndex() = default;
  explicit NearestNeighborIndex(const PointCloud& cloud) : tree_(cloud.points()) {}

  std::size_t size() const { return tree_.size(); }
  const Vector3& point(std::size_t i) const { return tree_.point(i); }

  // (index, squared distance) of the nearest indexed point.
  Neighbor nearest(const Vector3& q) const { return tree_.nearest(q); }
  Neighbor nearest_excluding(const Vector3& q, std::size_t exclude) const {
    return tree_.nearest_excluding(q, exclude);
  }

 private:
  KdTree tree_;
};

inline NearestNeighborIndex build_index(const PointCloud& c) { return NearestNeighborIndex(c); }

struct NearestResult {
  std::size_t index;
  double distance;
};

inline NearestResult nearest(const NearestNeighborIndex& idx, const Vector3& q) {
  const Neighbor n = idx.nearest(q);
  return {n.index, std::sqrt(n.squared_distance)};
}

enum class CloudFormat { PlyAscii, Xyz };

inline std::optional<CloudFormat> parse_cloud_format(std::string_view s) {
  if (s == "ply" || s == "ply-ascii") return CloudFormat::PlyAscii;
  if (s == "xyz") return CloudFormat::Xyz;
  return std::nullopt;
}

inline CloudFormat format_from_extension(const std::filesystem::path& p) {
  return p.extension() == ".ply" ? CloudFormat::PlyAscii : CloudFormat::Xyz;
}

namespace cloud_detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline double parse_number(std::string_view tok, const std::string& where) {
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(where + ": '" + std::string(tok) + "' is not a number");
  return v;
}

inline std::string location(const std::filesystem::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

inline std::vector<Vector3> read_xyz(std::istream& in, const std::filesystem::path& path) {
  std::vector<Vector3> pts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    const std::string where = location(path, line_no);
    if (toks.size() != 3)
      throw ParseError(where + ": expected 3 coordinates, found " + std::to_string(toks.size()));
    pts.emplace_back(parse_number(toks[0], where), parse_number(toks[1], where),
                     parse_number(toks[2], where));
  }
  return pts;
}

inline std::vector<Vector3> read_ply_ascii(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](std::string& l) {
    if (!std::getline(in, l)) return false;
    ++line_no;
    if (!l.empty() && l.back() == '\r') l.pop_back();
    return true;
  };

  if (!next(line) || split_ws(line) != std::vector<std::string_view>{"ply"})
    throw ParseError(location(path, 1) + ": missing 'ply' magic");

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
    bool has_list = false;
  };
  std::vector<Element> elements;
  bool ascii = false;
  for (;;) {
    if (!next(line)) throw ParseError(location(path, line_no) + ": header ends before end_header");
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    const std::string where = location(path, line_no);
    if (toks[0] == "end_header") break;
    if (toks[0] == "comment" || toks[0] == "obj_info") continue;
    if (toks[0] == "format") {
      if (toks.size() < 2 || toks[1] != "ascii")
        throw ParseError(where + ": only 'format ascii 1.0' is supported");
      ascii = true;
    } else if (toks[0] == "element") {
      if (toks.size() != 3) throw ParseError(where + ": malformed element line");
      Element e;
      e.name = std::string(toks[1]);
      e.count = static_cast<std::size_t>(parse_number(toks[2], where));
      elements.push_back(std::move(e));
    } else if (toks[0] == "property") {
      if (elements.empty()) throw ParseError(where + ": property before any element");
      if (toks.size() >= 2 && toks[1] == "list") {
        elements.back().has_list = true;
        elements.back().properties.emplace_back(toks.back());
      } else if (toks.size() == 3) {
        elements.back().properties.emplace_back(toks[2]);
      } else {
        throw ParseError(where + ": malformed property line");
      }
    } else {
      throw ParseError(where + ": unknown header keyword '" + std::string(toks[0]) + "'");
    }
  }
  if (!ascii) throw ParseError(path.string() + ": PLY header has no format line");

  std::vector<Vector3> pts;
  bool seen_vertex = false;
  for (const Element& e : elements) {
    if (e.name != "vertex") {
      // Other elements (faces, ...) are one line per entry; skip them.
      for (std::size_t k = 0; k < e.count; ++k)
        if (!next(line)) throw ParseError(location(path, line_no) + ": truncated element '" + e.name + "'");
      continue;
    }
    seen_vertex = true;
    if (e.has_list) throw ParseError(path.string() + ": list properties on vertices are not supported");
    std::array<std::ptrdiff_t, 3> col{-1, -1, -1};
    for (std::size_t p = 0; p < e.properties.size(); ++p) {
      if (e.properties[p] == "x") col[0] = static_cast<std::ptrdiff_t>(p);
      if (e.properties[p] == "y") col[1] = static_cast<std::ptrdiff_t>(p);
      if (e.properties[p] == "z") col[2] = static_cast<std::ptrdiff_t>(p);
    }
    if (std::ranges::any_of(col, [](std::ptrdiff_t c) { return c < 0; }))
      throw ParseError(path.string() + ": vertex element lacks x/y/z properties");
    pts.reserve(e.count);
    for (std::size_t k = 0; k < e.count; ++k) {
      if (!next(line)) throw ParseError(location(path, line_no + 1) + ": expected vertex row");
      const auto toks = split_ws(line);
      const std::string where = location(path, line_no);
      if (toks.size() != e.properties.size())
        throw ParseError(where + ": expected " + std::to_string(e.properties.size()) + " values, found " +
                         std::to_string(toks.size()));
      pts.emplace_back(parse_number(toks[col[0]], where), parse_number(toks[col[1]], where),
                       parse_number(toks[col[2]], where));
    }
  }
  if (!seen_vertex) throw ParseError(path.string() + ": PLY header declares no vertex element");
  return pts;
}

}  // namespace cloud_detail

inline PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format, int id = 0) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<Vector3> pts = format == CloudFormat::PlyAscii ? cloud_detail::read_ply_ascii(in, path)
                                                             : cloud_detail::read_xyz(in, path);
  if (pts.empty()) throw EmptyCloud(path.string() + ": no points");
  return PointCloud(std::move(pts), id);
}

inline PointCloud load_cloud(const std::filesystem::path& path, int id = 0) {
  return load_cloud(path, format_from_extension(path), id);
}

// Writes with 17 significant digits so a reload is bit-identical.
inline void save_cloud(const PointCloud& c, const std::filesystem::path& path, CloudFormat format) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << std::setprecision(17);
  if (format == CloudFormat::PlyAscii) {
    out << "ply\nformat ascii 1.0\nelement vertex " << c.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  }
  for (const Vector3& p : c) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  if (!out) throw ParseError("failed writing " + path.string());
}

inline PointCloud subsample(const PointCloud& c, std::size_t frequency) {
  if (frequency == 0) throw ConfigError("subsample frequency must be >= 1");
  std::vector<Vector3> kept;
  kept.reserve(c.size() / frequency + 1);
  for (std::size_t i = 0; i < c.size(); i += frequency) kept.push_back(c[i]);
  return PointCloud(std::move(kept), c.id());
}

inline PointCloud transform_cloud(const PointCloud& c, const RigidMotion& m) {
  std::vector<Vector3> out;
  out.reserve(c.size());
  for (const Vector3& p : c) out.push_back(m.apply(p));
  return PointCloud(std::move(out), c.id());
}

// Median over points of the distance to their nearest other point.
inline double median_resolution(const PointCloud& c, const NearestNeighborIndex& idx) {
  if (c.size() < 2) throw TooFewPoints("median resolution needs at least 2 points");
  std::vector<double> d(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) d[i] = std::sqrt(idx.nearest_excluding(c[i], i).squared_distance);
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + mid, d.end());
  if (d.size() % 2 == 1) return d[mid];
  const double upper = d[mid];
  const double lower = *std::max_element(d.begin(), d.begin() + mid);
  return 0.5 * (lower + upper);
}

inline double median_resolution(const PointCloud& c) {
  if (c.size() < 2) throw TooFewPoints("median resolution needs at least 2 points");
  return median_resolution(c, NearestNeighborIndex(c));
}

// Bounding-box diagonal.
inline double diameter(const PointCloud& c) {
  Vector3 lo = c[0], hi = c[0];
  for (const Vector3& p : c) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

}  // namespace mvreg
