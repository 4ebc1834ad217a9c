// Text formats: motion graphs, global motions and the CSV reports.
//
// Scan numbers in every file are 1-based. Numbers are written with 17
// significant digits in the classic locale so they read back bit-identically.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <locale>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mvreg/cloud.hpp"
#include "mvreg/error.hpp"
#include "mvreg/graph.hpp"
#include "mvreg/lie.hpp"
#include "mvreg/overlap.hpp"
#include "mvreg/pipeline.hpp"
#include "mvreg/synth.hpp"

namespace mvreg {

namespace io_detail {

inline void prepare(std::ostream& out) {
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
}

inline std::string context(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

// Splits a non-comment line into numbers; returns false for blank/comment lines.
inline bool parse_numbers(const std::string& line, const std::string& where, std::vector<double>& out) {
  out.clear();
  const auto fields = cloud_detail::split_ws(line);
  if (fields.empty() || fields.front().front() == '#') return false;
  for (std::string_view f : fields) out.push_back(cloud_detail::parse_number(f, where.substr(0, where.size() - 2)));
  return true;
}

inline std::size_t scan_number(double v, std::size_t n_scans, const std::string& where) {
  if (v != std::floor(v) || v < 1.0 || (n_scans > 0 && v > static_cast<double>(n_scans)))
    throw ParseError(where + "invalid scan number " + std::to_string(v));
  return static_cast<std::size_t>(v) - 1;
}

inline void write_row_3x4(std::ostream& out, const RigidMotion& m) {
  const Matrix4 a = m.matrix();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) out << ' ' << a(r, c);
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return in;
}

}  // namespace io_detail

// One edge per line: "i j w m00 m01 m02 m03 m10 ... m23".
inline void write_motion_graph(std::ostream& out, const MotionGraph& graph) {
  io_detail::prepare(out);
  for (const MotionEdge& e : graph.edges) {
    out << e.i + 1 << ' ' << e.j + 1 << ' ' << e.weight;
    io_detail::write_row_3x4(out, e.motion);
    out << '\n';
  }
}

// The scan count is the largest scan number seen unless given explicitly.
inline MotionGraph read_motion_graph(std::istream& in, const std::string& source = "<stream>",
                                     std::size_t n_scans = 0) {
  MotionGraph graph{n_scans, {}};
  std::string line;
  std::vector<double> v;
  std::size_t max_scan = 0;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    const std::string where = io_detail::context(source, no);
    if (!io_detail::parse_numbers(line, where, v)) continue;
    if (v.size() != 15) throw ParseError(where + "expected 15 fields, found " + std::to_string(v.size()));
    const std::size_t i = io_detail::scan_number(v[0], n_scans, where);
    const std::size_t j = io_detail::scan_number(v[1], n_scans, where);
    Matrix3 r;
    Vector3 t;
    for (int row = 0; row < 3; ++row) {
      for (int c = 0; c < 3; ++c) r(row, c) = v[3 + 4 * row + c];
      t(row) = v[3 + 4 * row + 3];
    }
    RigidMotion m;
    try {
      m = RigidMotion(r, t);
    } catch (const InvalidMotion& e) {
      throw ParseError(where + e.what());
    }
    graph.edges.push_back({i, j, m, v[2]});
    max_scan = std::max({max_scan, i + 1, j + 1});
  }
  if (n_scans == 0) graph.n_scans = max_scan;
  return graph;
}

inline void save_motion_graph(const std::string& path, const MotionGraph& graph) {
  auto out = io_detail::open_output(path);
  write_motion_graph(out, graph);
}

inline MotionGraph load_motion_graph(const std::string& path, std::size_t n_scans = 0) {
  auto in = io_detail::open_input(path);
  return read_motion_graph(in, path, n_scans);
}

// Per scan: a "scan k" line followed by the four rows of its 4x4 matrix.
inline void write_global_motions(std::ostream& out, const GlobalMotions& motions) {
  io_detail::prepare(out);
  for (std::size_t k = 0; k < motions.size(); ++k) {
    out << "scan " << k + 1 << '\n';
    const Matrix4 a = motions[k].matrix();
    for (int r = 0; r < 4; ++r) out << a(r, 0) << ' ' << a(r, 1) << ' ' << a(r, 2) << ' ' << a(r, 3) << '\n';
  }
}

inline GlobalMotions read_global_motions(std::istream& in, const std::string& source = "<stream>") {
  std::vector<RigidMotion> motions;
  std::string line;
  std::vector<double> v;
  std::vector<double> rows;
  std::size_t expected = 0;
  std::size_t block_line = 0;
  auto finish = [&](std::size_t no) {
    if (expected == 0) return;
    const std::string where = io_detail::context(source, block_line);
    if (rows.size() != 16)
      throw ParseError(io_detail::context(source, no) + "scan " + std::to_string(expected) + " needs 4 rows of 4 numbers");
    Matrix4 a;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) a(r, c) = rows[static_cast<std::size_t>(4 * r + c)];
    if (a.row(3) != Eigen::RowVector4d(0, 0, 0, 1)) throw ParseError(where + "last row must be 0 0 0 1");
    try {
      motions.push_back(RigidMotion(a.topLeftCorner<3, 3>(), a.topRightCorner<3, 1>()));
    } catch (const InvalidMotion& e) {
      throw ParseError(where + e.what());
    }
    rows.clear();
  };
  std::size_t no = 1;
  for (; std::getline(in, line); ++no) {
    const auto fields = cloud_detail::split_ws(line);
    if (fields.empty() || fields.front().front() == '#') continue;
    if (fields.front() == "scan") {
      finish(no);
      if (fields.size() != 2 || fields[1] != std::to_string(motions.size() + 1))
        throw ParseError(io_detail::context(source, no) + "expected 'scan " + std::to_string(motions.size() + 1) + "'");
      expected = motions.size() + 1;
      block_line = no;
      continue;
    }
    if (expected == 0) throw ParseError(io_detail::context(source, no) + "matrix row before any 'scan' line");
    io_detail::parse_numbers(line, io_detail::context(source, no), v);
    if (v.size() != 4) throw ParseError(io_detail::context(source, no) + "expected 4 numbers per row");
    rows.insert(rows.end(), v.begin(), v.end());
  }
  finish(no);
  if (motions.empty()) throw ParseError(source + ": no motions found");
  return GlobalMotions(std::move(motions));
}

inline void save_global_motions(const std::string& path, const GlobalMotions& motions) {
  auto out = io_detail::open_output(path);
  write_global_motions(out, motions);
}

inline GlobalMotions load_global_motions(const std::string& path) {
  auto in = io_detail::open_input(path);
  return read_global_motions(in, path);
}

// Per outer iteration. Wall-clock times go to write_timings_csv so this file
// is identical across repeated runs.
inline void write_report_csv(std::ostream& out, const RegistrationReport& report) {
  io_detail::prepare(out);
  out << "iteration,objective,step_norm,n_edges\n";
  for (const IterationRecord& r : report.iterations)
    out << r.iteration << ',' << r.objective << ',' << r.step_norm << ',' << r.n_edges << '\n';
}

inline void write_timings_csv(std::ostream& out, const RegistrationReport& report) {
  io_detail::prepare(out);
  out << "iteration,seconds,overlap_seconds,pairwise_seconds,averaging_seconds\n";
  for (const IterationRecord& r : report.iterations)
    out << r.iteration << ',' << r.seconds << ',' << r.overlap_seconds << ',' << r.pairwise_seconds << ','
        << r.averaging_seconds << '\n';
}

// Per-edge values of every outer iteration.
inline void write_edges_csv(std::ostream& out, const RegistrationReport& report) {
  io_detail::prepare(out);
  out << "iteration,i,j,xi,weight,psi\n";
  for (const IterationRecord& r : report.iterations)
    for (const EdgeRecord& e : r.edges)
      out << r.iteration << ',' << e.i + 1 << ',' << e.j + 1 << ',' << e.xi << ',' << e.weight << ',' << e.psi << '\n';
}

// N x N, row-major; the first column and the header carry scan numbers.
inline void write_overlap_csv(std::ostream& out, const OverlapMatrix& overlaps) {
  io_detail::prepare(out);
  const std::size_t n = overlaps.size();
  out << "scan";
  for (std::size_t j = 0; j < n; ++j) out << ',' << j + 1;
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    out << i + 1;
    for (std::size_t j = 0; j < n; ++j)
      out << ',' << overlaps.xi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    out << '\n';
  }
}

// Failed trials carry nan values and converged = 0.
inline void write_mc_csv(std::ostream& out, const McReport& report) {
  io_detail::prepare(out);
  out << "level,trial,objective,mean_rot_err_deg,mean_trans_err,converged\n";
  for (const McTrial& t : report.trials) {
    out << t.level << ',' << t.trial << ',';
    if (t.failed)
      out << "nan,nan,nan,0\n";
    else
      out << t.objective << ',' << t.mean_rot_err_deg << ',' << t.mean_trans_err << ',' << (t.converged ? 1 : 0)
          << '\n';
  }
}

inline void write_mc_timings_csv(std::ostream& out, const McReport& report) {
  io_detail::prepare(out);
  out << "level,trial,seconds\n";
  for (const McTrial& t : report.trials) out << t.level << ',' << t.trial << ',' << t.seconds << '\n';
}

inline void write_mc_summary_csv(std::ostream& out, const McReport& report) {
  io_detail::prepare(out);
  out << "mode,level,trials,failures,mean_objective,std_objective,mean_rot_err_deg,std_rot_err_deg,"
         "mean_trans_err,std_trans_err\n";
  for (const McLevelSummary& s : report.levels)
    out << to_string(report.mode) << ',' << s.level << ',' << s.trials << ',' << s.failures << ',' << s.mean_objective
        << ',' << s.std_objective << ',' << s.mean_rot_err_deg << ',' << s.std_rot_err_deg << ','
        << s.mean_trans_err << ',' << s.std_trans_err << '\n';
}

template <class Writer, class Value>
void save_with(const std::string& path, Writer&& writer, const Value& value) {
  auto out = io_detail::open_output(path);
  writer(out, value);
  if (!out) throw ParseError("failed writing '" + path + "'");
}

}  // namespace mvreg
