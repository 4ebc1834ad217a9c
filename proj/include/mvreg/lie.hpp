// SE(3) group and se(3) algebra operations.
//
// A RigidMotion maps a point p to R*p + t. Twists are stored as an axis-angle
// rotation vector `omega` plus a translational part `nu`; their coordinate
// vector (mat2vec / vec2mat) uses the fixed ordering
//
//   [W(1,0), W(2,0), W(2,1), u0, u1, u2]
//
// where W is the skew-symmetric upper-left block of the 4x4 algebra element
// and u its last column. With omega = (wx, wy, wz) this is
// [wz, -wy, wx, u0, u1, u2]. The ordering is a signed permutation, so the
// Euclidean norm of the coordinates equals the norm of (omega, nu).
#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "mvreg/error.hpp"

namespace mvreg {

using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;
using Matrix4 = Eigen::Matrix4d;

namespace lie_detail {

inline constexpr double kOrthoTolerance = 1e-9;
inline constexpr double kSmallAngle = 1e-8;
inline constexpr double kPiMargin = 1e-6;

inline double orthonormality_error(const Matrix3& r) {
  return (r.transpose() * r - Matrix3::Identity()).cwiseAbs().maxCoeff();
}

// Nearest rotation in the Frobenius sense (polar factor of r).
inline Matrix3 nearest_rotation(const Matrix3& r) {
  Eigen::JacobiSVD<Matrix3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 d = Matrix3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace lie_detail

inline Matrix3 skew(const Vector3& w) {
  Matrix3 s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return s;
}

inline Vector3 unskew(const Matrix3& s) { return {s(2, 1), s(0, 2), s(1, 0)}; }

struct Twist {
  Vector3 omega = Vector3::Zero();
  Vector3 nu = Vector3::Zero();

  static Twist zero() { return {}; }

  // Coordinates in the [W10, W20, W21, u0, u1, u2] ordering.
  Vector6 coords() const {
    Vector6 v;
    v << omega.z(), -omega.y(), omega.x(), nu.x(), nu.y(), nu.z();
    return v;
  }

  static Twist from_coords(const Vector6& v) {
    Twist t;
    t.omega = Vector3(v(2), -v(1), v(0));
    t.nu = v.tail<3>();
    return t;
  }

  double norm() const { return std::sqrt(omega.squaredNorm() + nu.squaredNorm()); }

  bool all_finite() const { return omega.allFinite() && nu.allFinite(); }

  Twist operator*(double s) const { return {omega * s, nu * s}; }
  Twist operator+(const Twist& o) const { return {omega + o.omega, nu + o.nu}; }
  Twist operator-(const Twist& o) const { return {omega - o.omega, nu - o.nu}; }
  Twist operator-() const { return {-omega, -nu}; }
};

// Element of SE(3). Construction through the public constructor validates
// orthonormality and the determinant to 1e-9.
class RigidMotion {
 public:
  RigidMotion() : rotation_(Matrix3::Identity()), translation_(Vector3::Zero()) {}

  RigidMotion(const Matrix3& rotation, const Vector3& translation)
      : rotation_(rotation), translation_(translation) {
    if (!rotation.allFinite() || !translation.allFinite())
      throw InvalidMotion("rigid motion has non-finite entries");
    const double ortho = lie_detail::orthonormality_error(rotation);
    const double det = rotation.determinant();
    if (ortho > lie_detail::kOrthoTolerance || std::abs(det - 1.0) > lie_detail::kOrthoTolerance) {
      std::ostringstream msg;
      msg << "rotation is not in SO(3): |R^T R - I|max = " << ortho << ", det = " << det;
      throw InvalidMotion(msg.str());
    }
  }

  static RigidMotion identity() { return {}; }

  static RigidMotion from_translation(const Vector3& t) {
    return unchecked(Matrix3::Identity(), t);
  }

  static RigidMotion from_rotation(const Matrix3& r) { return RigidMotion(r, Vector3::Zero()); }

  // Accepts a homogeneous 4x4 matrix; the bottom row must be [0 0 0 1].
  static RigidMotion from_matrix(const Matrix4& m) {
    if ((m.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > lie_detail::kOrthoTolerance)
      throw InvalidMotion("homogeneous matrix bottom row is not [0 0 0 1]");
    return RigidMotion(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
  }

  // Projects `r` onto SO(3) first; for rotations that drifted numerically.
  static RigidMotion from_nearly_orthonormal(const Matrix3& r, const Vector3& t) {
    return unchecked(lie_detail::nearest_rotation(r), t);
  }

  const Matrix3& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }

  Matrix4 matrix() const {
    Matrix4 m = Matrix4::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  Vector3 apply(const Vector3& p) const { return rotation_ * p + translation_; }

  // Skips validation; the caller guarantees `r` is a rotation to rounding error.
  static RigidMotion trusted(const Matrix3& r, const Vector3& t) { return unchecked(r, t); }

  // Re-projects the rotation onto SO(3).
  RigidMotion normalized() const { return from_nearly_orthonormal(rotation_, translation_); }

  friend RigidMotion compose(const RigidMotion& a, const RigidMotion& b);
  friend RigidMotion inverse(const RigidMotion& a);

 private:
  static RigidMotion unchecked(const Matrix3& r, const Vector3& t) {
    RigidMotion m;
    m.rotation_ = r;
    m.translation_ = t;
    return m;
  }

  Matrix3 rotation_;
  Vector3 translation_;
};

// Applies b first, then a. Long chains stay on SO(3): the product is
// re-projected whenever its orthonormality error exceeds 1e-10.
inline RigidMotion compose(const RigidMotion& a, const RigidMotion& b) {
  Matrix3 r = a.rotation_ * b.rotation_;
  Vector3 t = a.rotation_ * b.translation_ + a.translation_;
  if (lie_detail::orthonormality_error(r) > 0.1 * lie_detail::kOrthoTolerance)
    r = lie_detail::nearest_rotation(r);
  return RigidMotion::unchecked(r, t);
}

inline RigidMotion operator*(const RigidMotion& a, const RigidMotion& b) { return compose(a, b); }

inline RigidMotion inverse(const RigidMotion& a) {
  Matrix3 rt = a.rotation_.transpose();
  return RigidMotion::unchecked(rt, -(rt * a.translation_));
}

// 4x4 algebra element from twist coordinates.
inline Matrix4 vec2mat(const Vector6& v) {
  const Twist t = Twist::from_coords(v);
  Matrix4 m = Matrix4::Zero();
  m.topLeftCorner<3, 3>() = skew(t.omega);
  m.topRightCorner<3, 1>() = t.nu;
  return m;
}

inline Vector6 mat2vec(const Matrix4& m) {
  constexpr double tol = 1e-9;
  const Matrix3 w = m.topLeftCorner<3, 3>();
  if ((w + w.transpose()).cwiseAbs().maxCoeff() > tol)
    throw NotSe3("upper-left 3x3 block is not skew-symmetric");
  if (m.row(3).cwiseAbs().maxCoeff() > tol) throw NotSe3("bottom row is not zero");
  Vector6 v;
  v << m(1, 0), m(2, 0), m(2, 1), m(0, 3), m(1, 3), m(2, 3);
  return v;
}

inline RigidMotion exp_map(const Twist& v) {
  const double theta2 = v.omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Matrix3 w = skew(v.omega);
  const Matrix3 w2 = w * w;

  double a, b, c;  // sin(t)/t, (1-cos(t))/t^2, (t-sin(t))/t^3
  if (theta < lie_detail::kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
    c = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    const double s = std::sin(theta);
    const double half_sin = std::sin(0.5 * theta);
    a = s / theta;
    b = 2.0 * half_sin * half_sin / theta2;
    // theta - sin(theta) cancels badly below 1e-3.
    c = theta < 1e-3 ? 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0
                     : (theta - s) / (theta2 * theta);
  }
  const Matrix3 r = Matrix3::Identity() + a * w + b * w2;
  const Matrix3 jac = Matrix3::Identity() + b * w + c * w2;
  if (lie_detail::orthonormality_error(r) > 0.1 * lie_detail::kOrthoTolerance)
    return RigidMotion::from_nearly_orthonormal(r, jac * v.nu);
  return RigidMotion::trusted(r, jac * v.nu);
}

inline Vector3 log_so3(const Matrix3& r) {
  const Vector3 axis2s = unskew(r - r.transpose());  // 2 sin(t) * axis
  const double sin_t = 0.5 * axis2s.norm();
  const double cos_t = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(sin_t, cos_t);

  if (theta > std::numbers::pi - lie_detail::kPiMargin) {
    std::ostringstream msg;
    msg << "rotation angle " << theta << " is within 1e-6 of pi";
    throw AngleNearPi(msg.str());
  }
  if (theta < lie_detail::kSmallAngle) return (0.5 + theta * theta / 12.0) * axis2s;
  if (cos_t > -0.5) return (theta / (2.0 * sin_t)) * axis2s;

  // Obtuse angles: recover the axis from the symmetric part, which stays
  // well conditioned while sin(t) shrinks.
  const Matrix3 sym = 0.5 * (r + r.transpose()) - cos_t * Matrix3::Identity();  // (1-cos) a a^T
  Eigen::Index k;
  sym.diagonal().maxCoeff(&k);
  Vector3 axis = sym.col(k) / std::sqrt(sym(k, k) * (1.0 - cos_t));
  axis.normalize();
  if (axis.dot(axis2s) < 0.0) axis = -axis;
  return theta * axis;
}

inline Twist log_map(const RigidMotion& m) {
  Twist out;
  out.omega = log_so3(m.rotation());
  const double theta2 = out.omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Matrix3 w = skew(out.omega);

  // V^{-1} = I - W/2 + k W^2
  double k;
  if (theta < 1e-3) {
    k = 1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0;
  } else {
    const double half = 0.5 * theta;
    k = (1.0 - half * std::cos(half) / std::sin(half)) / theta2;
  }
  const Matrix3 v_inv = Matrix3::Identity() - 0.5 * w + k * w * w;
  out.nu = v_inv * m.translation();
  return out;
}

// Distance in the Euclidean norm of the twist coordinates of a^-1 * b.
inline double geodesic_distance(const RigidMotion& a, const RigidMotion& b) {
  return log_map(compose(inverse(a), b)).norm();
}

inline double rotation_angle(const Matrix3& r) {
  const double sin_t = 0.5 * unskew(r - r.transpose()).norm();
  const double cos_t = 0.5 * (r.trace() - 1.0);
  return std::atan2(sin_t, cos_t);
}

}  // namespace mvreg
