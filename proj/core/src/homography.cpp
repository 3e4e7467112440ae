#include "kcal/homography.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <cmath>
#include <string>

#include "kcal/error.hpp"
#include "kcal/linalg.hpp"

namespace kcal {

namespace {

constexpr double kMinCorner = 1e-12;

// Similarity moving `points` to zero centroid and RMS distance sqrt(2).
Eigen::Matrix3d conditioning(const std::vector<Eigen::Vector2d>& points) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  double ms = 0;
  for (const auto& p : points) ms += (p - centroid).squaredNorm();
  const double rms = std::sqrt(ms / static_cast<double>(points.size()));
  if (rms <= 0) throw DegeneracyError("homography: all points coincide");
  const double s = std::sqrt(2.0) / rms;
  Eigen::Matrix3d t;
  t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return t;
}

Eigen::Vector2d transform(const Eigen::Matrix3d& t, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = t * p.homogeneous();
  return q.hnormalized();
}

}  // namespace

Homography Homography::from_matrix(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) throw DegeneracyError("homography: non-finite entries");
  if (std::abs(m(2, 2)) < kMinCorner * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    throw DegeneracyError("homography: h[2][2] vanishes, cannot normalize");
  }
  const Eigen::Matrix3d n = m / m(2, 2);
  const double det = n.determinant();
  if (!(std::abs(det) > 1e-14 * std::pow(n.cwiseAbs().maxCoeff(), 3))) {
    throw DegeneracyError("homography: matrix is singular");
  }
  return Homography(n);
}

Homography Homography::from_row_major(const std::array<double, 9>& v) {
  Eigen::Matrix3d m;
  m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
  return from_matrix(m);
}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

std::array<double, 9> Homography::row_major() const {
  return {h_(0, 0), h_(0, 1), h_(0, 2), h_(1, 0), h_(1, 1), h_(1, 2), h_(2, 0), h_(2, 1), h_(2, 2)};
}

Homography Homography::inverse() const { return from_matrix(h_.inverse()); }

Homography Homography::operator*(const Homography& rhs) const { return from_matrix(h_ * rhs.h_); }

Eigen::Vector2d Homography::apply(const Eigen::Vector2d& p) const {
  const Eigen::Vector3d q = h_ * p.homogeneous();
  const double scale = std::abs(h_(2, 0) * p.x()) + std::abs(h_(2, 1) * p.y()) + std::abs(h_(2, 2));
  if (std::abs(q.z()) <= 1e-12 * scale) {
    throw InfinityError("homography maps (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                        ") to the line at infinity");
  }
  return q.hnormalized();
}

Homography estimate_homography_dlt(const CorrespondenceSet& c, bool precondition) {
  if (c.size() < 4) {
    throw DegeneracyError("DLT needs at least 4 correspondences, got " + std::to_string(c.size()));
  }
  std::vector<Eigen::Vector2d> scene, plane;
  for (const auto& pair : c) {
    scene.push_back(pair.scene);
    plane.push_back(pair.plane);
  }
  const Eigen::Matrix3d ts = precondition ? conditioning(scene) : Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d tp = precondition ? conditioning(plane) : Eigen::Matrix3d::Identity();

  // Accumulate A^T A of the 2n x 9 design matrix directly.
  Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Eigen::Vector2d x = transform(tp, plane[i]);
    const Eigen::Vector2d xp = transform(ts, scene[i]);
    Eigen::Matrix<double, 9, 1> r1, r2;
    r1 << -x.x(), -x.y(), -1, 0, 0, 0, xp.x() * x.x(), xp.x() * x.y(), xp.x();
    r2 << 0, 0, 0, -x.x(), -x.y(), -1, xp.y() * x.x(), xp.y() * x.y(), xp.y();
    ata += r1 * r1.transpose() + r2 * r2.transpose();
  }

  const SymmetricEigen eig = symmetric_eigen(ata);
  const double largest = eig.values(8);
  if (!(largest > 0) || eig.values(1) <= 1e-10 * largest) {
    throw DegeneracyError("DLT design matrix is rank deficient (collinear or repeated points)");
  }
  const Eigen::VectorXd h = eig.vectors.col(0);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d m = ts.inverse() * hn * tp;
  return Homography::from_matrix(m);
}

}  // namespace kcal
