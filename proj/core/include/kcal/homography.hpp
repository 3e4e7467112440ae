#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

namespace kcal {

/// Invertible 3x3 projective map, stored with h(2,2) = 1.
///
/// Throughout the library H maps rectified-plane coordinates to scene pixel
/// coordinates (x = column, y = row); H.inverse() rectifies.
class Homography {
 public:
  Homography() : h_(Eigen::Matrix3d::Identity()) {}

  /// Normalizes to h(2,2) = 1. Throws DegeneracyError when h(2,2) vanishes
  /// or the matrix is singular.
  static Homography from_matrix(const Eigen::Matrix3d& m);
  static Homography from_row_major(const std::array<double, 9>& values);
  static Homography translation(double tx, double ty);

  const Eigen::Matrix3d& matrix() const noexcept { return h_; }
  std::array<double, 9> row_major() const;

  Homography inverse() const;
  /// (a * b).apply(p) == a.apply(b.apply(p)).
  Homography operator*(const Homography& rhs) const;

  /// Dehomogenized image of p. Throws InfinityError on the line at infinity.
  Eigen::Vector2d apply(const Eigen::Vector2d& p) const;

 private:
  explicit Homography(const Eigen::Matrix3d& m) : h_(m) {}
  Eigen::Matrix3d h_;
};

inline Eigen::Vector2d apply_homography(const Homography& h, const Eigen::Vector2d& p) { return h.apply(p); }

struct Correspondence {
  Eigen::Vector2d scene;
  Eigen::Vector2d plane;
};

using CorrespondenceSet = std::vector<Correspondence>;

/// Direct Linear Transform: the H with scene ~ H * plane that minimizes the
/// algebraic residual. With `precondition`, both point sets are first moved to
/// zero centroid and RMS distance sqrt(2); the conditioning is undone on the
/// result. Throws DegeneracyError for rank-deficient configurations.
Homography estimate_homography_dlt(const CorrespondenceSet& correspondences, bool precondition = true);

}  // namespace kcal
