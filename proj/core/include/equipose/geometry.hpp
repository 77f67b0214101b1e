#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>
#include <vector>

namespace equipose::geom {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// N points in meters plus optional unit normals, colors in [0,1], and a
/// per-point feature matrix of width d.
struct PointCloud {
  Points coords;
  std::optional<Points> normals;
  std::optional<Points> colors;
  std::optional<Matrix> features;

  std::size_t size() const { return static_cast<std::size_t>(coords.rows()); }
  /// Throws on any broken invariant (non-finite entries, non-unit normals,
  /// row-count mismatches).
  void validate() const;

  Vec3 centroid() const;
  PointCloud translated(const Vec3& v) const;
  PointCloud rotated(const Mat3& r) const;  // rotates coords and normals
};

/// Rigid orientation + position. The quaternion is kept unit-norm with a
/// canonical sign (w >= 0; if w == 0, first nonzero of x,y,z positive).
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return Pose{}; }
  static Pose from_wxyz(double w, double x, double y, double z, const Vec3& t);
  void canonicalize();
  Mat3 matrix() const { return rotation.toRotationMatrix(); }
};

/// Uniform scale with derived metric extents (value x canonical bounding-box
/// extents).
struct Scale {
  double value = 1.0;
  Vec3 extents = Vec3::Ones();

  static Scale uniform(double v) { return Scale{v, Vec3::Constant(v)}; }
  static Scale of(double v, const Vec3& canonical_extents);
  void validate() const;
};

/// Converts a quaternion given as (w,x,y,z) to a rotation matrix. q and -q
/// map to the same matrix; the norm must be within 1e-6 of 1 (a zero
/// quaternion is an error).
Mat3 quat_to_matrix(double w, double x, double y, double z);

/// Geodesic angle between two unit quaternions, in radians.
double quat_geodesic(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

/// Similarity transform: each output row is scale.value * R * x + t.
Points apply_pose(const Points& points, const Pose& pose, const Scale& scale);

/// Summed squared bidirectional closest-point distance:
///   sum_{x in A} min_y ||x-y||^2 + sum_{y in B} min_x ||x-y||^2.
/// This is the selection distance; the averaged evaluation metric lives in
/// metrics.hpp.
double chamfer(const Points& a, const Points& b);

/// Row i lists the k nearest reference rows to query row i, ascending by
/// distance, ties broken by smaller index. Works on any common width.
std::vector<std::vector<int>> knn(const Matrix& query, const Matrix& reference,
                                  int k);

/// Indices within radius of each query row, ascending by index.
std::vector<std::vector<int>> radius_search(const Points& query,
                                            const Points& reference, double radius);

/// Deterministic farthest-point subset of size m (seeded at row 0, ties by
/// smaller index). Returns selected indices in selection order.
std::vector<int> farthest_point_indices(const Points& pts, std::size_t m);

/// p-th percentile (0..100) of each point's nearest-neighbor distance.
double nn_distance_percentile(const Points& pts, double pct);

}  // namespace equipose::geom
