#include "equipose/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "equipose/common.hpp"

namespace equipose::geom {

void PointCloud::validate() const {
  EQP_REQUIRE(coords.allFinite(), "point cloud: non-finite coordinates");
  if (normals) {
    EQP_REQUIRE(normals->rows() == coords.rows(), "point cloud: normals row mismatch");
    EQP_REQUIRE(normals->allFinite(), "point cloud: non-finite normals");
    for (Eigen::Index i = 0; i < normals->rows(); ++i) {
      EQP_REQUIRE(std::abs(normals->row(i).norm() - 1.0) <= 1e-6,
                  "point cloud: normal row is not unit length");
    }
  }
  if (colors) {
    EQP_REQUIRE(colors->rows() == coords.rows(), "point cloud: colors row mismatch");
    EQP_REQUIRE(colors->allFinite(), "point cloud: non-finite colors");
  }
  if (features) {
    EQP_REQUIRE(features->rows() == coords.rows(),
                "point cloud: feature row count must equal point count");
    EQP_REQUIRE(features->allFinite(), "point cloud: non-finite features");
  }
}

Vec3 PointCloud::centroid() const {
  EQP_REQUIRE(coords.rows() > 0, "centroid: empty cloud");
  return coords.colwise().mean();
}

PointCloud PointCloud::translated(const Vec3& v) const {
  PointCloud out = *this;
  out.coords.rowwise() += v.transpose();
  return out;
}

PointCloud PointCloud::rotated(const Mat3& r) const {
  PointCloud out = *this;
  out.coords = (r * coords.transpose()).transpose();
  if (out.normals) out.normals = (r * normals->transpose()).transpose();
  return out;
}

Pose Pose::from_wxyz(double w, double x, double y, double z, const Vec3& t) {
  Pose p;
  p.rotation = Eigen::Quaterniond(w, x, y, z);
  const double n = p.rotation.norm();
  EQP_REQUIRE(n > 1e-12, "pose: zero quaternion");
  p.rotation.coeffs() /= n;
  p.translation = t;
  p.canonicalize();
  return p;
}

void Pose::canonicalize() {
  rotation.normalize();
  const double w = rotation.w();
  bool flip = w < 0.0;
  if (w == 0.0) {
    if (rotation.x() != 0.0)
      flip = rotation.x() < 0.0;
    else if (rotation.y() != 0.0)
      flip = rotation.y() < 0.0;
    else
      flip = rotation.z() < 0.0;
  }
  if (flip) rotation.coeffs() = -rotation.coeffs();
}

Scale Scale::of(double v, const Vec3& canonical_extents) {
  Scale s;
  s.value = v;
  s.extents = v * canonical_extents;
  s.validate();
  return s;
}

void Scale::validate() const {
  EQP_REQUIRE(value > 0.0, "scale: value must be positive");
  EQP_REQUIRE((extents.array() > 0.0).all(), "scale: extents must be positive");
}

Mat3 quat_to_matrix(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  EQP_REQUIRE(n > 1e-12, "quat_to_matrix: zero quaternion");
  EQP_REQUIRE(std::abs(n - 1.0) <= 1e-6, "quat_to_matrix: quaternion not unit");
  Eigen::Quaterniond q(w / n, x / n, y / n, z / n);
  return q.toRotationMatrix();
}

double quat_geodesic(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const double d = std::min(1.0, std::abs(a.coeffs().dot(b.coeffs())));
  return 2.0 * std::acos(d);
}

Points apply_pose(const Points& points, const Pose& pose, const Scale& scale) {
  EQP_REQUIRE(points.allFinite(), "apply_pose: non-finite input");
  EQP_REQUIRE(scale.value > 0.0, "apply_pose: scale must be positive");
  const Mat3 r = pose.matrix();
  Points out = (scale.value * (r * points.transpose())).transpose();
  out.rowwise() += pose.translation.transpose();
  return out;
}

namespace {

double min_sq_dist_to(const Points& pts, const Eigen::RowVector3d& x) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    best = std::min(best, (pts.row(i) - x).squaredNorm());
  return best;
}

}  // namespace

double chamfer(const Points& a, const Points& b) {
  EQP_REQUIRE(a.rows() > 0 && b.rows() > 0, "chamfer: empty point set");
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) total += min_sq_dist_to(b, a.row(i));
  for (Eigen::Index j = 0; j < b.rows(); ++j) total += min_sq_dist_to(a, b.row(j));
  return total;
}

std::vector<std::vector<int>> knn(const Matrix& query, const Matrix& reference,
                                  int k) {
  EQP_REQUIRE(query.cols() == reference.cols(), "knn: width mismatch");
  EQP_REQUIRE(k >= 1 && k <= reference.rows(), "knn: k out of range");
  const Eigen::Index m = query.rows();
  const Eigen::Index n = reference.rows();
  std::vector<std::vector<int>> out(static_cast<std::size_t>(m));
  std::vector<std::pair<double, int>> cand(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      cand[static_cast<std::size_t>(j)] = {
          (reference.row(j) - query.row(i)).squaredNorm(), static_cast<int>(j)};
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    auto& row = out[static_cast<std::size_t>(i)];
    row.resize(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) row[static_cast<std::size_t>(t)] = cand[static_cast<std::size_t>(t)].second;
  }
  return out;
}

std::vector<std::vector<int>> radius_search(const Points& query,
                                            const Points& reference,
                                            double radius) {
  const double r2 = radius * radius;
  std::vector<std::vector<int>> out(static_cast<std::size_t>(query.rows()));
  for (Eigen::Index i = 0; i < query.rows(); ++i) {
    for (Eigen::Index j = 0; j < reference.rows(); ++j) {
      if ((reference.row(j) - query.row(i)).squaredNorm() <= r2)
        out[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
    }
  }
  return out;
}

std::vector<int> farthest_point_indices(const Points& pts, std::size_t m) {
  const std::size_t n = static_cast<std::size_t>(pts.rows());
  EQP_REQUIRE(m >= 1 && m <= n, "farthest_point_indices: bad subset size");
  std::vector<int> picked;
  picked.reserve(m);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  int cur = 0;
  picked.push_back(cur);
  for (std::size_t step = 1; step < m; ++step) {
    double best = -1.0;
    int best_i = -1;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (pts.row(static_cast<Eigen::Index>(i)) - pts.row(cur)).squaredNorm();
      dist[i] = std::min(dist[i], d);
      if (dist[i] > best) {
        best = dist[i];
        best_i = static_cast<int>(i);
      }
    }
    cur = best_i;
    picked.push_back(cur);
  }
  return picked;
}

double nn_distance_percentile(const Points& pts, double pct) {
  const Eigen::Index n = pts.rows();
  EQP_REQUIRE(n >= 2, "nn_distance_percentile: need at least two points");
  std::vector<double> nn(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      best = std::min(best, (pts.row(i) - pts.row(j)).squaredNorm());
    }
    nn[static_cast<std::size_t>(i)] = std::sqrt(best);
  }
  std::sort(nn.begin(), nn.end());
  const double idx = pct / 100.0 * static_cast<double>(nn.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
  const std::size_t hi = std::min(lo + 1, nn.size() - 1);
  const double f = idx - static_cast<double>(lo);
  return nn[lo] * (1.0 - f) + nn[hi] * f;
}

}  // namespace equipose::geom
