#include "equipose/rotation_group.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "equipose/common.hpp"

namespace equipose::geom {
namespace {

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

int find_element(const std::vector<Mat3>& elems, const Mat3& m, double tol) {
  for (std::size_t i = 0; i < elems.size(); ++i) {
    if ((elems[i] - m).cwiseAbs().maxCoeff() <= tol) return static_cast<int>(i);
  }
  return -1;
}

// Nearest rotation matrix (polar factor); keeps products clean after deep
// generator chains.
Mat3 polish(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

RotationGroup close_group(const std::vector<Mat3>& generators, std::size_t expect,
                          const std::string& name) {
  std::vector<Mat3> elems;
  elems.push_back(Mat3::Identity());
  // Breadth-first closure in a fixed order: deterministic element indexing.
  for (std::size_t head = 0; head < elems.size(); ++head) {
    for (const Mat3& g : generators) {
      const Mat3 prod = polish(elems[head] * g);
      if (find_element(elems, prod, 1e-6) < 0) elems.push_back(prod);
      EQP_REQUIRE(elems.size() <= expect, "group closure exceeded expected order");
    }
  }
  EQP_REQUIRE(elems.size() == expect, "group closure: wrong order for " + name);

  RotationGroup grp;
  grp.name = name;
  grp.elements = std::move(elems);
  const std::size_t n = grp.elements.size();
  grp.cayley.assign(n, std::vector<int>(n, -1));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const Mat3 prod = grp.elements[a] * grp.elements[b];
      const int idx = find_element(grp.elements, prod, 1e-8);
      EQP_REQUIRE(idx >= 0, "group closure: product escaped the element set");
      grp.cayley[a][b] = idx;
    }
  }
  grp.inverse.assign(n, -1);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (grp.cayley[a][b] == 0) {
        grp.inverse[a] = static_cast<int>(b);
        break;
      }
    }
    EQP_REQUIRE(grp.inverse[a] >= 0, "group: missing inverse");
  }
  grp.angles.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    const double c = std::clamp((grp.elements[a].trace() - 1.0) / 2.0, -1.0, 1.0);
    grp.angles[a] = std::acos(c);
  }
  double min_nonzero = 4.0;
  for (std::size_t a = 1; a < n; ++a) min_nonzero = std::min(min_nonzero, grp.angles[a]);
  grp.hop.assign(n, {});
  if (n > 1) {
    // hop(g) = { g' != g : angle(g^-1 g') == minimal nonzero angle }
    std::vector<int> hop_rel;
    for (std::size_t v = 1; v < n; ++v)
      if (grp.angles[v] <= min_nonzero + 1e-9) hop_rel.push_back(static_cast<int>(v));
    for (std::size_t g = 0; g < n; ++g)
      for (int v : hop_rel) grp.hop[g].push_back(grp.cayley[g][static_cast<std::size_t>(v)]);
  }
  grp.validate();
  return grp;
}

}  // namespace

int RotationGroup::conjugate(int g, int h) const {
  const int hi = inverse[static_cast<std::size_t>(h)];
  return compose(compose(hi, g), h);
}

Eigen::Quaterniond RotationGroup::quaternion(int g) const {
  Eigen::Quaterniond q(elements[static_cast<std::size_t>(g)]);
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  return q;
}

void RotationGroup::validate() const {
  const std::size_t n = elements.size();
  EQP_REQUIRE(n >= 1, "group: empty");
  EQP_REQUIRE((elements[0] - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-12,
              "group: element 0 must be the identity");
  for (std::size_t a = 0; a < n; ++a) {
    const Mat3& r = elements[a];
    EQP_REQUIRE((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-12,
                "group: element not orthonormal");
    EQP_REQUIRE(std::abs(r.determinant() - 1.0) <= 1e-12,
                "group: element determinant != 1");
  }
  // Latin square + closure.
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<bool> seen_row(n, false), seen_col(n, false);
    for (std::size_t b = 0; b < n; ++b) {
      const int rc = cayley[a][b];
      const int cc = cayley[b][a];
      EQP_REQUIRE(rc >= 0 && static_cast<std::size_t>(rc) < n, "group: bad cayley entry");
      EQP_REQUIRE(!seen_row[static_cast<std::size_t>(rc)], "group: cayley row repeats");
      EQP_REQUIRE(!seen_col[static_cast<std::size_t>(cc)], "group: cayley column repeats");
      seen_row[static_cast<std::size_t>(rc)] = true;
      seen_col[static_cast<std::size_t>(cc)] = true;
      const Mat3 prod = elements[a] * elements[b];
      EQP_REQUIRE((elements[static_cast<std::size_t>(rc)] - prod).cwiseAbs().maxCoeff() <= 1e-10,
                  "group: closure violated");
    }
  }
}

const RotationGroup& icosahedral_group() {
  static const RotationGroup grp = [] {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    // Vertex (0, 1, phi) carries a 5-fold axis; (0, 0, 1) is a 2-fold axis
    // (edge midpoint between (0, +-1, phi)).
    const Vec3 five(0.0, 1.0, phi);
    const Vec3 two(0.0, 0.0, 1.0);
    std::vector<Mat3> gens = {axis_angle(five, 2.0 * M_PI / 5.0),
                              axis_angle(two, M_PI)};
    return close_group(gens, 60, "icosahedral");
  }();
  return grp;
}

const RotationGroup& tetrahedral_group() {
  static const RotationGroup grp = [] {
    const Vec3 three(1.0, 1.0, 1.0);
    const Vec3 two(0.0, 0.0, 1.0);
    std::vector<Mat3> gens = {axis_angle(three, 2.0 * M_PI / 3.0),
                              axis_angle(two, M_PI)};
    return close_group(gens, 12, "tetrahedral");
  }();
  return grp;
}

const RotationGroup& trivial_group() {
  static const RotationGroup grp = [] {
    RotationGroup g;
    g.name = "trivial";
    g.elements = {Mat3::Identity()};
    g.cayley = {{0}};
    g.inverse = {0};
    g.angles = {0.0};
    g.hop = {{}};
    g.validate();
    return g;
  }();
  return grp;
}

const RotationGroup& group_by_name(const std::string& name) {
  if (name == "icosahedral" || name == "icosa") return icosahedral_group();
  if (name == "tetrahedral" || name == "tetra") return tetrahedral_group();
  if (name == "trivial") return trivial_group();
  fail("unknown rotation group: " + name);
}

}  // namespace equipose::geom
