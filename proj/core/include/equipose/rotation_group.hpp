#pragma once

#include <Eigen/Geometry>
#include <string>
#include <vector>

#include "equipose/geometry.hpp"

namespace equipose::geom {

/// A finite rotation group: orthonormal elements with the identity first, a
/// Cayley composition table, and derived structure (inverses, rotation
/// angles, one-hop neighborhoods at the minimal nonzero rotation angle).
struct RotationGroup {
  std::vector<Mat3> elements;
  std::vector<std::vector<int>> cayley;  // cayley[a][b] = index of elements[a]*elements[b]
  std::vector<int> inverse;
  std::vector<double> angles;            // rotation angle of each element
  std::vector<std::vector<int>> hop;     // neighbors of g at the minimal angle (g excluded)
  std::string name;

  std::size_t size() const { return elements.size(); }
  int compose(int a, int b) const { return cayley[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]; }
  /// Index of h^-1 * g * h.
  int conjugate(int g, int h) const;
  Eigen::Quaterniond quaternion(int g) const;

  /// Verifies orthonormality, Latin-square structure, closure and identity
  /// placement; throws on violation.
  void validate() const;
};

/// The 60-element rotational symmetry group of the icosahedron,
/// deterministically ordered with the identity at index 0.
const RotationGroup& icosahedral_group();

/// The 12-element rotational symmetry group of the tetrahedron; a cheap
/// stand-in for fast tests and desk-scale training.
const RotationGroup& tetrahedral_group();

/// The one-element group (identity only).
const RotationGroup& trivial_group();

const RotationGroup& group_by_name(const std::string& name);

}  // namespace equipose::geom
