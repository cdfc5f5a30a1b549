#pragma once

#include "agriscan/geometry.hpp"

#include <vector>

namespace agriscan {

struct BpaStats {
  std::size_t seeds = 0;
  std::size_t triangles = 0;
  std::size_t border_edges = 0;
};

/// Ball-pivoting surface reconstruction with one pass per radius (ascending).
/// The cloud must carry unit normals; the output reuses the input points as
/// vertices (unreferenced points stay as isolated vertices) and no edge is
/// shared by more than two triangles.
TriangleMesh reconstruct_surface_bpa(const PointCloud& cloud, const std::vector<double>& radii,
                                     BpaStats* stats = nullptr);

/// Radii {2, 4, 8} x median nearest-neighbor spacing.
std::vector<double> default_bpa_radii(const PointCloud& cloud);

/// Sum of triangle areas in cm^2.
double leaf_area(const TriangleMesh& mesh);

}  // namespace agriscan
