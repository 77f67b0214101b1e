#pragma once

#include <string>

#include "equipose/geometry.hpp"

namespace equipose::io {

/// ASCII PLY with properties x,y,z[,nx,ny,nz,red,green,blue]. Colors are
/// written as float in [0,1]; uchar colors are accepted on load and scaled
/// by 1/255.
void save_ply(const geom::PointCloud& cloud, const std::string& path);
geom::PointCloud load_ply(const std::string& path);

/// Little-endian binary cloud: magic "EPC1", u32 N, u32 channel mask
/// (1 = coords, 2 = normals, 4 = colors, 8 = features), u32 feature width
/// when bit 3 is set, then f32 channel blocks in mask order, row-major.
void save_epc1(const geom::PointCloud& cloud, const std::string& path);
geom::PointCloud load_epc1(const std::string& path);

/// Writes via a temp file in the same directory and renames into place.
void atomic_write_text(const std::string& path, const std::string& contents);

}  // namespace equipose::io
