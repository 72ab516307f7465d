#pragma once

#include "surfora/mesh.hpp"
#include "surfora/point_cloud.hpp"

#include <string>

namespace surfora {

enum class PlyFormat { Ascii, BinaryLittleEndian };

/// Vertex properties: x y z (double), nx ny nz (double) when normals are
/// present, then one float property per channel; faces as uchar/int lists.
void write_ply(const std::string& path, const TriangleMesh& mesh, PlyFormat format = PlyFormat::BinaryLittleEndian);

/// Cloud variant: adds a uint "label" property when labels are present.
void write_ply(const std::string& path, const PointCloud& cloud, PlyFormat format = PlyFormat::BinaryLittleEndian);

/// Reads ASCII or binary little-endian PLY. Unknown vertex properties become channels.
TriangleMesh read_ply_mesh(const std::string& path);
PointCloud read_ply_cloud(const std::string& path);

/// Geometry only.
void write_obj(const std::string& path, const TriangleMesh& mesh);
TriangleMesh read_obj(const std::string& path);

/// One point per line: x y z [nx ny nz] [label].
void write_xyz(const std::string& path, const PointCloud& cloud);
PointCloud read_xyz(const std::string& path);

/// Any supported cloud file (.ply, .xyz); mesh PLY files yield their vertices.
PointCloud read_cloud(const std::string& path);
void write_cloud(const std::string& path, const PointCloud& cloud);
TriangleMesh read_mesh(const std::string& path);
void write_mesh(const std::string& path, const TriangleMesh& mesh);

}  // namespace surfora
