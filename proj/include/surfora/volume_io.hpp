#pragma once

#include "surfora/grid.hpp"

#include <string>

namespace surfora {

/// MRC2014 modes understood by the reader.
enum class MrcMode : int { Int8 = 0, Int16 = 1, Float32 = 2, UInt16 = 6 };

/// Reads MRC2014 (modes 0, 1, 2, 6) into a label grid. Voxel size comes from
/// CELLA / MX (Angstrom, converted to nm). Float data is rounded to the nearest
/// integer label; negative values are rejected.
VoxelGrid read_mrc_labels(const std::string& path);

/// Reads any supported MRC mode as a real-valued field.
ScalarField read_mrc_field(const std::string& path);

/// Writes labels as mode 0 when they fit in a signed byte, otherwise mode 6.
void write_mrc_labels(const std::string& path, const VoxelGrid& grid);

/// Writes a field as mode 2 (float32).
void write_mrc_field(const std::string& path, const ScalarField& field);

/// Raw little-endian volume with a UTF-8 key=value sidecar at `path + ".hdr"`:
///   dims = nx ny nz
///   dtype = u8 | u16 | f32
///   voxel_size_nm = sx [sy sz]
///   origin_nm = ox oy oz
VoxelGrid read_raw_labels(const std::string& path);
ScalarField read_raw_field(const std::string& path);
void write_raw_labels(const std::string& path, const VoxelGrid& grid);
void write_raw_field(const std::string& path, const ScalarField& field);

/// Dispatches on extension: .mrc/.rec/.map/.mrcs -> MRC, anything else raw+sidecar.
VoxelGrid read_volume(const std::string& path);
void write_volume(const std::string& path, const VoxelGrid& grid);
ScalarField read_field(const std::string& path);
void write_field(const std::string& path, const ScalarField& field);

}  // namespace surfora
