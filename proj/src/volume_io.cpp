#include "surfora/volume_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace surfora {

namespace {

constexpr int kHeaderBytes = 1024;
constexpr double kAngstromPerNm = 10.0;

struct MrcHeader {
  std::array<std::int32_t, 3> n{};
  std::int32_t mode = 0;
  std::array<std::int32_t, 3> m{};
  std::array<float, 3> cella{};
  std::array<std::int32_t, 3> map_axes{1, 2, 3};
  std::int32_t nsymbt = 0;
  std::array<float, 3> origin{};
  bool swap = false;
};

template <typename T>
T byteswap_value(T v) {
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  std::reverse(b.begin(), b.end());
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

template <typename T>
T get(const std::array<unsigned char, kHeaderBytes>& h, int offset, bool swap) {
  T v;
  std::memcpy(&v, h.data() + offset, sizeof(T));
  return swap ? byteswap_value(v) : v;
}

template <typename T>
void put(std::array<unsigned char, kHeaderBytes>& h, int offset, T v) {
  std::memcpy(h.data() + offset, &v, sizeof(T));
}

std::size_t mode_bytes(std::int32_t mode) {
  switch (mode) {
    case 0: return 1;
    case 1: return 2;
    case 2: return 4;
    case 6: return 2;
    default: throw std::runtime_error("unsupported MRC mode " + std::to_string(mode));
  }
}

MrcHeader parse_header(const std::array<unsigned char, kHeaderBytes>& raw) {
  MrcHeader h;
  // MACHST 0x11 0x11 marks big-endian data; otherwise assume little-endian.
  h.swap = raw[212] == 0x11 && raw[213] == 0x11;
  if (std::endian::native == std::endian::big) h.swap = !h.swap;
  for (int a = 0; a < 3; ++a) {
    h.n[a] = get<std::int32_t>(raw, 4 * a, h.swap);
    h.m[a] = get<std::int32_t>(raw, 28 + 4 * a, h.swap);
    h.cella[a] = get<float>(raw, 40 + 4 * a, h.swap);
    h.map_axes[a] = get<std::int32_t>(raw, 64 + 4 * a, h.swap);
    h.origin[a] = get<float>(raw, 196 + 4 * a, h.swap);
  }
  h.mode = get<std::int32_t>(raw, 12, h.swap);
  h.nsymbt = get<std::int32_t>(raw, 92, h.swap);
  return h;
}

GridGeometry grid_from_header(const MrcHeader& h) {
  GridGeometry g;
  for (int a = 0; a < 3; ++a) {
    if (h.n[a] < 1) throw std::runtime_error("MRC header has non-positive dims");
    g.dims[a] = h.n[a];
    const int m = h.m[a] > 0 ? h.m[a] : h.n[a];
    g.spacing[a] = double(h.cella[a]) / m / kAngstromPerNm;
    g.origin[a] = double(h.origin[a]) / kAngstromPerNm;
  }
  const bool default_axes = (h.map_axes[0] == 1 && h.map_axes[1] == 2 && h.map_axes[2] == 3) ||
                            (h.map_axes[0] == 0 && h.map_axes[1] == 0 && h.map_axes[2] == 0);
  if (!default_axes) throw std::runtime_error("MRC axis order other than X-fastest is not supported");
  if (!(g.spacing.minCoeff() > 0.0) || !g.spacing.allFinite())
    throw std::runtime_error("non-positive voxel size in MRC header");
  return g;
}

// Reads the voxel payload as doubles, whatever the mode.
std::vector<double> read_mrc_values(const std::string& path, GridGeometry& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::array<unsigned char, kHeaderBytes> raw{};
  if (!in.read(reinterpret_cast<char*>(raw.data()), kHeaderBytes))
    throw std::runtime_error("truncated MRC header: " + path);
  const MrcHeader h = parse_header(raw);
  const std::size_t bytes = mode_bytes(h.mode);
  g = grid_from_header(h);
  in.seekg(kHeaderBytes + std::max(0, h.nsymbt), std::ios::beg);
  const std::size_t count = std::size_t(g.size());
  std::vector<unsigned char> buf(count * bytes);
  if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size())))
    throw std::runtime_error("MRC data shorter than dims imply: " + path);
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = buf.data() + i * bytes;
    switch (h.mode) {
      case 0: out[i] = double(p[0]); break;
      case 1: {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        out[i] = h.swap ? byteswap_value(v) : v;
        break;
      }
      case 2: {
        float v;
        std::memcpy(&v, p, 4);
        out[i] = h.swap ? byteswap_value(v) : v;
        break;
      }
      case 6: {
        std::uint16_t v;
        std::memcpy(&v, p, 2);
        out[i] = h.swap ? byteswap_value(v) : v;
        break;
      }
    }
  }
  return out;
}

std::vector<std::uint32_t> to_labels(const std::vector<double>& values) {
  std::vector<std::uint32_t> labels(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::round(values[i]);
    if (!std::isfinite(v) || v < 0.0) throw std::runtime_error("negative or non-finite label in volume");
    if (v > double(std::numeric_limits<std::uint32_t>::max())) throw std::runtime_error("label out of range");
    labels[i] = std::uint32_t(v);
  }
  return labels;
}

void write_mrc(const std::string& path, const GridGeometry& g, std::int32_t mode,
               const std::vector<double>& values) {
  std::array<unsigned char, kHeaderBytes> h{};
  for (int a = 0; a < 3; ++a) {
    put<std::int32_t>(h, 4 * a, g.dims[a]);
    put<std::int32_t>(h, 28 + 4 * a, g.dims[a]);
    put<float>(h, 40 + 4 * a, float(g.dims[a] * g.spacing[a] * kAngstromPerNm));
    put<float>(h, 52 + 4 * a, 90.0f);
    put<std::int32_t>(h, 64 + 4 * a, a + 1);
    put<float>(h, 196 + 4 * a, float(g.origin[a] * kAngstromPerNm));
  }
  put<std::int32_t>(h, 12, mode);
  double vmin = 0.0, vmax = 0.0, sum = 0.0;
  if (!values.empty()) {
    vmin = *std::min_element(values.begin(), values.end());
    vmax = *std::max_element(values.begin(), values.end());
    for (double v : values) sum += v;
  }
  const double mean = values.empty() ? 0.0 : sum / double(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  put<float>(h, 76, float(vmin));
  put<float>(h, 80, float(vmax));
  put<float>(h, 84, float(mean));
  put<std::int32_t>(h, 88, 1);
  put<std::int32_t>(h, 108, 20140);
  std::memcpy(h.data() + 208, "MAP ", 4);
  h[212] = 0x44;
  h[213] = 0x44;
  put<float>(h, 216, float(values.empty() ? 0.0 : std::sqrt(ss / double(values.size()))));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(h.data()), kHeaderBytes);
  const std::size_t bytes = mode_bytes(mode);
  std::vector<unsigned char> buf(values.size() * bytes);
  for (std::size_t i = 0; i < values.size(); ++i) {
    unsigned char* p = buf.data() + i * bytes;
    switch (mode) {
      case 0: p[0] = static_cast<unsigned char>(values[i]); break;
      case 1: {
        const auto v = static_cast<std::int16_t>(values[i]);
        std::memcpy(p, &v, 2);
        break;
      }
      case 2: {
        const auto v = static_cast<float>(values[i]);
        std::memcpy(p, &v, 4);
        break;
      }
      case 6: {
        const auto v = static_cast<std::uint16_t>(values[i]);
        std::memcpy(p, &v, 2);
        break;
      }
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

// ---- raw + sidecar --------------------------------------------------------

struct Sidecar {
  GridGeometry grid;
  std::string dtype;
};

Sidecar read_sidecar(const std::string& path) {
  std::ifstream in(path + ".hdr");
  if (!in) throw std::runtime_error("missing sidecar header " + path + ".hdr");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto numbers = [&](const std::string& key, bool required) {
    std::vector<double> out;
    auto it = kv.find(key);
    if (it == kv.end()) {
      if (required) throw std::runtime_error("sidecar missing key " + key);
      return out;
    }
    std::string s = it->second;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream ss(s);
    double v;
    while (ss >> v) out.push_back(v);
    return out;
  };
  Sidecar sc;
  const auto dims = numbers("dims", true);
  if (dims.size() != 3) throw std::runtime_error("sidecar dims must have 3 entries");
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1 || dims[a] != std::floor(dims[a])) throw std::runtime_error("sidecar dims must be positive integers");
    sc.grid.dims[a] = int(dims[a]);
  }
  const auto vs = numbers("voxel_size_nm", true);
  if (vs.size() == 1) sc.grid.spacing.setConstant(vs[0]);
  else if (vs.size() == 3) sc.grid.spacing = Vec3(vs[0], vs[1], vs[2]);
  else throw std::runtime_error("sidecar voxel_size_nm must have 1 or 3 entries");
  if (!(sc.grid.spacing.minCoeff() > 0.0)) throw std::runtime_error("non-positive voxel size in sidecar");
  const auto org = numbers("origin_nm", false);
  if (org.size() == 3) sc.grid.origin = Vec3(org[0], org[1], org[2]);
  else if (!org.empty()) throw std::runtime_error("sidecar origin_nm must have 3 entries");
  auto it = kv.find("dtype");
  if (it == kv.end()) throw std::runtime_error("sidecar missing key dtype");
  sc.dtype = it->second;
  if (sc.dtype != "u8" && sc.dtype != "u16" && sc.dtype != "f32")
    throw std::runtime_error("unsupported raw dtype " + sc.dtype);
  return sc;
}

void write_sidecar(const std::string& path, const GridGeometry& g, const std::string& dtype) {
  std::ofstream out(path + ".hdr");
  if (!out) throw std::runtime_error("cannot write " + path + ".hdr");
  out.precision(17);
  out << "dims = " << g.dims.x() << ' ' << g.dims.y() << ' ' << g.dims.z() << '\n'
      << "dtype = " << dtype << '\n'
      << "voxel_size_nm = " << g.spacing.x() << ' ' << g.spacing.y() << ' ' << g.spacing.z() << '\n'
      << "origin_nm = " << g.origin.x() << ' ' << g.origin.y() << ' ' << g.origin.z() << '\n';
}

std::vector<double> read_raw_values(const std::string& path, GridGeometry& g) {
  const Sidecar sc = read_sidecar(path);
  g = sc.grid;
  const std::size_t bytes = sc.dtype == "u8" ? 1 : sc.dtype == "u16" ? 2 : 4;
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto size = std::size_t(in.tellg());
  const std::size_t count = std::size_t(g.size());
  if (size != count * bytes) throw std::runtime_error("raw file size does not match sidecar dims");
  in.seekg(0);
  std::vector<unsigned char> buf(size);
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(size));
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = buf.data() + i * bytes;
    if (bytes == 1) {
      out[i] = p[0];
    } else if (bytes == 2) {
      out[i] = double(std::uint16_t(p[0] | (p[1] << 8)));
    } else {
      std::uint32_t u = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                        (std::uint32_t(p[3]) << 24);
      out[i] = double(std::bit_cast<float>(u));
    }
  }
  return out;
}

void write_raw_values(const std::string& path, const GridGeometry& g, const std::string& dtype,
                      const std::vector<double>& values) {
  const std::size_t bytes = dtype == "u8" ? 1 : dtype == "u16" ? 2 : 4;
  std::vector<unsigned char> buf(values.size() * bytes);
  for (std::size_t i = 0; i < values.size(); ++i) {
    unsigned char* p = buf.data() + i * bytes;
    if (bytes == 1) {
      p[0] = static_cast<unsigned char>(values[i]);
    } else if (bytes == 2) {
      const auto v = static_cast<std::uint16_t>(values[i]);
      p[0] = v & 0xff;
      p[1] = v >> 8;
    } else {
      const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
      for (int b = 0; b < 4; ++b) p[b] = (u >> (8 * b)) & 0xff;
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
  write_sidecar(path, g, dtype);
}

bool has_mrc_extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return false;
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return ext == "mrc" || ext == "rec" || ext == "map" || ext == "mrcs" || ext == "st";
}

}  // namespace

VoxelGrid read_mrc_labels(const std::string& path) {
  VoxelGrid out;
  out.labels = to_labels(read_mrc_values(path, out.grid));
  return out;
}

ScalarField read_mrc_field(const std::string& path) {
  ScalarField out;
  out.values = read_mrc_values(path, out.grid);
  return out;
}

void write_mrc_labels(const std::string& path, const VoxelGrid& grid) {
  grid.validate();
  const std::uint32_t maxl = grid.max_label();
  if (maxl > 65535) throw std::runtime_error("labels exceed 16 bits; cannot store as MRC");
  std::vector<double> values(grid.labels.begin(), grid.labels.end());
  write_mrc(path, grid.grid, maxl <= 127 ? 0 : 6, values);
}

void write_mrc_field(const std::string& path, const ScalarField& field) {
  field.grid.validate();
  write_mrc(path, field.grid, 2, field.values);
}

VoxelGrid read_raw_labels(const std::string& path) {
  VoxelGrid out;
  out.labels = to_labels(read_raw_values(path, out.grid));
  return out;
}

ScalarField read_raw_field(const std::string& path) {
  ScalarField out;
  out.values = read_raw_values(path, out.grid);
  return out;
}

void write_raw_labels(const std::string& path, const VoxelGrid& grid) {
  grid.validate();
  const std::uint32_t maxl = grid.max_label();
  if (maxl > 65535) throw std::runtime_error("labels exceed 16 bits; cannot store as raw u16");
  std::vector<double> values(grid.labels.begin(), grid.labels.end());
  write_raw_values(path, grid.grid, maxl <= 255 ? "u8" : "u16", values);
}

void write_raw_field(const std::string& path, const ScalarField& field) {
  field.grid.validate();
  write_raw_values(path, field.grid, "f32", field.values);
}

VoxelGrid read_volume(const std::string& path) {
  return has_mrc_extension(path) ? read_mrc_labels(path) : read_raw_labels(path);
}

void write_volume(const std::string& path, const VoxelGrid& grid) {
  if (has_mrc_extension(path)) write_mrc_labels(path, grid);
  else write_raw_labels(path, grid);
}

ScalarField read_field(const std::string& path) {
  return has_mrc_extension(path) ? read_mrc_field(path) : read_raw_field(path);
}

void write_field(const std::string& path, const ScalarField& field) {
  if (has_mrc_extension(path)) write_mrc_field(path, field);
  else write_raw_field(path, field);
}

}  // namespace surfora
