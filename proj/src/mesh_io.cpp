#include "surfora/mesh_io.hpp"

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace surfora {

namespace {

std::string extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string e = path.substr(dot + 1);
  for (char& c : e) c = char(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  return f;
}

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));  // little-endian hosts only
}

struct VertexTable {
  std::vector<std::string> names;
  std::vector<std::string> types;
  std::vector<std::vector<double>> columns;
};

void write_ply_impl(const std::string& path, const std::vector<Vec3>& pts, const std::vector<Vec3>& normals,
                    const std::vector<std::uint32_t>* labels, const std::map<std::string, std::vector<double>>& channels,
                    const std::vector<Face>* faces, PlyFormat format) {
  const bool bin = format == PlyFormat::BinaryLittleEndian;
  auto os = open_out(path, bin);
  os << "ply\nformat " << (bin ? "binary_little_endian" : "ascii") << " 1.0\n";
  os << "comment surfora\n";
  os << "element vertex " << pts.size() << "\n";
  os << "property double x\nproperty double y\nproperty double z\n";
  const bool has_n = !normals.empty();
  if (has_n) os << "property double nx\nproperty double ny\nproperty double nz\n";
  const bool has_l = labels && !labels->empty();
  if (has_l) os << "property uint label\n";
  for (const auto& [name, _] : channels) os << "property float " << name << "\n";
  const std::size_t nf = faces ? faces->size() : 0;
  if (faces) os << "element face " << nf << "\nproperty list uchar int vertex_indices\n";
  os << "end_header\n";

  char buf[64];
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (bin) {
      for (int a = 0; a < 3; ++a) put<double>(os, pts[i][a]);
      if (has_n)
        for (int a = 0; a < 3; ++a) put<double>(os, normals[i][a]);
      if (has_l) put<std::uint32_t>(os, (*labels)[i]);
      for (const auto& [_, v] : channels) put<float>(os, float(v[i]));
    } else {
      std::string line;
      for (int a = 0; a < 3; ++a) {
        std::snprintf(buf, sizeof buf, a ? " %.17g" : "%.17g", pts[i][a]);
        line += buf;
      }
      if (has_n)
        for (int a = 0; a < 3; ++a) {
          std::snprintf(buf, sizeof buf, " %.17g", normals[i][a]);
          line += buf;
        }
      if (has_l) line += " " + std::to_string((*labels)[i]);
      for (const auto& [_, v] : channels) {
        std::snprintf(buf, sizeof buf, " %.9g", double(float(v[i])));
        line += buf;
      }
      os << line << "\n";
    }
  }
  for (std::size_t f = 0; f < nf; ++f) {
    const Face& t = (*faces)[f];
    if (bin) {
      put<std::uint8_t>(os, 3);
      for (int v : t) put<std::int32_t>(os, v);
    } else {
      os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    }
  }
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

int type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw std::runtime_error("unsupported PLY type '" + t + "'");
}

double read_binary(std::istream& is, const std::string& t) {
  unsigned char b[8];
  const int n = type_size(t);
  is.read(reinterpret_cast<char*>(b), n);
  if (!is) throw std::runtime_error("truncated PLY data");
  if (t == "char" || t == "int8") return double(std::int8_t(b[0]));
  if (t == "uchar" || t == "uint8") return double(b[0]);
  if (t == "short" || t == "int16") { std::int16_t v; std::memcpy(&v, b, 2); return v; }
  if (t == "ushort" || t == "uint16") { std::uint16_t v; std::memcpy(&v, b, 2); return v; }
  if (t == "int" || t == "int32") { std::int32_t v; std::memcpy(&v, b, 4); return v; }
  if (t == "uint" || t == "uint32") { std::uint32_t v; std::memcpy(&v, b, 4); return v; }
  if (t == "float" || t == "float32") { float v; std::memcpy(&v, b, 4); return v; }
  double v;
  std::memcpy(&v, b, 8);
  return v;
}

struct PlyData {
  VertexTable vertex;
  std::vector<Face> faces;
  bool has_faces = false;
};

PlyData read_ply_impl(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  std::getline(is, line);
  if (line.rfind("ply", 0) != 0) throw std::runtime_error("'" + path + "' is not a PLY file");

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::pair<std::string, std::string>> props;  // name, type
    std::string list_count, list_index;                      // for list properties
    bool list = false;
  };
  std::vector<Element> elems;
  bool binary = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string kw;
    ss >> kw;
    if (kw == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt != "ascii") throw std::runtime_error("unsupported PLY format '" + fmt + "'");
    } else if (kw == "element") {
      Element e;
      ss >> e.name >> e.count;
      elems.push_back(e);
    } else if (kw == "property") {
      if (elems.empty()) throw std::runtime_error("PLY property before element");
      std::string t;
      ss >> t;
      if (t == "list") {
        auto& e = elems.back();
        e.list = true;
        std::string name;
        ss >> e.list_count >> e.list_index >> name;
        e.props.emplace_back(name, "list");
      } else {
        std::string name;
        ss >> name;
        elems.back().props.emplace_back(name, t);
      }
    } else if (kw == "end_header") {
      break;
    }
  }

  PlyData out;
  for (const Element& e : elems) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    if (is_vertex) {
      for (const auto& [n, t] : e.props) {
        out.vertex.names.push_back(n);
        out.vertex.types.push_back(t);
      }
      out.vertex.columns.assign(e.props.size(), std::vector<double>(e.count));
    }
    if (is_face) {
      out.has_faces = true;
      out.faces.reserve(e.count);
    }
    for (std::size_t r = 0; r < e.count; ++r) {
      std::istringstream row;
      if (!binary) {
        if (!std::getline(is, line)) throw std::runtime_error("truncated PLY data");
        row.str(line);
      }
      for (std::size_t p = 0; p < e.props.size(); ++p) {
        const auto& [name, type] = e.props[p];
        if (type == "list") {
          std::size_t cnt = 0;
          if (binary) cnt = std::size_t(read_binary(is, e.list_count));
          else row >> cnt;
          std::vector<int> idx(cnt);
          for (std::size_t q = 0; q < cnt; ++q) {
            if (binary) idx[q] = int(read_binary(is, e.list_index));
            else row >> idx[q];
          }
          if (is_face) {
            // Fan-split polygons.
            for (std::size_t q = 1; q + 1 < cnt; ++q) out.faces.push_back({idx[0], idx[q], idx[q + 1]});
          }
        } else {
          double v = 0.0;
          if (binary) v = read_binary(is, type);
          else row >> v;
          if (is_vertex) out.vertex.columns[p][r] = v;
        }
      }
      if (!binary && !row) throw std::runtime_error("malformed PLY row in '" + path + "'");
    }
  }
  return out;
}

int column(const VertexTable& t, const std::string& name) {
  for (std::size_t i = 0; i < t.names.size(); ++i)
    if (t.names[i] == name) return int(i);
  return -1;
}

void split_columns(const VertexTable& t, std::vector<Vec3>& pts, std::vector<Vec3>& normals,
                   std::vector<std::uint32_t>* labels, std::map<std::string, std::vector<double>>& channels) {
  const int x = column(t, "x"), y = column(t, "y"), z = column(t, "z");
  if (x < 0 || y < 0 || z < 0) throw std::runtime_error("PLY vertex element lacks x/y/z");
  const std::size_t n = t.columns.empty() ? 0 : t.columns[0].size();
  pts.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    pts[i] = Vec3(t.columns[std::size_t(x)][i], t.columns[std::size_t(y)][i], t.columns[std::size_t(z)][i]);
  const int nx = column(t, "nx"), ny = column(t, "ny"), nz = column(t, "nz");
  if (nx >= 0 && ny >= 0 && nz >= 0) {
    normals.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      normals[i] = Vec3(t.columns[std::size_t(nx)][i], t.columns[std::size_t(ny)][i], t.columns[std::size_t(nz)][i]);
  }
  const int lab = column(t, "label");
  for (std::size_t c = 0; c < t.names.size(); ++c) {
    const std::string& name = t.names[c];
    if (name == "x" || name == "y" || name == "z" || name == "nx" || name == "ny" || name == "nz") continue;
    if (labels && int(c) == lab) {
      labels->resize(n);
      for (std::size_t i = 0; i < n; ++i) (*labels)[i] = std::uint32_t(t.columns[c][i]);
      continue;
    }
    channels[name] = t.columns[c];
  }
}

}  // namespace

void write_ply(const std::string& path, const TriangleMesh& mesh, PlyFormat format) {
  mesh.validate();
  write_ply_impl(path, mesh.vertices, mesh.normals, nullptr, mesh.channels, &mesh.faces, format);
}

void write_ply(const std::string& path, const PointCloud& cloud, PlyFormat format) {
  cloud.validate();
  write_ply_impl(path, cloud.points, cloud.normals, &cloud.labels, cloud.attributes, nullptr, format);
}

TriangleMesh read_ply_mesh(const std::string& path) {
  const PlyData d = read_ply_impl(path);
  TriangleMesh m;
  split_columns(d.vertex, m.vertices, m.normals, nullptr, m.channels);
  m.faces = d.faces;
  m.validate();
  return m;
}

PointCloud read_ply_cloud(const std::string& path) {
  const PlyData d = read_ply_impl(path);
  PointCloud c;
  split_columns(d.vertex, c.points, c.normals, &c.labels, c.attributes);
  for (auto& n : c.normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  c.validate();
  return c;
}

void write_obj(const std::string& path, const TriangleMesh& mesh) {
  mesh.validate();
  auto os = open_out(path, false);
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    os << buf;
  }
  for (const Face& f : mesh.faces) os << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

TriangleMesh read_obj(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  TriangleMesh m;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string kw;
    ss >> kw;
    if (kw == "v") {
      Vec3 v;
      ss >> v.x() >> v.y() >> v.z();
      m.vertices.push_back(v);
    } else if (kw == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(i > 0 ? i - 1 : int(m.vertices.size()) + i);
      }
      for (std::size_t q = 1; q + 1 < idx.size(); ++q) m.faces.push_back({idx[0], idx[q], idx[q + 1]});
    }
  }
  m.validate();
  return m;
}

void write_xyz(const std::string& path, const PointCloud& cloud) {
  cloud.validate();
  auto os = open_out(path, false);
  char buf[256];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    int len = std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p.x(), p.y(), p.z());
    if (cloud.has_normals()) {
      const Vec3& n = cloud.normals[i];
      len += std::snprintf(buf + len, sizeof buf - std::size_t(len), " %.17g %.17g %.17g", n.x(), n.y(), n.z());
    }
    if (cloud.has_labels()) std::snprintf(buf + len, sizeof buf - std::size_t(len), " %u", cloud.labels[i]);
    os << buf << "\n";
  }
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

PointCloud read_xyz(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  PointCloud c;
  std::string line;
  int columns = -1;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (v.empty()) continue;
    if (columns < 0) columns = int(v.size());
    if (int(v.size()) != columns || (columns != 3 && columns != 4 && columns != 6 && columns != 7))
      throw std::runtime_error("malformed XYZ line: '" + line + "'");
    c.points.emplace_back(v[0], v[1], v[2]);
    if (columns >= 6) c.normals.push_back(Vec3(v[3], v[4], v[5]).normalized());
    if (columns == 4 || columns == 7) c.labels.push_back(std::uint32_t(v.back()));
  }
  c.validate();
  return c;
}

PointCloud read_cloud(const std::string& path) {
  const std::string e = extension(path);
  if (e == "ply") return read_ply_cloud(path);
  if (e == "xyz" || e == "txt") return read_xyz(path);
  throw std::runtime_error("unsupported point-cloud format '" + e + "'");
}

void write_cloud(const std::string& path, const PointCloud& cloud) {
  const std::string e = extension(path);
  if (e == "ply") return write_ply(path, cloud);
  if (e == "xyz" || e == "txt") return write_xyz(path, cloud);
  throw std::runtime_error("incompatible artifact/format: point cloud -> ." + e);
}

TriangleMesh read_mesh(const std::string& path) {
  const std::string e = extension(path);
  if (e == "ply") return read_ply_mesh(path);
  if (e == "obj") return read_obj(path);
  throw std::runtime_error("unsupported mesh format '" + e + "'");
}

void write_mesh(const std::string& path, const TriangleMesh& mesh) {
  const std::string e = extension(path);
  if (e == "ply") return write_ply(path, mesh);
  if (e == "obj") return write_obj(path, mesh);
  throw std::runtime_error("incompatible artifact/format: mesh -> ." + e);
}

}  // namespace surfora
