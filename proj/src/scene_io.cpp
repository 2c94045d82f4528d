#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "splatcone/chi2.hpp"
#include "splatcone/splat_scene.hpp"

namespace splatcone {
namespace {

static_assert(std::endian::native == std::endian::little,
              "PLY reader assumes a little-endian host");

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::optional<PlyType> parse_ply_type(const std::string& t) {
  static const std::map<std::string, PlyType> kTypes = {
      {"char", PlyType::i8},    {"int8", PlyType::i8},
      {"uchar", PlyType::u8},   {"uint8", PlyType::u8},
      {"short", PlyType::i16},  {"int16", PlyType::i16},
      {"ushort", PlyType::u16}, {"uint16", PlyType::u16},
      {"int", PlyType::i32},    {"int32", PlyType::i32},
      {"uint", PlyType::u32},   {"uint32", PlyType::u32},
      {"float", PlyType::f32},  {"float32", PlyType::f32},
      {"double", PlyType::f64}, {"float64", PlyType::f64}};
  const auto it = kTypes.find(t);
  if (it == kTypes.end()) return std::nullopt;
  return it->second;
}

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

template <typename T>
double read_as(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return static_cast<double>(v);
}

double decode(PlyType t, const char* p) {
  switch (t) {
    case PlyType::i8: return read_as<std::int8_t>(p);
    case PlyType::u8: return read_as<std::uint8_t>(p);
    case PlyType::i16: return read_as<std::int16_t>(p);
    case PlyType::u16: return read_as<std::uint16_t>(p);
    case PlyType::i32: return read_as<std::int32_t>(p);
    case PlyType::u32: return read_as<std::uint32_t>(p);
    case PlyType::f32: return read_as<float>(p);
    case PlyType::f64: return read_as<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type;
  std::size_t offset;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
  std::size_t stride = 0;
  bool has_list = false;
};

constexpr std::array<const char*, 11> kRequired = {
    "x", "y", "z", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3", "opacity"};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void write_atomically(const std::filesystem::path& path,
                      const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

Scene load_ply(const std::filesystem::path& path, const PreprocessOptions& opts,
               PreprocessReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");

  std::string line;
  std::getline(in, line);
  if (line != "ply") throw ParseError("malformed header: missing 'ply' magic");

  std::vector<PlyElement> elements;
  bool format_ok = false;
  while (true) {
    if (!std::getline(in, line)) {
      throw ParseError("malformed header: missing end_header");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header") break;
    if (key == "comment" || key == "obj_info" || key.empty()) continue;
    if (key == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt != "binary_little_endian") {
        throw ParseError("unsupported PLY format '" + fmt +
                         "' (binary_little_endian required)");
      }
      format_ok = true;
    } else if (key == "element") {
      PlyElement e;
      long long count = -1;
      ls >> e.name >> count;
      if (!ls || count < 0) throw ParseError("malformed element line: " + line);
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (key == "property") {
      if (elements.empty()) {
        throw ParseError("malformed header: property before element");
      }
      std::string type;
      ls >> type;
      PlyElement& e = elements.back();
      if (type == "list") {
        e.has_list = true;
        continue;
      }
      std::string name;
      ls >> name;
      const auto t = parse_ply_type(type);
      if (!t || name.empty()) {
        throw ParseError("malformed property line: " + line);
      }
      e.properties.push_back({name, *t, e.stride});
      e.stride += type_size(*t);
    } else {
      throw ParseError("malformed header: unexpected '" + key + "'");
    }
  }
  if (!format_ok) throw ParseError("malformed header: missing format line");

  const PlyElement* vertex = nullptr;
  std::size_t skip_bytes = 0;
  for (const PlyElement& e : elements) {
    if (e.name == "vertex") {
      vertex = &e;
      break;
    }
    if (e.has_list) {
      throw ParseError("element '" + e.name +
                       "' with list properties precedes vertex data");
    }
    skip_bytes += e.count * e.stride;
  }
  if (vertex == nullptr) throw ParseError("missing 'vertex' element");
  if (vertex->has_list) throw ParseError("vertex element has list properties");

  std::array<const PlyProperty*, kRequired.size()> fields{};
  for (std::size_t k = 0; k < kRequired.size(); ++k) {
    for (const PlyProperty& p : vertex->properties) {
      if (p.name == kRequired[k]) fields[k] = &p;
    }
    if (fields[k] == nullptr) {
      throw ParseError(std::string("missing required property '") +
                       kRequired[k] + "'");
    }
  }

  in.seekg(static_cast<std::streamoff>(skip_bytes), std::ios::cur);
  std::vector<char> buffer(vertex->count * vertex->stride);
  in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (static_cast<std::size_t>(in.gcount()) != buffer.size()) {
    throw ParseError("truncated vertex data: expected " +
                     std::to_string(vertex->count) + " vertices");
  }

  std::vector<RawSplat> raw(vertex->count);
  std::array<double, kRequired.size()> v{};
  for (std::size_t i = 0; i < vertex->count; ++i) {
    const char* row = buffer.data() + i * vertex->stride;
    for (std::size_t k = 0; k < kRequired.size(); ++k) {
      v[k] = decode(fields[k]->type, row + fields[k]->offset);
      if (!std::isfinite(v[k])) {
        throw ParseError("vertex " + std::to_string(i) + ": property '" +
                         kRequired[k] + "' is not finite");
      }
    }
    RawSplat& s = raw[i];
    s.mean = Vec3(v[0], v[1], v[2]);
    s.scales = Vec3(std::exp(v[3]), std::exp(v[4]), std::exp(v[5]));
    s.rotation = Eigen::Vector4d(v[6], v[7], v[8], v[9]);
    s.opacity = sigmoid(v[10]);
  }
  return preprocess(raw, opts, report);
}

void write_ply(const std::filesystem::path& path,
               const std::vector<RawSplat>& raw) {
  std::ostringstream out;
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << raw.size() << "\n";
  for (const char* name : kRequired) out << "property float " << name << "\n";
  out << "end_header\n";
  for (const RawSplat& s : raw) {
    const double op = std::clamp(s.opacity, 1e-7, 1.0 - 1e-7);
    const std::array<float, kRequired.size()> row = {
        static_cast<float>(s.mean.x()),       static_cast<float>(s.mean.y()),
        static_cast<float>(s.mean.z()),       static_cast<float>(std::log(s.scales[0])),
        static_cast<float>(std::log(s.scales[1])), static_cast<float>(std::log(s.scales[2])),
        static_cast<float>(s.rotation[0]),    static_cast<float>(s.rotation[1]),
        static_cast<float>(s.rotation[2]),    static_cast<float>(s.rotation[3]),
        static_cast<float>(std::log(op / (1.0 - op)))};
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(sizeof(row)));
  }
  write_atomically(path, out.str());
}

void write_ply(const std::filesystem::path& path, const Scene& scene) {
  std::vector<RawSplat> raw;
  raw.reserve(scene.size());
  for (const Splat& s : scene.splats()) {
    raw.push_back({s.mean,
                   Eigen::Vector4d(s.rotation.w(), s.rotation.x(),
                                   s.rotation.y(), s.rotation.z()),
                   s.scales, s.opacity});
  }
  write_ply(path, raw);
}

void write_scene_dump(const std::filesystem::path& path, const Scene& scene) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "splatcone-scene " << kSceneDumpVersion << "\n"
      << "confidence " << scene.confidence() << "\n"
      << "count " << scene.size() << "\n";
  for (const Splat& s : scene.splats()) {
    out << s.mean.x() << ' ' << s.mean.y() << ' ' << s.mean.z() << ' '
        << s.rotation.w() << ' ' << s.rotation.x() << ' ' << s.rotation.y()
        << ' ' << s.rotation.z() << ' ' << s.scales[0] << ' ' << s.scales[1]
        << ' ' << s.scales[2] << ' ' << s.opacity << '\n';
  }
  write_atomically(path, out.str());
}

Scene read_scene_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::string magic, key;
  int version = 0;
  in >> magic >> version;
  if (magic != "splatcone-scene") throw ParseError("not a scene dump");
  if (version != kSceneDumpVersion) {
    throw ParseError("unsupported scene dump version " + std::to_string(version));
  }
  double confidence = 0.0;
  std::size_t count = 0;
  in >> key >> confidence;
  if (key != "confidence" || !in) throw ParseError("scene dump: bad confidence line");
  in >> key >> count;
  if (key != "count" || !in) throw ParseError("scene dump: bad count line");
  std::vector<Splat> splats;
  splats.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::array<double, 11> f{};
    for (double& x : f) in >> x;
    if (!in) throw ParseError("scene dump: truncated at splat " + std::to_string(i));
    for (double x : f) {
      if (!std::isfinite(x)) {
        throw ParseError("scene dump: non-finite value at splat " + std::to_string(i));
      }
    }
    splats.push_back(make_splat(Vec3(f[0], f[1], f[2]), Quat(f[3], f[4], f[5], f[6]),
                                Vec3(f[7], f[8], f[9]), f[10]));
  }
  return Scene(std::move(splats), confidence);
}

Scene load_scene_file(const std::filesystem::path& path,
                      const PreprocessOptions& opts, PreprocessReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::string first;
  std::getline(in, first);
  in.close();
  if (first.rfind("splatcone-scene", 0) == 0) return read_scene_dump(path);
  return load_ply(path, opts, report);
}

}  // namespace splatcone
