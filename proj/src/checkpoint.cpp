#include "paramshift/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace paramshift {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'N', 'A', 'V', 'G'};

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(U)) throw FormatError("truncated checkpoint header");
  U v;
  std::memcpy(&v, bytes.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

void expect_kind(const Checkpoint& c, const char* kind) {
  if (c.kind != kind) throw FormatError("expected a '" + std::string(kind) + "' checkpoint, got '" + c.kind + "'");
}

}  // namespace

const Tensor<float>& Checkpoint::array(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return t;
  throw FormatError("checkpoint has no array '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return true;
  return false;
}

std::string encode_checkpoint(const Checkpoint& c) {
  nlohmann::json header;
  header["kind"] = c.kind;
  header["version"] = kCheckpointVersion;
  header["meta"] = c.meta;
  header["arrays"] = nlohmann::json::array();
  for (const auto& [name, t] : c.arrays) header["arrays"].push_back({{"name", name}, {"shape", t.shape()}});
  const std::string text = header.dump();

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& [name, t] : c.arrays) {
    out.append(reinterpret_cast<const char*>(t.ptr()), t.size() * sizeof(float));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic");
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(bytes, pos);
  if (bytes.size() - pos < len) throw FormatError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  pos += len;

  Checkpoint c;
  try {
    c.kind = header.at("kind").get<std::string>();
    c.meta = header.value("meta", nlohmann::json::object());
    for (const auto& a : header.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto shape = a.at("shape").get<Shape>();
      const std::size_t n = shape_size(shape);
      if ((bytes.size() - pos) / sizeof(float) < n) throw FormatError("truncated payload for array '" + name + "'");
      std::vector<float> data(n);
      std::memcpy(data.data(), bytes.data() + pos, n * sizeof(float));
      pos += n * sizeof(float);
      c.arrays.emplace_back(name, Tensor<float>(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after checkpoint payload");
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

Checkpoint to_checkpoint(const GeneratorModel& model) {
  Checkpoint c;
  c.kind = "model";
  c.meta = model.meta;
  c.meta["model"] = "generator";
  for (const auto& [name, value] : model.params()) c.arrays.emplace_back(name, value);
  return c;
}

GeneratorModel model_from_checkpoint(const Checkpoint& c) {
  expect_kind(c, "model");
  if (c.meta.value("model", "") != "generator") throw FormatError("model checkpoint does not hold a generator");
  GeneratorModel m;
  for (const auto& name : GeneratorModel::param_names()) {
    const auto& t = c.array(name);
    if (t.shape() != GeneratorModel::param_shape(name)) {
      throw FormatError("shape mismatch for '" + name + "': " + shape_str(t.shape()));
    }
    m.param(name) = t;
  }
  m.meta = c.meta;
  m.meta.erase("model");
  return m;
}

Checkpoint to_checkpoint(const DirectionSet& dirs) {
  Checkpoint c;
  c.kind = "directions";
  c.meta = dirs.meta;
  c.meta["layer"] = layer_name(dirs.layer);
  c.meta["parametrization"] = parametrization_name(dirs.kind);
  c.meta["T"] = dirs.T;
  c.meta["sigma"] = dirs.sigma;
  auto info = nlohmann::json::array();
  for (const auto& d : dirs.info) {
    info.push_back({{"label", d.label}, {"method", d.method}, {"score", d.score}, {"eigenvalue", d.eigenvalue}});
  }
  c.meta["directions"] = info;
  c.arrays.emplace_back("coeffs", dirs.coeffs);
  if (dirs.kind != Parametrization::raw_kernel) c.arrays.emplace_back("basis", dirs.basis);
  return c;
}

DirectionSet directions_from_checkpoint(const Checkpoint& c) {
  expect_kind(c, "directions");
  DirectionSet d;
  try {
    d.layer = parse_layer(c.meta.at("layer").get<std::string>());
    d.kind = parse_parametrization(c.meta.at("parametrization").get<std::string>());
    d.T = c.meta.at("T").get<double>();
    d.sigma = c.meta.value("sigma", std::vector<double>{});
    for (const auto& e : c.meta.value("directions", nlohmann::json::array())) {
      d.info.push_back({e.value("label", ""), e.value("method", ""), e.value("score", 0.0), e.value("eigenvalue", 0.0)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed directions header: ") + e.what());
  } catch (const ValueError& e) {
    throw FormatError(e.what());
  }
  d.meta = c.meta;
  for (const char* k : {"layer", "parametrization", "T", "sigma", "directions"}) d.meta.erase(k);
  d.coeffs = c.array("coeffs");
  if (d.kind != Parametrization::raw_kernel) d.basis = c.array("basis");
  if (d.raw_dim() != GeneratorModel::weight_size(d.layer)) {
    throw FormatError("shape mismatch: directions do not fit layer " + layer_name(d.layer));
  }
  d.validate();
  return d;
}

Checkpoint to_checkpoint(const Dataset& d) {
  Checkpoint c;
  c.kind = "dataset";
  c.meta["size"] = d.spec.size;
  c.meta["count"] = d.spec.count;
  c.meta["seed"] = d.spec.seed;
  c.meta["radius_mode"] = radius_mode_name(d.spec.radius_mode);
  Tensor<float> scenes({d.scenes.size(), 4});
  for (std::size_t i = 0; i < d.scenes.size(); ++i) {
    const auto& s = d.scenes[i];
    scenes[i * 4 + 0] = static_cast<float>(s.center_x);
    scenes[i * 4 + 1] = static_cast<float>(s.center_y);
    scenes[i * 4 + 2] = static_cast<float>(s.radius);
    scenes[i * 4 + 3] = static_cast<float>(s.foreground);
  }
  c.arrays.emplace_back("images", d.images);
  c.arrays.emplace_back("scenes", scenes);
  return c;
}

Dataset dataset_from_checkpoint(const Checkpoint& c) {
  expect_kind(c, "dataset");
  Dataset d;
  try {
    d.spec.size = c.meta.at("size").get<std::size_t>();
    d.spec.count = c.meta.at("count").get<std::size_t>();
    d.spec.seed = c.meta.at("seed").get<std::uint64_t>();
    d.spec.radius_mode = parse_radius_mode(c.meta.at("radius_mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset header: ") + e.what());
  }
  d.images = c.array("images");
  if (d.images.shape() != Shape{d.spec.count, 1, d.spec.size, d.spec.size}) {
    throw FormatError("shape mismatch: dataset images " + shape_str(d.images.shape()));
  }
  const auto& scenes = c.array("scenes");
  if (scenes.shape() != Shape{d.spec.count, 4}) throw FormatError("shape mismatch: dataset scenes");
  for (std::size_t i = 0; i < d.spec.count; ++i) {
    d.scenes.push_back({scenes[i * 4], scenes[i * 4 + 1], scenes[i * 4 + 2], scenes[i * 4 + 3]});
  }
  return d;
}

GeneratorModel load_model(const std::filesystem::path& path) { return model_from_checkpoint(load_checkpoint(path)); }
DirectionSet load_directions(const std::filesystem::path& path) {
  return directions_from_checkpoint(load_checkpoint(path));
}
Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_checkpoint(load_checkpoint(path)); }

}  // namespace paramshift
