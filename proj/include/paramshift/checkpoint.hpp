#pragma once

// Container format:
//   "NAVG" | u32 LE version (1) | u64 LE header length | JSON header |
//   little-endian float32 payloads, in header order.
// The header is {"arrays": [{"name", "shape"}...], "kind", "meta", "version"}.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "paramshift/directions.hpp"
#include "paramshift/generator.hpp"
#include "paramshift/scene.hpp"
#include "paramshift/tensor.hpp"

namespace paramshift {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;  // model | directions | dataset
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor<float>>> arrays;

  const Tensor<float>& array(const std::string& name) const;
  bool has(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::string_view bytes);
/// Writes through a temporary file and renames it into place.
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const GeneratorModel& model);
GeneratorModel model_from_checkpoint(const Checkpoint& c);
Checkpoint to_checkpoint(const DirectionSet& dirs);
DirectionSet directions_from_checkpoint(const Checkpoint& c);
Checkpoint to_checkpoint(const Dataset& d);
Dataset dataset_from_checkpoint(const Checkpoint& c);

GeneratorModel load_model(const std::filesystem::path& path);
DirectionSet load_directions(const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Temporary file + rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace paramshift
