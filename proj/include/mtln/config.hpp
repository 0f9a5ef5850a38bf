#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "mtln/train.hpp"

namespace mtln {

/// Phantom generation settings.
struct DataConfig {
  int count = 999;
  int height = 128;
  int width = 128;
};

struct PathsConfig {
  std::string data_dir = "data";
  std::string manifest = "data/manifest.csv";
  std::string checkpoint = "run/best.ckpt";
};

/// Everything a reproducible run needs. The single `seed` feeds phantom
/// generation, splitting, initialization and shuffling.
struct RunConfig {
  NetworkConfig network;
  LossConfig loss;
  TrainConfig train;  // network and loss members are filled from the sections above
  DataConfig data;
  PathsConfig paths;
  std::uint64_t seed = 0;

  /// TrainConfig with network, loss and seed resolved.
  TrainConfig resolved_train() const;
  void validate() const;
};

/// Parses a run configuration; absent keys keep their defaults, unknown keys
/// raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& config);

RunConfig load_run_config(const std::filesystem::path& path);

/// Config snapshot embedded in checkpoints.
nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);

}  // namespace mtln
