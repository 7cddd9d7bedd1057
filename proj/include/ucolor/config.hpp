#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ucolor/net.hpp"
#include "ucolor/training.hpp"

namespace ucolor::config {

struct Paths {
  std::string manifest;
  std::string weights;
  std::string output;
  std::string trace;
  friend bool operator==(const Paths&, const Paths&) = default;
};

// One JSON document for a whole run. The top-level seed drives weight init
// and patch sampling; the prior lives at top level and is mirrored into
// model.prior.
struct RunConfig {
  std::uint64_t seed = 0;
  net::ModelConfig model;
  train::TrainConfig train;
  Paths paths;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Fully defaulted, pretty-printed.
std::string dump(const RunConfig& cfg);

// Every problem in the document: unknown keys, wrong types, values that
// break a ModelConfig or TrainConfig invariant. Empty when valid.
std::vector<std::string> check(const std::string& json_text);
// Throws ConfigError carrying every problem from check().
RunConfig parse(const std::string& json_text);
RunConfig load(const std::filesystem::path& path);

// Model block alone, used as the weights-file echo.
std::string model_json(const net::ModelConfig& m);
net::ModelConfig parse_model_json(const std::string& json_text);

}  // namespace ucolor::config
