#pragma once

// Run configuration: a JSON file with sections (model, train, test, corpus,
// paths) plus a top-level seed. Every key is described once in a table that
// drives parsing, overrides and the help listing.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lgse/model.hpp"
#include "lgse/training.hpp"

namespace lgse {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct TestConfig {
  std::vector<double> durations{1, 2, 5, 10, 15, 20};
  std::vector<int> snrs{-5, 0, 5, 10, 15};
  int utts_per_condition = 20;
  std::vector<std::string> kinds{"nopos", "sinusoidal", "bertpos", "gauss", "t5",
                                 "tisa",  "dabias",     "kerple",  "rope",  "learnlin"};
  double chunk_s = 0.0;  // 0: use the training clip length
};

struct CorpusConfig {
  int n_utts = 200;
  double dur_s = 4.0;
  int valid_utts = 10;
};

struct PathConfig {
  std::string corpus_dir = "corpus";
  std::string checkpoint = "model.lgse";
  std::string loss_csv = "loss.csv";
  std::string out_dir = "results";
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  TestConfig test;
  CorpusConfig corpus;
  PathConfig paths;
  std::uint64_t seed = 0;
};

struct ConfigKey {
  std::string key;          // dotted, e.g. "model.heads"
  std::string description;
  std::string reference;    // published default, or "" when none is given
  std::function<nlohmann::json(const RunConfig&)> get;
  std::function<void(RunConfig&, const nlohmann::json&)> set;
};

const std::vector<ConfigKey>& config_keys();

nlohmann::json to_json(const RunConfig& cfg);
/// Applies every key present in `j` on top of `base`. Unknown keys and
/// ill-typed values raise ConfigError.
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});

RunConfig load_config(const std::filesystem::path& path);
/// `assignment` is key=value; the value is parsed as JSON, falling back to a
/// plain string.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Listing of every key with its default and published value.
std::string config_help();

nlohmann::json model_config_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace lgse
