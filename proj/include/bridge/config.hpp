#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridge/datamodel.hpp"
#include "bridge/evaluation.hpp"

namespace bridge {

struct PathConfig {
  std::string dataset = "data/city.json";
  std::string target_dataset = "data/target.json";
  std::string run_dir = "runs/default";
  std::string report_dir = "runs/default/reports";
};

struct ExperimentConfig {
  std::string protocol = "coldstart";  // coldstart | transfer | ablation
  std::vector<std::uint64_t> seeds{1, 2, 3};
  PathConfig paths;
  SyntheticSpec synthetic;
  SyntheticSpec target_synthetic;
  ExperimentSettings settings;

  ExperimentConfig();
  void validate() const;
};

/// Resolved config as a JSON document (every field present).
nlohmann::json to_json(const ExperimentConfig& config);

/// Strict parse: keys absent from the default document are rejected.
ExperimentConfig config_from_json(const nlohmann::json& doc);

/// Applies `key.path=value` overrides; values are parsed as JSON when
/// possible, otherwise taken as strings. Unknown keys are rejected.
nlohmann::json apply_overrides(nlohmann::json doc, const std::vector<std::string>& assignments);

/// Default document, optionally merged with a file and overrides.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& assignments);

/// Fingerprint of the resolved config.
std::string config_hash(const ExperimentConfig& config);

}  // namespace bridge
