#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridge/evaluation.hpp"

namespace bridge::io {

using nlohmann::json;

json dataset_to_json(const CityDataset& city);
CityDataset dataset_from_json(const json& doc);

void save_dataset(const CityDataset& city, const std::string& path);
CityDataset load_dataset(const std::string& path);

json dims_to_json(const ModelDims& dims);
ModelDims dims_from_json(const json& doc);

/// {name: {shape: [rows, cols], values: [...]}} with row-major values.
json params_to_json(const ModelParams& params);
ModelParams params_from_json(const json& doc, const ModelDims& dims);

struct Checkpoint {
  ModelParams params;
  Normalizer normalizer;
  json config;  // resolved config echo
  std::string config_hash;
  std::string encoder_version;
  std::string bank_checksum;  // empty when retrieval is disabled
  std::vector<int> observable;
  std::vector<int> masked;
  std::uint64_t seed = 0;
  int best_epoch = 0;
  bool use_retrieval = true;
  double lambda_ret = 0.0;
};

json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const json& doc);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Header line with the encoder version and checksum, then one entry per line.
std::string bank_jsonl(const retrieval::MemoryBank& bank, const std::string& config_hash);
void save_bank(const retrieval::MemoryBank& bank, const std::string& path, const std::string& config_hash);

/// Parses a bank file, checks it against the checkpoint and recomputes keys
/// with the checkpointed retriever. Throws VersionMismatchError on any
/// disagreement. Returns an empty bank when the file holds no entries.
retrieval::MemoryBank load_bank(const std::string& path, const Checkpoint& ckpt);
retrieval::MemoryBank parse_bank(const std::string& text, const Checkpoint& ckpt);

json metrics_to_json(const Metrics& m);
json report_to_json(const EvalReport& report, const std::string& config_hash);
std::string curves_csv(const std::vector<CurvePoint>& curves, const std::string& config_hash);

std::string read_text(const std::string& path);
/// Creates parent directories; throws DataError when the file cannot be written.
void write_text(const std::string& path, const std::string& content);

}  // namespace bridge::io
