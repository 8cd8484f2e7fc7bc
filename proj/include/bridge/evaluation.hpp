#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bridge/metrics.hpp"
#include "bridge/training.hpp"

namespace bridge {

/// Everything a protocol run needs besides the data.
struct ExperimentSettings {
  ModelDims dims;
  TrainConfig train;
  int n_cold_start = 10;
  int curve_instances = 4;  // test instances exported as per-region curves
};

struct RegionMetrics {
  int region_id = 0;
  bool cold_start = false;
  Metrics metrics;
};

struct EvalReport {
  std::string protocol;
  std::uint64_t seed = 0;
  std::string city;
  std::string source_city;
  bool use_retrieval = true;
  double lambda_ret = 0.0;
  double beta = 0.0;
  int best_epoch = 0;
  Metrics all;
  Metrics cold_start;
  Metrics observed;
  std::vector<RegionMetrics> per_region;
  std::vector<int> cold_start_regions;
  std::size_t n_instances = 0;
  std::optional<double> prior_future_l2;  // mean ||p - y||_2 in raw units over valid priors
};

/// One horizon step of one region at one anchor, raw units.
struct CurvePoint {
  int anchor = 0;
  int region_id = 0;
  bool cold_start = false;
  int step = 0;
  double prediction = 0.0;
  double backbone = 0.0;
  double prior = 0.0;
  double truth = 0.0;
};

struct Evaluation {
  EvalReport report;
  std::vector<CurvePoint> curves;
};

/// What a trained checkpoint provides to evaluation.
struct TrainedModel {
  ModelParams params;
  retrieval::MemoryBank bank;  // empty when retrieval is disabled
  Normalizer normalizer;
  bool use_retrieval = true;
};

TrainedModel as_trained_model(const TrainResult& result, const TrainConfig& config);

/// Forecasts every region of `city` at each anchor with `masked` histories zeroed,
/// and scores the de-normalized predictions.
Evaluation evaluate_model(const TrainedModel& model, const CityDataset& city, const std::vector<int>& anchors,
                          const std::set<int>& masked, const ObjectiveOptions& options, int curve_instances);

/// Seeded choice of `count` region ids out of n.
std::set<int> choose_cold_start(int n_regions, int count, std::uint64_t seed);

ObjectiveOptions inference_objective(const TrainConfig& config);

struct ProtocolRun {
  TrainResult training;
  Evaluation evaluation;
  std::set<int> masked;
};

/// Training half of a protocol: the seeded masked set and the trained model.
struct ProtocolTraining {
  TrainResult training;
  std::set<int> masked;
};

/// Per-seed settings: the seed and the dataset's context dimension filled in.
ExperimentSettings seeded_settings(const ExperimentSettings& settings, const CityDataset& city, std::uint64_t seed);

ProtocolTraining train_coldstart(const CityDataset& city, const ExperimentSettings& settings, std::uint64_t seed);
ProtocolTraining train_transfer(const CityDataset& source, const CityDataset& target,
                                const ExperimentSettings& settings, std::uint64_t seed);

/// Trains with the held-out regions removed, tests on the full graph.
ProtocolRun run_coldstart(const CityDataset& city, const ExperimentSettings& settings, std::uint64_t seed);

/// Trains on every source region, tests on the full target graph with a
/// seeded set of target regions masked. The bank holds source windows only.
ProtocolRun run_transfer(const CityDataset& source, const CityDataset& target, const ExperimentSettings& settings,
                         std::uint64_t seed);

/// Test-split evaluation of a trained model for the single-city protocol.
Evaluation evaluate_coldstart(const TrainedModel& model, const CityDataset& city, const std::set<int>& held_out,
                              const ExperimentSettings& settings, std::uint64_t seed);

/// Test-split evaluation on a target city with `masked` target regions.
Evaluation evaluate_transfer(const TrainedModel& model, const CityDataset& source, const CityDataset& target,
                             const std::set<int>& masked, const ExperimentSettings& settings, std::uint64_t seed);

/// Mean ||prior - future||_2 (raw units) over the target validation split.
double validation_prior_l2(const TrainedModel& model, const CityDataset& target, const std::set<int>& masked,
                           const ExperimentSettings& settings);

struct AblationRun {
  ProtocolRun with_ret;     // lambda_ret as configured (default 0.2)
  ProtocolRun without_ret;  // lambda_ret = 0
  double rmse_delta = 0.0;  // with - without
  double val_prior_l2_with = 0.0;
  double val_prior_l2_without = 0.0;
};

AblationRun run_ablation_lret(const CityDataset& source, const CityDataset& target,
                              const ExperimentSettings& settings, std::uint64_t seed);

}  // namespace bridge
