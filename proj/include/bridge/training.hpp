#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bridge/model.hpp"

namespace bridge {

struct TrainConfig {
  int epochs = 100;
  int patience = 10;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;

  double lambda_ret = 0.2;
  int top_k = 8;
  double temperature = 0.1;
  int n_inactive = 6;
  std::uint64_t seed = 1;

  bool use_retrieval = true;     // false gives the graph-only ablation (beta stays 0)
  bool stop_key_grad = false;
  bool hide_masked_windows = true;  // a masked query never sees its own region's stored windows
  bool supervise_inactive = true;
  int train_stride = 1;          // anchor subsampling of the train split
  int val_stride = 1;
  bool log_timing = false;       // wall-clock seconds in the log (breaks byte-reproducibility)

  void validate() const;
};

/// Uniform draw of `n_inactive` regions without replacement; returns
/// (active, inactive), both sorted by id.
std::pair<std::vector<int>, std::vector<int>> sample_active(const std::vector<int>& observable, int n_inactive,
                                                            std::mt19937_64& rng);

/// First/second-moment adaptive update with bias correction.
class AdamOptimizer {
 public:
  AdamOptimizer(const ModelParams& like, double learning_rate, double beta1, double beta2, double eps);
  void step(ModelParams& params, const ModelParams& grad);
  long steps() const { return step_; }

 private:
  ModelParams first_;
  ModelParams second_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long step_ = 0;
};

/// Rescales `grad` in place so its global L2 norm is at most `max_norm`; returns the pre-clip norm.
double clip_global_norm(ModelParams& grad, double max_norm);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_pred_loss = 0.0;
  double train_ret_loss = 0.0;
  double val_mae = 0.0;
  double val_rmse = 0.0;
  double seconds = 0.0;
};

/// What a training run sees of a city.
struct TrainingTask {
  const CityDataset* city = nullptr;
  std::vector<int> observable;  // training graph, sorted
  std::vector<int> train_anchors;  // visited each epoch (possibly strided)
  std::vector<int> bank_anchors;   // every train-split anchor
  std::vector<int> val_anchors;
  std::set<int> val_masked;     // fixed inactive set used for validation
  Normalizer normalizer;
};

/// Task over all `observable` regions of `city` with a seeded validation mask.
TrainingTask make_training_task(const CityDataset& city, std::vector<int> observable, const ModelDims& dims,
                                const TrainConfig& config);

struct TrainResult {
  ModelParams params;  // best validation checkpoint
  retrieval::MemoryBank bank;  // keys encoded with `params`; empty for the graph-only ablation
  std::vector<EpochLog> log;
  int best_epoch = 0;
  Normalizer normalizer;
  std::vector<int> observable;
};

TrainResult train(const TrainingTask& task, const ModelDims& dims, const TrainConfig& config);

/// Options for the objective as configured for training.
ObjectiveOptions training_objective(const TrainConfig& config);

/// CSV with columns epoch,train_loss,train_pred_loss,train_ret_loss,val_mae,val_rmse,seconds.
std::string training_log_csv(const std::vector<EpochLog>& log, bool with_timing, const std::string& config_hash);

}  // namespace bridge
