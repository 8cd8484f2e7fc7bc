#include "bridge/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "bridge/metrics.hpp"

namespace bridge {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be nonnegative");
  if (patience < 1) throw ConfigError("train.patience must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (learning_rate < 0) throw ConfigError("train.learning_rate must be nonnegative");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("train: moment decay rates must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("train.adam_eps must be positive");
  if (!(clip_norm > 0)) throw ConfigError("train.clip_norm must be positive");
  if (lambda_ret < 0) throw ConfigError("train.lambda_ret must be nonnegative");
  if (top_k < 1) throw ConfigError("train.top_k must be at least 1");
  if (!(temperature > 0)) throw ConfigError("train.temperature must be positive");
  if (n_inactive < 0) throw ConfigError("train.n_inactive must be nonnegative");
  if (train_stride < 1 || val_stride < 1) throw ConfigError("train strides must be positive");
}

std::pair<std::vector<int>, std::vector<int>> sample_active(const std::vector<int>& observable, int n_inactive,
                                                            std::mt19937_64& rng) {
  if (n_inactive < 0 || static_cast<std::size_t>(n_inactive) >= observable.size()) {
    throw std::invalid_argument("sample_active: n_inactive must be smaller than the observable set");
  }
  std::vector<int> pool = observable;
  // Partial Fisher-Yates: the first n_inactive slots become the inactive draw.
  for (int k = 0; k < n_inactive; ++k) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(k)], pool[pick(rng)]);
  }
  std::vector<int> inactive(pool.begin(), pool.begin() + n_inactive);
  std::vector<int> active(pool.begin() + n_inactive, pool.end());
  std::sort(inactive.begin(), inactive.end());
  std::sort(active.begin(), active.end());
  return {std::move(active), std::move(inactive)};
}

AdamOptimizer::AdamOptimizer(const ModelParams& like, double learning_rate, double beta1, double beta2, double eps)
    : first_(like.zeros_like()), second_(like.zeros_like()), lr_(learning_rate), beta1_(beta1), beta2_(beta2),
      eps_(eps) {}

void AdamOptimizer::step(ModelParams& params, const ModelParams& grad) {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  std::vector<Matrix*> m1;
  std::vector<Matrix*> m2;
  std::vector<const Matrix*> g;
  first_.for_each([&](const std::string&, Matrix& m) { m1.push_back(&m); });
  second_.for_each([&](const std::string&, Matrix& m) { m2.push_back(&m); });
  grad.for_each([&](const std::string&, const Matrix& m) { g.push_back(&m); });
  std::size_t k = 0;
  params.for_each([&](const std::string&, Matrix& p) {
    Matrix& mom1 = *m1[k];
    Matrix& mom2 = *m2[k];
    const Matrix& gk = *g[k];
    mom1 = beta1_ * mom1 + (1.0 - beta1_) * gk;
    mom2 = beta2_ * mom2 + (1.0 - beta2_) * gk.cwiseProduct(gk);
    p.array() -= lr_ * (mom1.array() / c1) / ((mom2.array() / c2).sqrt() + eps_);
    ++k;
  });
}

double clip_global_norm(ModelParams& grad, double max_norm) {
  const double norm = std::sqrt(grad.squared_norm());
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    grad.scale(scale);
  }
  return norm;
}

ObjectiveOptions training_objective(const TrainConfig& config) {
  ObjectiveOptions o;
  o.use_retrieval = config.use_retrieval;
  o.exclude_self = true;
  o.top_k = config.top_k;
  o.temperature = config.temperature;
  o.lambda_ret = config.use_retrieval ? config.lambda_ret : 0.0;
  o.stop_key_grad = config.stop_key_grad;
  o.hide_masked_windows = config.hide_masked_windows;
  return o;
}

TrainingTask make_training_task(const CityDataset& city, std::vector<int> observable, const ModelDims& dims,
                                const TrainConfig& config) {
  std::sort(observable.begin(), observable.end());
  TrainingTask task;
  task.city = &city;
  task.observable = observable;
  const WindowSplit<int> anchors = split_anchors(city, dims.window, dims.horizon);
  task.bank_anchors = anchors.train;
  for (std::size_t i = 0; i < anchors.train.size(); i += static_cast<std::size_t>(config.train_stride)) {
    task.train_anchors.push_back(anchors.train[i]);
  }
  for (std::size_t i = 0; i < anchors.val.size(); i += static_cast<std::size_t>(config.val_stride)) {
    task.val_anchors.push_back(anchors.val[i]);
  }
  std::mt19937_64 rng(config.seed ^ 0x5eedf00dULL);
  const auto split = sample_active(observable, config.n_inactive, rng);
  task.val_masked = std::set<int>(split.second.begin(), split.second.end());
  task.normalizer = fit_normalizer(city, observable);
  return task;
}

namespace {

std::pair<double, double> validate_epoch(const TrainingTask& task, const ModelParams& params,
                                         const retrieval::MemoryBank* bank, const ModelDims& dims,
                                         const ObjectiveOptions& options) {
  MetricAccumulator acc;
  const Normalizer& norm = task.normalizer;
  for (int anchor : task.val_anchors) {
    const GraphInput in =
        make_graph_input(*task.city, anchor, task.observable, task.val_masked, norm, dims.window, dims.horizon, false);
    const ForwardResult res = evaluate_objective(params, in, bank, options);
    for (Eigen::Index i = 0; i < in.size(); ++i) {
      const int r = in.region_ids[static_cast<std::size_t>(i)];
      for (int k = 0; k < dims.horizon; ++k) {
        acc.add(norm.inverse(res.fused(i, k)), task.city->demand(anchor + 1 + k, r));
      }
    }
  }
  const Metrics m = acc.finish();
  return {m.mae, m.rmse};
}

}  // namespace

TrainResult train(const TrainingTask& task, const ModelDims& dims, const TrainConfig& config) {
  config.validate();
  if (task.city == nullptr || task.train_anchors.empty()) throw DataError("train: empty training split");
  if (static_cast<std::size_t>(config.n_inactive) >= task.observable.size()) {
    throw ConfigError("train.n_inactive must be smaller than the number of observable regions");
  }
  const CityDataset& city = *task.city;
  if (city.context_dim() != dims.context_dim) throw ConfigError("model context_dim does not match the dataset");

  TrainResult out;
  out.normalizer = task.normalizer;
  out.observable = task.observable;
  ModelParams params = init_params(dims, config.seed);
  AdamOptimizer optimizer(params, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);
  const ObjectiveOptions options = training_objective(config);
  ObjectiveOptions eval_options = options;
  eval_options.exclude_self = false;

  retrieval::MemoryBank bank;
  if (config.use_retrieval) {
    bank = retrieval::build_bank(city, task.bank_anchors, task.observable, dims.window, dims.horizon,
                                 task.normalizer, params.retriever);
  }
  const retrieval::MemoryBank* bank_ptr = config.use_retrieval ? &bank : nullptr;

  std::mt19937_64 rng(config.seed);
  std::vector<int> order = task.train_anchors;
  ModelParams best = params;
  double best_mae = std::numeric_limits<double>::infinity();
  int since_best = 0;
  ModelParams batch_grad = params.zeros_like();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    double pred_sum = 0.0;
    double ret_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(config.batch_size));
      const auto [active, inactive] = sample_active(task.observable, config.n_inactive, rng);
      const std::set<int> masked(inactive.begin(), inactive.end());
      batch_grad.set_zero();
      for (std::size_t b = b0; b < b1; ++b) {
        GraphInput in = make_graph_input(city, order[b], task.observable, masked, task.normalizer, dims.window,
                                         dims.horizon, true);
        if (!config.supervise_inactive) {
          for (std::size_t i = 0; i < in.supervised.size(); ++i) in.supervised[i] = in.observed[i];
        }
        const ForwardResult res = evaluate_objective(params, in, bank_ptr, options, &batch_grad);
        if (!std::isfinite(res.loss)) {
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", anchor " +
                                std::to_string(order[b]));
        }
        loss_sum += res.loss;
        pred_sum += res.pred_loss;
        ret_sum += res.ret_loss;
        ++seen;
      }
      batch_grad.scale(1.0 / static_cast<double>(b1 - b0));
      if (!batch_grad.all_finite()) throw DivergenceError("non-finite gradient at epoch " + std::to_string(epoch));
      clip_global_norm(batch_grad, config.clip_norm);
      optimizer.step(params, batch_grad);
      if (!params.all_finite()) throw DivergenceError("non-finite parameters at epoch " + std::to_string(epoch));
    }

    if (config.use_retrieval) bank.encode_keys(params.retriever);
    const auto [val_mae, val_rmse] = validate_epoch(task, params, bank_ptr, dims, eval_options);
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(seen);
    entry.train_pred_loss = pred_sum / static_cast<double>(seen);
    entry.train_ret_loss = ret_sum / static_cast<double>(seen);
    entry.val_mae = val_mae;
    entry.val_rmse = val_rmse;
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.log.push_back(entry);
    if (!std::isfinite(val_mae)) throw DivergenceError("non-finite validation MAE at epoch " + std::to_string(epoch));

    if (val_mae < best_mae) {
      best_mae = val_mae;
      best = params;
      out.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  out.params = config.epochs > 0 ? best : params;
  if (config.use_retrieval) {
    bank.encode_keys(out.params.retriever);
    out.bank = std::move(bank);
  }
  return out;
}

std::string training_log_csv(const std::vector<EpochLog>& log, bool with_timing, const std::string& config_hash) {
  std::ostringstream os;
  os << "# config_hash=" << config_hash << "\n";
  os << "epoch,train_loss,train_pred_loss,train_ret_loss,val_mae,val_rmse,seconds\n";
  char buf[512];
  for (const EpochLog& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,", e.epoch, e.train_loss, e.train_pred_loss,
                  e.train_ret_loss, e.val_mae, e.val_rmse);
    os << buf;
    if (with_timing) {
      std::snprintf(buf, sizeof(buf), "%.3f", e.seconds);
      os << buf;
    } else {
      os << "NA";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace bridge
