#include "bridge/evaluation.hpp"

#include <cmath>
#include <random>

namespace bridge {

Metrics compute_metrics(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("metrics: shape mismatch");
  if (pred.size() == 0) throw std::invalid_argument("metrics: empty input");
  Metrics m;
  m.count = static_cast<std::size_t>(pred.size());
  const auto err = (pred - target).array();
  m.mae = err.abs().mean();
  m.rmse = std::sqrt(err.square().mean());
  const double centered = (target.array() - target.mean()).square().sum();
  if (centered > 1e-12 * std::max(1.0, target.squaredNorm())) m.r2 = 1.0 - err.square().sum() / centered;
  return m;
}

Metrics MetricAccumulator::finish() const {
  Metrics m;
  m.count = count_;
  if (count_ == 0) return m;
  const double n = static_cast<double>(count_);
  m.mae = abs_sum_ / n;
  m.rmse = std::sqrt(sq_sum_ / n);
  const double centered = target_sq_sum_ - target_sum_ * target_sum_ / n;
  if (centered > 1e-12 * std::max(1.0, target_sq_sum_)) m.r2 = 1.0 - sq_sum_ / centered;
  return m;
}

TrainedModel as_trained_model(const TrainResult& result, const TrainConfig& config) {
  return TrainedModel{result.params, result.bank, result.normalizer, config.use_retrieval};
}

ObjectiveOptions inference_objective(const TrainConfig& config) {
  ObjectiveOptions o = training_objective(config);
  o.exclude_self = false;
  return o;
}

Evaluation evaluate_model(const TrainedModel& model, const CityDataset& city, const std::vector<int>& anchors,
                          const std::set<int>& masked, const ObjectiveOptions& options, int curve_instances) {
  const ModelDims& dims = model.params.dims;
  if (city.context_dim() != dims.context_dim) throw DataError("evaluation: context dimension mismatch");
  ObjectiveOptions opts = options;
  opts.use_retrieval = options.use_retrieval && model.use_retrieval;
  const retrieval::MemoryBank* bank = opts.use_retrieval ? &model.bank : nullptr;
  const Normalizer& norm = model.normalizer;
  const std::vector<int> regions = all_region_ids(city);

  Evaluation ev;
  EvalReport& rep = ev.report;
  rep.city = city.name;
  rep.use_retrieval = opts.use_retrieval;
  rep.beta = model.params.fusion.beta_value();
  rep.cold_start_regions.assign(masked.begin(), masked.end());
  rep.n_instances = anchors.size();

  MetricAccumulator all;
  MetricAccumulator cold;
  MetricAccumulator observed;
  std::vector<MetricAccumulator> per_region(regions.size());
  double l2_sum = 0.0;
  std::size_t l2_count = 0;

  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const int anchor = anchors[a];
    const GraphInput in = make_graph_input(city, anchor, regions, masked, norm, dims.window, dims.horizon, false);
    const ForwardResult res = evaluate_objective(model.params, in, bank, opts);
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const int r = regions[i];
      const bool is_cold = masked.count(r) > 0;
      const bool has_prior = !res.retrieval.empty() && res.retrieval[i].valid;
      double sq = 0.0;
      for (int k = 0; k < dims.horizon; ++k) {
        const double truth = city.demand(anchor + 1 + k, r);
        const double pred = norm.inverse(res.fused(row, k));
        all.add(pred, truth);
        (is_cold ? cold : observed).add(pred, truth);
        per_region[i].add(pred, truth);
        double prior = 0.0;
        if (has_prior) {
          prior = norm.inverse(res.retrieval[i].prior(k));
          sq += (prior - truth) * (prior - truth);
        }
        if (static_cast<int>(a) < curve_instances) {
          ev.curves.push_back(CurvePoint{anchor, r, is_cold, k + 1, pred, norm.inverse(res.backbone(row, k)), prior,
                                         truth});
        }
      }
      if (has_prior) {
        l2_sum += std::sqrt(sq);
        ++l2_count;
      }
    }
  }
  rep.all = all.finish();
  rep.cold_start = cold.finish();
  rep.observed = observed.finish();
  for (std::size_t i = 0; i < regions.size(); ++i) {
    rep.per_region.push_back(RegionMetrics{regions[i], masked.count(regions[i]) > 0, per_region[i].finish()});
  }
  if (l2_count > 0) rep.prior_future_l2 = l2_sum / static_cast<double>(l2_count);
  return ev;
}

std::set<int> choose_cold_start(int n_regions, int count, std::uint64_t seed) {
  if (count < 0 || count >= n_regions) {
    throw DataError("cannot hold out " + std::to_string(count) + " of " + std::to_string(n_regions) + " regions");
  }
  std::vector<int> ids(static_cast<std::size_t>(n_regions));
  for (int i = 0; i < n_regions; ++i) ids[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(seed ^ 0xc01d57a27ULL);
  const auto [active, inactive] = sample_active(ids, count, rng);
  return {inactive.begin(), inactive.end()};
}

ExperimentSettings seeded_settings(const ExperimentSettings& settings, const CityDataset& city, std::uint64_t seed) {
  ExperimentSettings s = settings;
  s.dims.context_dim = city.context_dim();
  s.train.seed = seed;
  return s;
}

Evaluation evaluate_coldstart(const TrainedModel& model, const CityDataset& city, const std::set<int>& held_out,
                              const ExperimentSettings& settings, std::uint64_t seed) {
  const WindowSplit<int> anchors = split_anchors(city, settings.dims.window, settings.dims.horizon);
  Evaluation ev = evaluate_model(model, city, anchors.test, held_out, inference_objective(settings.train),
                                 settings.curve_instances);
  ev.report.protocol = "coldstart";
  ev.report.seed = seed;
  ev.report.source_city = city.name;
  ev.report.lambda_ret = settings.train.lambda_ret;
  return ev;
}

Evaluation evaluate_transfer(const TrainedModel& model, const CityDataset& source, const CityDataset& target,
                             const std::set<int>& masked, const ExperimentSettings& settings, std::uint64_t seed) {
  if (source.context_dim() != target.context_dim()) {
    throw DataError("transfer: source and target context dimensions differ");
  }
  const WindowSplit<int> anchors = split_anchors(target, settings.dims.window, settings.dims.horizon);
  Evaluation ev = evaluate_model(model, target, anchors.test, masked, inference_objective(settings.train),
                                 settings.curve_instances);
  ev.report.protocol = "transfer";
  ev.report.seed = seed;
  ev.report.source_city = source.name;
  ev.report.lambda_ret = settings.train.lambda_ret;
  return ev;
}

ProtocolTraining train_coldstart(const CityDataset& city, const ExperimentSettings& settings, std::uint64_t seed) {
  if (city.n_regions() <= settings.n_cold_start) {
    throw DataError("coldstart protocol needs more than " + std::to_string(settings.n_cold_start) + " regions");
  }
  const ExperimentSettings s = seeded_settings(settings, city, seed);
  ProtocolTraining out;
  out.masked = choose_cold_start(city.n_regions(), s.n_cold_start, seed);
  std::vector<int> observable;
  for (int r : all_region_ids(city)) {
    if (out.masked.count(r) == 0) observable.push_back(r);
  }
  const TrainingTask task = make_training_task(city, observable, s.dims, s.train);
  out.training = train(task, s.dims, s.train);
  return out;
}

ProtocolTraining train_transfer(const CityDataset& source, const CityDataset& target,
                                const ExperimentSettings& settings, std::uint64_t seed) {
  if (source.context_dim() != target.context_dim()) {
    throw DataError("transfer: source and target context dimensions differ");
  }
  if (target.n_regions() <= settings.n_cold_start) {
    throw DataError("transfer protocol needs more than " + std::to_string(settings.n_cold_start) + " target regions");
  }
  const ExperimentSettings s = seeded_settings(settings, source, seed);
  ProtocolTraining out;
  out.masked = choose_cold_start(target.n_regions(), s.n_cold_start, seed);
  const TrainingTask task = make_training_task(source, all_region_ids(source), s.dims, s.train);
  out.training = train(task, s.dims, s.train);
  return out;
}

ProtocolRun run_coldstart(const CityDataset& city, const ExperimentSettings& settings, std::uint64_t seed) {
  ProtocolTraining t = train_coldstart(city, settings, seed);
  const ExperimentSettings s = seeded_settings(settings, city, seed);
  ProtocolRun run{std::move(t.training), {}, std::move(t.masked)};
  run.evaluation = evaluate_coldstart(as_trained_model(run.training, s.train), city, run.masked, s, seed);
  run.evaluation.report.best_epoch = run.training.best_epoch;
  return run;
}

ProtocolRun run_transfer(const CityDataset& source, const CityDataset& target, const ExperimentSettings& settings,
                         std::uint64_t seed) {
  ProtocolTraining t = train_transfer(source, target, settings, seed);
  const ExperimentSettings s = seeded_settings(settings, source, seed);
  ProtocolRun run{std::move(t.training), {}, std::move(t.masked)};
  run.evaluation = evaluate_transfer(as_trained_model(run.training, s.train), source, target, run.masked, s, seed);
  run.evaluation.report.best_epoch = run.training.best_epoch;
  return run;
}

double validation_prior_l2(const TrainedModel& model, const CityDataset& target, const std::set<int>& masked,
                           const ExperimentSettings& settings) {
  const WindowSplit<int> anchors = split_anchors(target, settings.dims.window, settings.dims.horizon);
  std::vector<int> val;
  for (std::size_t i = 0; i < anchors.val.size(); i += static_cast<std::size_t>(settings.train.val_stride)) {
    val.push_back(anchors.val[i]);
  }
  ObjectiveOptions opts = inference_objective(settings.train);
  opts.use_retrieval = true;
  const Evaluation ev = evaluate_model(model, target, val, masked, opts, 0);
  if (!ev.report.prior_future_l2) throw DataError("validation_prior_l2: no valid retrieval prior");
  return *ev.report.prior_future_l2;
}

AblationRun run_ablation_lret(const CityDataset& source, const CityDataset& target,
                              const ExperimentSettings& settings, std::uint64_t seed) {
  AblationRun out;
  ExperimentSettings with = settings;
  with.train.use_retrieval = true;
  ExperimentSettings without = with;
  without.train.lambda_ret = 0.0;
  out.with_ret = run_transfer(source, target, with, seed);
  out.without_ret = run_transfer(source, target, without, seed);
  out.with_ret.evaluation.report.protocol = "ablation";
  out.without_ret.evaluation.report.protocol = "ablation";
  out.rmse_delta = out.with_ret.evaluation.report.all.rmse - out.without_ret.evaluation.report.all.rmse;
  out.val_prior_l2_with = validation_prior_l2(as_trained_model(out.with_ret.training, with.train), target,
                                              out.with_ret.masked, with);
  out.val_prior_l2_without = validation_prior_l2(as_trained_model(out.without_ret.training, without.train), target,
                                                 out.without_ret.masked, without);
  return out;
}

}  // namespace bridge
