// Acceptance runner: one PASS/FAIL line per criterion.
// Usage: bridge_acceptance [--only N]...

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bridge/config.hpp"
#include "bridge/serialization.hpp"
#include "bridge/toy.hpp"

using namespace bridge;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

// Training budget shared by the experiment criteria.
ExperimentSettings budget_settings() {
  ExperimentSettings s = ExperimentConfig().settings;
  s.train.epochs = 20;
  s.train.train_stride = 2;
  s.train.val_stride = 4;
  return s;
}

Outcome grad_check_toy() {
  const auto start = Clock::now();
  const ToyProblem toy = make_toy_problem(1);
  const auto loss = objective_fn(toy.input, &toy.bank, toy.options);
  const numerics::GradCheckReport r = numerics::grad_check(loss, toy.params, 1e-6, 1e-4, 1);
  const double secs = seconds_since(start);
  bool covered = r.entries.size() == toy.params.names().size();
  for (const auto& e : r.entries) covered = covered && e.coordinates_checked > 0;
  const bool pass = r.passed && r.max_rel_error < 1e-4 && covered && secs < 60.0;
  return {pass, fmt("max_rel_error=%.3e tensors=%.0f seconds=%.1f", r.max_rel_error,
                    static_cast<double>(r.entries.size()), secs) +
                    (covered ? "" : " (not every tensor checked)")};
}

Outcome zero_init() {
  const SyntheticSpec spec;
  const CityDataset city = generate_synthetic_city(spec);
  ExperimentSettings s = seeded_settings(budget_settings(), city, 1);
  const ModelParams params = init_params(s.dims, 1);
  const std::vector<int> regions = all_region_ids(city);
  const std::set<int> masked = choose_cold_start(city.n_regions(), s.n_cold_start, 1);
  std::vector<int> observable;
  for (int r : regions) {
    if (!masked.count(r)) observable.push_back(r);
  }
  const Normalizer norm = fit_normalizer(city, observable);
  const WindowSplit<int> split = split_anchors(city, s.dims.window, s.dims.horizon);
  const retrieval::MemoryBank bank =
      retrieval::build_bank(city, split.train, observable, s.dims.window, s.dims.horizon, norm, params.retriever);
  const ObjectiveOptions opts = inference_objective(s.train);
  double worst = 0.0;
  std::size_t valid_priors = 0;
  for (int i = 0; i < 100; ++i) {
    const int anchor = split.test[static_cast<std::size_t>(i) * split.test.size() / 100];
    const GraphInput in = make_graph_input(city, anchor, regions, masked, norm, s.dims.window, s.dims.horizon, false);
    const ForwardResult r = evaluate_objective(params, in, &bank, opts);
    worst = std::max(worst, (r.fused - r.backbone).cwiseAbs().maxCoeff());
    for (const auto& row : r.retrieval) valid_priors += row.valid ? 1 : 0;
  }
  return {worst <= 1e-12 && valid_priors > 0, fmt("max|fused-backbone|=%.3e over 100 instances", worst)};
}

Outcome retrieval_oracle() {
  ExperimentSettings s = budget_settings();
  s.dims.context_dim = 8;
  const ModelParams params = init_params(s.dims, 3);
  const int w = s.dims.window;
  const int h = s.dims.horizon;
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  auto vec = [&](int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
  };
  std::vector<retrieval::BankEntry> entries;
  for (int i = 0; i < 4950; ++i) {
    retrieval::BankEntry e;
    e.region_id = i % 30;
    e.anchor = i / 30;
    e.hour = static_cast<int>(rng() % kHoursPerDay);
    e.context = vec(8);
    e.history = vec(w);
    e.future = vec(h);
    entries.push_back(e);
  }
  // Exact duplicates force score ties.
  for (int i = 0; i < 50; ++i) {
    retrieval::BankEntry e = entries[static_cast<std::size_t>(i)];
    e.anchor += 10000;
    entries.push_back(e);
  }
  retrieval::MemoryBank bank(entries, Normalizer{});
  bank.encode_keys(params.retriever);
  const int k = s.train.top_k;
  const double temp = s.train.temperature;

  int mismatches = 0;
  int hour_violations = 0;
  double worst_sum = 0.0;
  for (int q = 0; q < 200; ++q) {
    int hour = static_cast<int>(rng() % kHoursPerDay);
    Vector query;
    if (q < 50) {
      query = bank.keys().row(q).transpose();
      hour = bank.entry(static_cast<std::size_t>(q)).hour;
    } else {
      query = retrieval::encode_retrieval(vec(8), vec(w), hour, params.retriever);
    }
    std::vector<std::pair<double, std::size_t>> scan;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      if (bank.entry(i).hour != hour) continue;
      double score = 0.0;
      for (Eigen::Index j = 0; j < query.size(); ++j) score += bank.keys()(static_cast<Eigen::Index>(i), j) * query(j);
      scan.emplace_back(score, i);
    }
    std::sort(scan.begin(), scan.end(), [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    scan.resize(std::min<std::size_t>(scan.size(), static_cast<std::size_t>(k)));
    std::vector<double> alpha(scan.size());
    double total = 0.0;
    for (std::size_t j = 0; j < scan.size(); ++j) {
      alpha[j] = std::exp((scan[j].first - scan.front().first) / temp);
      total += alpha[j];
    }
    for (double& a : alpha) a /= total;
    Vector prior = Vector::Zero(h);
    for (std::size_t j = 0; j < scan.size(); ++j) {
      prior += alpha[j] * bank.normalized_futures().row(static_cast<Eigen::Index>(scan[j].second)).transpose();
    }

    const retrieval::RetrievalRow row = retrieval::retrieve(query, bank, hour, k, temp);
    bool same = row.indices.size() == scan.size() && row.prior == prior;
    for (std::size_t j = 0; same && j < scan.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      same = row.indices[j] == scan[j].second && row.scores(jj) == scan[j].first && row.weights(jj) == alpha[j];
    }
    mismatches += same ? 0 : 1;
    for (std::size_t idx : row.indices) hour_violations += bank.entry(idx).hour == hour ? 0 : 1;
    worst_sum = std::max(worst_sum, std::abs(row.weights.sum() - 1.0));
  }
  const bool pass = mismatches == 0 && hour_violations == 0 && worst_sum <= 1e-9;
  return {pass, fmt("bank=%.0f mismatched_queries=%.0f hour_violations=%.0f max|sum(alpha)-1|=%.2e",
                    static_cast<double>(bank.size()), mismatches, hour_violations, worst_sum)};
}

Outcome splits() {
  const SplitSizes a = split_sizes(4234, SplitRatios{});
  const SplitSizes b = split_sizes(4361, SplitRatios{});
  const CityDataset city = generate_synthetic_city(SyntheticSpec{});
  const WindowSplit<int> s = split_anchors(city, 24, 24);
  const bool pass = a.train == 2540 && a.val == 847 && a.test == 847 && b.train == 2617 && b.val == 872 &&
                    b.test == 872 && s.train.size() == 2540 && s.val.size() == 847 && s.test.size() == 847;
  char buf[200];
  std::snprintf(buf, sizeof buf, "4234 -> %zu/%zu/%zu, 4361 -> %zu/%zu/%zu, generated city -> %zu/%zu/%zu", a.train,
                a.val, a.test, b.train, b.val, b.test, s.train.size(), s.val.size(), s.test.size());
  return {pass, buf};
}

Outcome cold_start() {
  const auto start = Clock::now();
  const CityDataset city = generate_synthetic_city(SyntheticSpec{});
  ExperimentSettings with = budget_settings();
  ExperimentSettings without = with;
  without.train.use_retrieval = false;
  double bridge_mae = 0.0;
  double graph_mae = 0.0;
  for (std::uint64_t seed : kSeeds) {
    const double b = run_coldstart(city, with, seed).evaluation.report.cold_start.mae;
    const double g = run_coldstart(city, without, seed).evaluation.report.cold_start.mae;
    std::printf("  seed %llu: cold-start MAE bridge=%.6f graph-only=%.6f\n", static_cast<unsigned long long>(seed), b,
                g);
    bridge_mae += b / kSeeds.size();
    graph_mae += g / kSeeds.size();
  }
  const double secs = seconds_since(start);
  const double gain = 1.0 - bridge_mae / graph_mae;
  return {gain >= 0.02 && secs < 600.0,
          fmt("mean cold-start MAE bridge=%.6f graph-only=%.6f gain=%.2f%% seconds=%.0f", bridge_mae, graph_mae,
              100.0 * gain, secs)};
}

Outcome transfer() {
  const auto start = Clock::now();
  const ExperimentConfig c;
  const CityDataset source = generate_synthetic_city(c.synthetic);
  const CityDataset target = generate_synthetic_city(c.target_synthetic);
  ExperimentSettings with = budget_settings();
  ExperimentSettings without = with;
  without.train.use_retrieval = false;
  double bridge_rmse = 0.0;
  double graph_rmse = 0.0;
  for (std::uint64_t seed : kSeeds) {
    const double b = run_transfer(source, target, with, seed).evaluation.report.all.rmse;
    const double g = run_transfer(source, target, without, seed).evaluation.report.all.rmse;
    std::printf("  seed %llu: target RMSE bridge=%.6f graph-only=%.6f\n", static_cast<unsigned long long>(seed), b, g);
    bridge_rmse += b / kSeeds.size();
    graph_rmse += g / kSeeds.size();
  }
  const double secs = seconds_since(start);
  return {bridge_rmse < graph_rmse && secs < 900.0,
          fmt("mean target RMSE bridge=%.6f graph-only=%.6f seconds=%.0f", bridge_rmse, graph_rmse, secs)};
}

Outcome lret_ablation() {
  const ExperimentConfig c;
  const CityDataset source = generate_synthetic_city(c.synthetic);
  const CityDataset target = generate_synthetic_city(c.target_synthetic);
  const ExperimentSettings s = budget_settings();
  double with = 0.0;
  double without = 0.0;
  for (std::uint64_t seed : kSeeds) {
    const AblationRun r = run_ablation_lret(source, target, s, seed);
    std::printf("  seed %llu: validation prior L2 with=%.6f without=%.6f\n", static_cast<unsigned long long>(seed),
                r.val_prior_l2_with, r.val_prior_l2_without);
    with += r.val_prior_l2_with / kSeeds.size();
    without += r.val_prior_l2_without / kSeeds.size();
  }
  return {with < without, fmt("mean validation prior L2 lambda=0.2: %.6f lambda=0: %.6f", with, without)};
}

// Small budget shared by the reproducibility and mask criteria.
ExperimentSettings quick_settings() {
  ExperimentSettings s = ExperimentConfig().settings;
  s.train.epochs = 3;
  s.train.train_stride = 16;
  s.train.val_stride = 16;
  return s;
}

struct QuickRun {
  std::string log;
  std::string report;
  TrainedModel model;
  std::set<int> masked;
  ExperimentSettings settings;
};

QuickRun quick_run(const CityDataset& city) {
  const ExperimentConfig c;
  const std::string hash = config_hash(c);
  QuickRun out;
  const ProtocolTraining t = train_coldstart(city, quick_settings(), 1);
  out.settings = seeded_settings(quick_settings(), city, 1);
  out.model = as_trained_model(t.training, out.settings.train);
  out.masked = t.masked;
  out.log = training_log_csv(t.training.log, false, hash);
  const Evaluation ev = evaluate_coldstart(out.model, city, t.masked, out.settings, 1);
  out.report = io::report_to_json(ev.report, hash).dump(2) + io::curves_csv(ev.curves, hash);
  return out;
}

Outcome reproducibility() {
  const CityDataset city = generate_synthetic_city(SyntheticSpec{});
  const CityDataset again = generate_synthetic_city(SyntheticSpec{});
  const bool same_data = city.demand == again.demand && city.contexts() == again.contexts();
  const QuickRun a = quick_run(city);
  const QuickRun b = quick_run(again);
  const bool pass = same_data && a.log == b.log && a.report == b.report;
  return {pass, std::string("dataset ") + (same_data ? "identical" : "differs") + ", training log " +
                    (a.log == b.log ? "identical" : "differs") + ", report " +
                    (a.report == b.report ? "identical" : "differs")};
}

Outcome mask_honesty() {
  const CityDataset city = generate_synthetic_city(SyntheticSpec{});
  const QuickRun run = quick_run(city);
  const int w = run.settings.dims.window;
  const WindowSplit<int> split = split_anchors(city, w, run.settings.dims.horizon);
  std::vector<int> anchors;
  for (int i = 0; i < 20; ++i) anchors.push_back(split.test[static_cast<std::size_t>(i) * split.test.size() / 20]);
  const ObjectiveOptions opts = inference_objective(run.settings.train);
  const Evaluation a = evaluate_model(run.model, city, anchors, run.masked, opts, 20);

  CityDataset altered = city;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> shift(5.0, 50.0);
  for (int anchor : anchors) {
    for (int row = anchor - w + 1; row <= anchor; ++row) {
      for (int r : run.masked) altered.demand(row, r) = shift(rng);
    }
  }
  const Evaluation b = evaluate_model(run.model, altered, anchors, run.masked, opts, 20);
  std::size_t differing = a.curves.size() == b.curves.size() ? 0 : 1;
  for (std::size_t i = 0; differing == 0 && i < a.curves.size(); ++i) {
    const CurvePoint& x = a.curves[i];
    const CurvePoint& y = b.curves[i];
    if (x.prediction != y.prediction || x.backbone != y.backbone || x.prior != y.prior) ++differing;
  }
  return {differing == 0 && !a.curves.empty(),
          fmt("instances=20 curve_points=%.0f differing=%.0f", static_cast<double>(a.curves.size()),
              static_cast<double>(differing))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria (1-9)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "gradient check", grad_check_toy},
      {2, "zero-init fusion", zero_init},
      {3, "retrieval oracle", retrieval_oracle},
      {4, "split fidelity", splits},
      {5, "cold-start gain", cold_start},
      {6, "transfer gain", transfer},
      {7, "retrieval loss ablation", lret_ablation},
      {8, "reproducibility", reproducibility},
      {9, "mask honesty", mask_honesty},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
