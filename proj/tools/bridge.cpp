// bridge: generate, train, eval, ablate, grad-check.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bridge/config.hpp"
#include "bridge/serialization.hpp"
#include "bridge/toy.hpp"

namespace fs = std::filesystem;
using namespace bridge;
using nlohmann::json;

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  bool dry_run = false;
  int epochs = -1;
  std::uint64_t seed = 1;
  double eps = 1e-6;
  double tol = 1e-4;
};

ExperimentConfig resolve(const Options& o) {
  std::vector<std::string> sets = o.sets;
  if (o.epochs >= 0) sets.push_back("train.epochs=" + std::to_string(o.epochs));
  return load_config(o.config_path, sets);
}

std::string seed_dir(const ExperimentConfig& c, std::uint64_t seed) {
  return (fs::path(c.paths.run_dir) / ("seed_" + std::to_string(seed))).string();
}

std::string arm_dir(const std::string& base, bool with_lret) {
  return (fs::path(base) / (with_lret ? "with_lret" : "without_lret")).string();
}

void freeze_config(const ExperimentConfig& c, const std::string& dir) {
  json doc = to_json(c);
  doc["config_hash"] = config_hash(c);
  io::write_text((fs::path(dir) / "config.json").string(), doc.dump(2) + "\n");
}

void print_counts(const CityDataset& city, int window, int horizon) {
  const WindowSplit<int> s = split_anchors(city, window, horizon);
  std::printf("%s: regions=%d windows=%d train=%zu val=%zu test=%zu\n", city.name.c_str(), city.n_regions(),
              window_count(city.t_total(), window, horizon), s.train.size(), s.val.size(), s.test.size());
}

bool needs_target(const ExperimentConfig& c) { return c.protocol != "coldstart"; }

int cmd_generate(const Options& o) {
  const ExperimentConfig c = resolve(o);
  const CityDataset city = generate_synthetic_city(c.synthetic);
  io::save_dataset(city, c.paths.dataset);
  print_counts(city, c.synthetic.window, c.synthetic.horizon);
  if (needs_target(c)) {
    const CityDataset target = generate_synthetic_city(c.target_synthetic);
    io::save_dataset(target, c.paths.target_dataset);
    print_counts(target, c.target_synthetic.window, c.target_synthetic.horizon);
  }
  return 0;
}

void save_training(const ExperimentConfig& c, const ExperimentSettings& settings, const ProtocolTraining& t,
                   std::uint64_t seed, const std::string& dir) {
  const std::string hash = config_hash(c);
  const TrainResult& r = t.training;
  io::Checkpoint ckpt;
  ckpt.params = r.params;
  ckpt.normalizer = r.normalizer;
  ckpt.config = to_json(c);
  ckpt.config_hash = hash;
  ckpt.encoder_version = retriever_fingerprint(r.params.retriever);
  ckpt.bank_checksum = r.bank.empty() ? std::string() : r.bank.checksum();
  ckpt.observable = r.observable;
  ckpt.masked.assign(t.masked.begin(), t.masked.end());
  ckpt.seed = seed;
  ckpt.best_epoch = r.best_epoch;
  ckpt.use_retrieval = settings.train.use_retrieval;
  ckpt.lambda_ret = settings.train.lambda_ret;
  freeze_config(c, dir);
  io::save_checkpoint(ckpt, (fs::path(dir) / "checkpoint.json").string());
  io::save_bank(r.bank, (fs::path(dir) / "bank.jsonl").string(), hash);
  io::write_text((fs::path(dir) / "train_log.csv").string(),
                 training_log_csv(r.log, settings.train.log_timing, hash));
  std::printf("%s: best_epoch=%d epochs_run=%zu\n", dir.c_str(), r.best_epoch, r.log.size());
}

int cmd_train(const Options& o) {
  const ExperimentConfig c = resolve(o);
  const CityDataset source = io::load_dataset(c.paths.dataset);
  CityDataset target;
  if (needs_target(c)) target = io::load_dataset(c.paths.target_dataset);
  if (o.dry_run) {
    const ExperimentSettings s = seeded_settings(c.settings, source, c.seeds.front());
    const ModelParams p = init_params(s.dims, s.train.seed);
    print_counts(source, s.dims.window, s.dims.horizon);
    std::printf("dry run: config %s valid, %zu parameters in %zu tensors\n", config_hash(c).c_str(),
                p.coordinate_count(), p.names().size());
    return 0;
  }
  freeze_config(c, c.paths.run_dir);
  for (std::uint64_t seed : c.seeds) {
    const std::string dir = seed_dir(c, seed);
    if (c.protocol == "coldstart") {
      save_training(c, c.settings, train_coldstart(source, c.settings, seed), seed, dir);
    } else if (c.protocol == "transfer") {
      save_training(c, c.settings, train_transfer(source, target, c.settings, seed), seed, dir);
    } else {
      for (bool with : {true, false}) {
        ExperimentSettings s = c.settings;
        s.train.use_retrieval = true;
        if (!with) s.train.lambda_ret = 0.0;
        save_training(c, s, train_transfer(source, target, s, seed), seed, arm_dir(dir, with));
      }
    }
  }
  return 0;
}

struct LoadedModel {
  io::Checkpoint checkpoint;
  TrainedModel model;
};

LoadedModel load_model(const std::string& dir, const std::string& expected_hash) {
  LoadedModel out;
  out.checkpoint = io::load_checkpoint((fs::path(dir) / "checkpoint.json").string());
  if (out.checkpoint.config_hash != expected_hash) {
    throw VersionMismatchError("checkpoint in " + dir + " was trained with a different config");
  }
  out.model.params = out.checkpoint.params;
  out.model.normalizer = out.checkpoint.normalizer;
  out.model.use_retrieval = out.checkpoint.use_retrieval;
  out.model.bank = io::load_bank((fs::path(dir) / "bank.jsonl").string(), out.checkpoint);
  return out;
}

std::string report_path(const ExperimentConfig& c, const std::string& stem, std::uint64_t seed,
                        const std::string& ext) {
  return (fs::path(c.paths.report_dir) / (stem + "_seed_" + std::to_string(seed) + ext)).string();
}

json mean_block(const std::vector<json>& reports, const std::string& block) {
  double mae = 0.0;
  double rmse = 0.0;
  for (const json& r : reports) {
    mae += r.at(block).at("mae").get<double>();
    rmse += r.at(block).at("rmse").get<double>();
  }
  const double n = static_cast<double>(reports.size());
  return {{"mae", mae / n}, {"rmse", rmse / n}};
}

int cmd_eval(const Options& o, const ExperimentConfig& c) {
  const std::string hash = config_hash(c);
  const CityDataset source = io::load_dataset(c.paths.dataset);
  CityDataset target;
  if (needs_target(c)) target = io::load_dataset(c.paths.target_dataset);
  (void)o;

  std::vector<json> reports;
  std::vector<json> with_reports;
  std::vector<json> without_reports;
  json ablation_rows = json::array();
  for (std::uint64_t seed : c.seeds) {
    const std::string dir = seed_dir(c, seed);
    if (c.protocol == "coldstart" || c.protocol == "transfer") {
      const LoadedModel m = load_model(dir, hash);
      const std::set<int> masked(m.checkpoint.masked.begin(), m.checkpoint.masked.end());
      const ExperimentSettings s = seeded_settings(c.settings, source, seed);
      Evaluation ev = c.protocol == "coldstart" ? evaluate_coldstart(m.model, source, masked, s, seed)
                                                : evaluate_transfer(m.model, source, target, masked, s, seed);
      ev.report.best_epoch = m.checkpoint.best_epoch;
      const json report = io::report_to_json(ev.report, hash);
      io::write_text(report_path(c, "report", seed, ".json"), report.dump(2) + "\n");
      io::write_text(report_path(c, "curves", seed, ".csv"), io::curves_csv(ev.curves, hash));
      reports.push_back(report);
      std::printf("seed %llu: mae=%.6f rmse=%.6f cold_start_mae=%.6f\n", static_cast<unsigned long long>(seed),
                  ev.report.all.mae, ev.report.all.rmse, ev.report.cold_start.mae);
    } else {
      json pair = {{"seed", seed}};
      double rmse[2] = {0.0, 0.0};
      double l2[2] = {0.0, 0.0};
      for (bool with : {true, false}) {
        const LoadedModel m = load_model(arm_dir(dir, with), hash);
        const std::set<int> masked(m.checkpoint.masked.begin(), m.checkpoint.masked.end());
        ExperimentSettings s = seeded_settings(c.settings, source, seed);
        s.train.use_retrieval = true;
        if (!with) s.train.lambda_ret = 0.0;
        Evaluation ev = evaluate_transfer(m.model, source, target, masked, s, seed);
        ev.report.protocol = "ablation";
        ev.report.best_epoch = m.checkpoint.best_epoch;
        const json report = io::report_to_json(ev.report, hash);
        (with ? with_reports : without_reports).push_back(report);
        pair[with ? "with_lret" : "without_lret"] = report;
        rmse[with ? 0 : 1] = ev.report.all.rmse;
        l2[with ? 0 : 1] = validation_prior_l2(m.model, target, masked, s);
        io::write_text(report_path(c, with ? "curves_with_lret" : "curves_without_lret", seed, ".csv"),
                       io::curves_csv(ev.curves, hash));
      }
      pair["rmse_delta"] = rmse[0] - rmse[1];
      pair["val_prior_l2_with"] = l2[0];
      pair["val_prior_l2_without"] = l2[1];
      pair["config_hash"] = hash;
      io::write_text(report_path(c, "ablation", seed, ".json"), pair.dump(2) + "\n");
      ablation_rows.push_back({{"seed", seed}, {"rmse_delta", rmse[0] - rmse[1]}, {"val_prior_l2_with", l2[0]},
                               {"val_prior_l2_without", l2[1]}});
      std::printf("seed %llu: rmse_delta=%.6f val_prior_l2 with=%.6f without=%.6f\n",
                  static_cast<unsigned long long>(seed), rmse[0] - rmse[1], l2[0], l2[1]);
    }
  }

  json summary = {{"config_hash", hash}, {"protocol", c.protocol}, {"seeds", c.seeds}};
  if (!reports.empty()) {
    summary["mean_all"] = mean_block(reports, "all");
    summary["mean_cold_start"] = mean_block(reports, "cold_start");
  } else {
    summary["mean_all_with_lret"] = mean_block(with_reports, "all");
    summary["mean_all_without_lret"] = mean_block(without_reports, "all");
    summary["per_seed"] = ablation_rows;
  }
  io::write_text((fs::path(c.paths.report_dir) / "summary.json").string(), summary.dump(2) + "\n");
  return 0;
}

int cmd_grad_check(const Options& o) {
  const ToyProblem toy = make_toy_problem(o.seed);
  const auto loss = objective_fn(toy.input, &toy.bank, toy.options);
  const numerics::GradCheckReport report = numerics::grad_check(loss, toy.params, o.eps, o.tol, o.seed);
  for (const auto& e : report.entries) {
    std::printf("%-32s coords=%zu max_rel_error=%.3e\n", e.name.c_str(), e.coordinates_checked, e.max_rel_error);
  }
  std::printf("grad-check %s: max_rel_error=%.3e tol=%.1e\n", report.passed ? "PASS" : "FAIL",
              report.max_rel_error, o.tol);
  return report.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented graph demand forecaster"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("-c,--config", o.config_path, "JSON config file (defaults apply when omitted)");
    sub->add_option("--set", o.sets, "Override a config field, e.g. --set train.epochs=5")->take_all();
  };
  CLI::App* generate = app.add_subcommand("generate", "Write the synthetic dataset(s)");
  add_common(generate);
  CLI::App* train_cmd = app.add_subcommand("train", "Train one model per seed");
  add_common(train_cmd);
  train_cmd->add_flag("--dry-run", o.dry_run, "Validate the config and build shapes without training");
  train_cmd->add_option("--epochs", o.epochs, "Shorthand for --set train.epochs=N");
  CLI::App* eval = app.add_subcommand("eval", "Evaluate trained checkpoints and write reports");
  add_common(eval);
  CLI::App* ablate = app.add_subcommand("ablate", "Train and evaluate the lambda_ret ablation");
  add_common(ablate);
  ablate->add_option("--epochs", o.epochs, "Shorthand for --set train.epochs=N");
  CLI::App* grad = app.add_subcommand("grad-check", "Finite-difference check of the full objective on a toy instance");
  grad->add_option("--seed", o.seed, "Toy instance seed");
  grad->add_option("--eps", o.eps, "Central-difference step");
  grad->add_option("--tol", o.tol, "Maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (generate->parsed()) return cmd_generate(o);
    if (train_cmd->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o, resolve(o));
    if (ablate->parsed()) {
      o.sets.push_back("protocol=\"ablation\"");
      const int rc = cmd_train(o);
      return rc != 0 ? rc : cmd_eval(o, resolve(o));
    }
    if (grad->parsed()) return cmd_grad_check(o);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
