#include "bridge/config.hpp"

#include <fstream>

#include "bridge/hashing.hpp"

namespace bridge {

using nlohmann::json;

ExperimentConfig::ExperimentConfig() {
  target_synthetic.name = "synthetic-target";
  target_synthetic.seed = 101;
}

void ExperimentConfig::validate() const {
  if (protocol != "coldstart" && protocol != "transfer" && protocol != "ablation") {
    throw ConfigError("protocol must be one of coldstart, transfer, ablation");
  }
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  synthetic.validate();
  target_synthetic.validate();
  settings.train.validate();
  ModelDims dims = settings.dims;
  dims.validate();
  for (const SyntheticSpec* s : {&synthetic, &target_synthetic}) {
    if (s->window != dims.window || s->horizon != dims.horizon) {
      throw ConfigError("synthetic window/horizon must match model.window/model.horizon");
    }
  }
  if (settings.n_cold_start < 0) throw ConfigError("eval.n_cold_start must be nonnegative");
  if (settings.curve_instances < 0) throw ConfigError("eval.curve_instances must be nonnegative");
}

namespace {

json spec_json(const SyntheticSpec& s) {
  return {{"name", s.name},
          {"n_regions", s.n_regions},
          {"d_c", s.d_c},
          {"n_archetypes", s.n_archetypes},
          {"t_total", s.t_total},
          {"noise_scale", s.noise_scale},
          {"seed", s.seed},
          {"scale_mean", s.scale_mean},
          {"scale_log_sd", s.scale_log_sd},
          {"weekend_factor", s.weekend_factor},
          {"context_jitter", s.context_jitter},
          {"location_extent", s.location_extent},
          {"hour0", s.hour0},
          {"window", s.window},
          {"horizon", s.horizon},
          {"ratios", {s.ratios.train, s.ratios.val, s.ratios.test}}};
}

SyntheticSpec spec_from(const json& j) {
  SyntheticSpec s;
  s.name = j.at("name").get<std::string>();
  s.n_regions = j.at("n_regions").get<int>();
  s.d_c = j.at("d_c").get<int>();
  s.n_archetypes = j.at("n_archetypes").get<int>();
  s.t_total = j.at("t_total").get<int>();
  s.noise_scale = j.at("noise_scale").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.scale_mean = j.at("scale_mean").get<double>();
  s.scale_log_sd = j.at("scale_log_sd").get<double>();
  s.weekend_factor = j.at("weekend_factor").get<double>();
  s.context_jitter = j.at("context_jitter").get<double>();
  s.location_extent = j.at("location_extent").get<double>();
  s.hour0 = j.at("hour0").get<int>();
  s.window = j.at("window").get<int>();
  s.horizon = j.at("horizon").get<int>();
  const auto r = j.at("ratios").get<std::vector<double>>();
  if (r.size() != 3) throw ConfigError("synthetic.ratios must have three entries");
  s.ratios = {r[0], r[1], r[2]};
  return s;
}

/// Rejects any key in `user` that is absent from `reference`, recursively.
void check_known_keys(const json& user, const json& reference, const std::string& prefix) {
  if (!user.is_object()) return;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!reference.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    if (reference.at(it.key()).is_object()) {
      if (!it.value().is_object()) throw ConfigError("config key '" + path + "' must be an object");
      check_known_keys(it.value(), reference.at(it.key()), path);
    }
  }
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  const ModelDims& d = c.settings.dims;
  const TrainConfig& t = c.settings.train;
  return {
      {"protocol", c.protocol},
      {"seeds", c.seeds},
      {"paths",
       {{"dataset", c.paths.dataset},
        {"target_dataset", c.paths.target_dataset},
        {"run_dir", c.paths.run_dir},
        {"report_dir", c.paths.report_dir}}},
      {"synthetic", spec_json(c.synthetic)},
      {"target_synthetic", spec_json(c.target_synthetic)},
      {"model",
       {{"node_dim", d.node_dim},
        {"temporal_dim", d.temporal_dim},
        {"hidden", d.hidden},
        {"head_blocks", d.head_blocks},
        {"gcn_layers", d.gcn_layers},
        {"window", d.window},
        {"horizon", d.horizon},
        {"branch_dim", d.branch_dim},
        {"hour_dim", d.hour_dim},
        {"retriever_hidden", d.retriever_hidden},
        {"retriever_dim", d.retriever_dim}}},
      {"train",
       {{"epochs", t.epochs},
        {"patience", t.patience},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"clip_norm", t.clip_norm},
        {"lambda_ret", t.lambda_ret},
        {"n_inactive", t.n_inactive},
        {"use_retrieval", t.use_retrieval},
        {"supervise_inactive", t.supervise_inactive},
        {"train_stride", t.train_stride},
        {"val_stride", t.val_stride},
        {"log_timing", t.log_timing}}},
      {"retrieval", {{"top_k", t.top_k}, {"temperature", t.temperature}, {"stop_key_grad", t.stop_key_grad},
                     {"hide_masked_windows", t.hide_masked_windows}}},
      {"eval", {{"n_cold_start", c.settings.n_cold_start}, {"curve_instances", c.settings.curve_instances}}},
  };
}

ExperimentConfig config_from_json(const json& user) {
  const json reference = to_json(ExperimentConfig{});
  check_known_keys(user, reference, "");
  json doc = reference;
  doc.merge_patch(user);
  ExperimentConfig c;
  try {
    c.protocol = doc.at("protocol").get<std::string>();
    c.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    const json& p = doc.at("paths");
    c.paths.dataset = p.at("dataset").get<std::string>();
    c.paths.target_dataset = p.at("target_dataset").get<std::string>();
    c.paths.run_dir = p.at("run_dir").get<std::string>();
    c.paths.report_dir = p.at("report_dir").get<std::string>();
    c.synthetic = spec_from(doc.at("synthetic"));
    c.target_synthetic = spec_from(doc.at("target_synthetic"));
    const json& m = doc.at("model");
    ModelDims& d = c.settings.dims;
    d.node_dim = m.at("node_dim").get<int>();
    d.temporal_dim = m.at("temporal_dim").get<int>();
    d.hidden = m.at("hidden").get<int>();
    d.head_blocks = m.at("head_blocks").get<int>();
    d.gcn_layers = m.at("gcn_layers").get<int>();
    d.window = m.at("window").get<int>();
    d.horizon = m.at("horizon").get<int>();
    d.branch_dim = m.at("branch_dim").get<int>();
    d.hour_dim = m.at("hour_dim").get<int>();
    d.retriever_hidden = m.at("retriever_hidden").get<int>();
    d.retriever_dim = m.at("retriever_dim").get<int>();
    const json& t = doc.at("train");
    TrainConfig& tc = c.settings.train;
    tc.epochs = t.at("epochs").get<int>();
    tc.patience = t.at("patience").get<int>();
    tc.batch_size = t.at("batch_size").get<int>();
    tc.learning_rate = t.at("learning_rate").get<double>();
    tc.adam_beta1 = t.at("adam_beta1").get<double>();
    tc.adam_beta2 = t.at("adam_beta2").get<double>();
    tc.adam_eps = t.at("adam_eps").get<double>();
    tc.clip_norm = t.at("clip_norm").get<double>();
    tc.lambda_ret = t.at("lambda_ret").get<double>();
    tc.n_inactive = t.at("n_inactive").get<int>();
    tc.use_retrieval = t.at("use_retrieval").get<bool>();
    tc.supervise_inactive = t.at("supervise_inactive").get<bool>();
    tc.train_stride = t.at("train_stride").get<int>();
    tc.val_stride = t.at("val_stride").get<int>();
    tc.log_timing = t.at("log_timing").get<bool>();
    const json& r = doc.at("retrieval");
    tc.top_k = r.at("top_k").get<int>();
    tc.temperature = r.at("temperature").get<double>();
    tc.stop_key_grad = r.at("stop_key_grad").get<bool>();
    tc.hide_masked_windows = r.at("hide_masked_windows").get<bool>();
    const json& e = doc.at("eval");
    c.settings.n_cold_start = e.at("n_cold_start").get<int>();
    c.settings.curve_instances = e.at("curve_instances").get<int>();
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("malformed config: ") + ex.what());
  }
  c.validate();
  return c;
}

json apply_overrides(json doc, const std::vector<std::string>& assignments) {
  const json reference = to_json(ExperimentConfig{});
  for (const std::string& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + a + "' is not of the form key=value");
    const std::string key = a.substr(0, eq);
    const std::string text = a.substr(eq + 1);
    std::string pointer;
    for (char ch : key) pointer += (ch == '.') ? '/' : ch;
    pointer = "/" + pointer;
    const json::json_pointer ptr(pointer);
    if (!reference.contains(ptr)) throw ConfigError("unknown config key '" + key + "'");
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    doc[ptr] = value;
  }
  return doc;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& assignments) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ConfigError("config file '" + path + "' is not a JSON object");
  }
  return config_from_json(apply_overrides(std::move(doc), assignments));
}

std::string config_hash(const ExperimentConfig& config) { return fnv1a_hex(to_json(config).dump()); }

}  // namespace bridge
