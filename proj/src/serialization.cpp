#include "bridge/serialization.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include "bridge/hashing.hpp"

namespace bridge::io {

namespace fs = std::filesystem;

namespace {

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  Vector v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
  return v;
}

json matrix_json(const Matrix& m) {
  return {{"shape", {m.rows(), m.cols()}}, {"values", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from(const json& j) {
  const auto shape = j.at("shape").get<std::vector<long>>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0 ||
      static_cast<std::size_t>(shape[0] * shape[1]) != values.size()) {
    throw DataError("matrix shape does not match its values");
  }
  Matrix m(shape[0], shape[1]);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

json normalizer_json(const Normalizer& n) { return {{"mean", n.mean}, {"std", n.std}}; }

Normalizer normalizer_from(const json& j) {
  Normalizer n;
  n.mean = j.at("mean").get<double>();
  n.std = j.at("std").get<double>();
  if (!(n.std > 0.0)) throw DataError("normalizer std must be positive");
  return n;
}

template <typename F>
auto parse_or_throw(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& ex) {
    throw DataError("malformed " + what + ": " + ex.what());
  }
}

}  // namespace

json dataset_to_json(const CityDataset& city) {
  json regions = json::array();
  for (const Region& r : city.regions) regions.push_back({{"id", r.id}, {"context", vector_json(r.context)}});
  return {{"name", city.name},
          {"d_c", city.context_dim()},
          {"regions", regions},
          {"demand", matrix_json(city.demand)},
          {"hour0", city.hour0},
          {"split_boundaries", {{"train_end", city.split.train_end}, {"val_end", city.split.val_end}}}};
}

CityDataset dataset_from_json(const json& doc) {
  CityDataset city = parse_or_throw("dataset", [&] {
    CityDataset c;
    c.name = doc.at("name").get<std::string>();
    const int d_c = doc.at("d_c").get<int>();
    for (const json& r : doc.at("regions")) {
      Region region{r.at("id").get<int>(), vector_from(r.at("context"))};
      if (region.context.size() != d_c) throw DataError("region context length differs from d_c");
      c.regions.push_back(std::move(region));
    }
    c.demand = matrix_from(doc.at("demand"));
    c.hour0 = doc.at("hour0").get<int>();
    const json& s = doc.at("split_boundaries");
    c.split.train_end = s.at("train_end").get<int>();
    c.split.val_end = s.at("val_end").get<int>();
    return c;
  });
  city.validate();
  return city;
}

void save_dataset(const CityDataset& city, const std::string& path) { write_text(path, dataset_to_json(city).dump() + "\n"); }

CityDataset load_dataset(const std::string& path) {
  const json doc = json::parse(read_text(path), nullptr, false);
  if (doc.is_discarded()) throw DataError("dataset file '" + path + "' is not valid JSON");
  return dataset_from_json(doc);
}

json dims_to_json(const ModelDims& d) {
  return {{"context_dim", d.context_dim},   {"node_dim", d.node_dim},       {"temporal_dim", d.temporal_dim},
          {"hidden", d.hidden},             {"head_blocks", d.head_blocks}, {"gcn_layers", d.gcn_layers},
          {"window", d.window},             {"horizon", d.horizon},         {"branch_dim", d.branch_dim},
          {"hour_dim", d.hour_dim},         {"retriever_hidden", d.retriever_hidden},
          {"retriever_dim", d.retriever_dim}};
}

ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.context_dim = j.at("context_dim").get<int>();
  d.node_dim = j.at("node_dim").get<int>();
  d.temporal_dim = j.at("temporal_dim").get<int>();
  d.hidden = j.at("hidden").get<int>();
  d.head_blocks = j.at("head_blocks").get<int>();
  d.gcn_layers = j.at("gcn_layers").get<int>();
  d.window = j.at("window").get<int>();
  d.horizon = j.at("horizon").get<int>();
  d.branch_dim = j.at("branch_dim").get<int>();
  d.hour_dim = j.at("hour_dim").get<int>();
  d.retriever_hidden = j.at("retriever_hidden").get<int>();
  d.retriever_dim = j.at("retriever_dim").get<int>();
  return d;
}

json params_to_json(const ModelParams& params) {
  json out = json::object();
  params.for_each([&](const std::string& name, const Matrix& m) { out[name] = matrix_json(m); });
  return out;
}

ModelParams params_from_json(const json& doc, const ModelDims& dims) {
  ModelParams p = zero_params(dims);
  std::size_t seen = 0;
  p.for_each([&](const std::string& name, Matrix& m) {
    if (!doc.contains(name)) throw DataError("checkpoint is missing parameter '" + name + "'");
    const Matrix loaded = matrix_from(doc.at(name));
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) {
      throw DataError("checkpoint parameter '" + name + "' has the wrong shape");
    }
    m = loaded;
    ++seen;
  });
  if (seen != doc.size()) throw DataError("checkpoint holds unknown parameters");
  return p;
}

json checkpoint_to_json(const Checkpoint& c) {
  return {{"format", "bridge-checkpoint-1"},
          {"config_hash", c.config_hash},
          {"config", c.config},
          {"seed", c.seed},
          {"best_epoch", c.best_epoch},
          {"use_retrieval", c.use_retrieval},
          {"lambda_ret", c.lambda_ret},
          {"dims", dims_to_json(c.params.dims)},
          {"normalizer", normalizer_json(c.normalizer)},
          {"encoder_version", c.encoder_version},
          {"bank_checksum", c.bank_checksum},
          {"observable", c.observable},
          {"masked", c.masked},
          {"params", params_to_json(c.params)}};
}

Checkpoint checkpoint_from_json(const json& doc) {
  return parse_or_throw("checkpoint", [&] {
    Checkpoint c;
    c.config_hash = doc.at("config_hash").get<std::string>();
    c.config = doc.at("config");
    c.seed = doc.at("seed").get<std::uint64_t>();
    c.best_epoch = doc.at("best_epoch").get<int>();
    c.use_retrieval = doc.at("use_retrieval").get<bool>();
    c.lambda_ret = doc.at("lambda_ret").get<double>();
    c.params = params_from_json(doc.at("params"), dims_from_json(doc.at("dims")));
    c.normalizer = normalizer_from(doc.at("normalizer"));
    c.encoder_version = doc.at("encoder_version").get<std::string>();
    c.bank_checksum = doc.at("bank_checksum").get<std::string>();
    c.observable = doc.at("observable").get<std::vector<int>>();
    c.masked = doc.at("masked").get<std::vector<int>>();
    if (c.encoder_version != retriever_fingerprint(c.params.retriever)) {
      throw VersionMismatchError("checkpoint encoder_version does not match its retriever weights");
    }
    return c;
  });
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_text(path, checkpoint_to_json(ckpt).dump() + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  const json doc = json::parse(read_text(path), nullptr, false);
  if (doc.is_discarded()) throw DataError("checkpoint '" + path + "' is not valid JSON");
  return checkpoint_from_json(doc);
}

std::string bank_jsonl(const retrieval::MemoryBank& bank, const std::string& config_hash) {
  std::ostringstream out;
  const json header = {{"format", "bridge-bank-1"},
                       {"config_hash", config_hash},
                       {"encoder_version", bank.encoder_version()},
                       {"checksum", bank.empty() ? std::string() : bank.checksum()},
                       {"entries", bank.size()},
                       {"normalizer", normalizer_json(bank.normalizer())}};
  out << header.dump() << '\n';
  for (const retrieval::BankEntry& e : bank.entries()) {
    const json line = {{"region_id", e.region_id}, {"anchor", e.anchor},          {"hour", e.hour},
                       {"context", vector_json(e.context)}, {"history", vector_json(e.history)},
                       {"future", vector_json(e.future)}};
    out << line.dump() << '\n';
  }
  return out.str();
}

void save_bank(const retrieval::MemoryBank& bank, const std::string& path, const std::string& config_hash) {
  write_text(path, bank_jsonl(bank, config_hash));
}

retrieval::MemoryBank parse_bank(const std::string& text, const Checkpoint& ckpt) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("bank file is empty");
  const json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object()) throw DataError("bank header is not valid JSON");
  std::vector<retrieval::BankEntry> entries;
  const auto [declared, normalizer, version, checksum] = parse_or_throw("bank", [&] {
    std::size_t n = header.at("entries").get<std::size_t>();
    Normalizer norm = normalizer_from(header.at("normalizer"));
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) throw DataError("bank entry is not valid JSON");
      retrieval::BankEntry e;
      e.region_id = j.at("region_id").get<int>();
      e.anchor = j.at("anchor").get<int>();
      e.hour = j.at("hour").get<int>();
      e.context = vector_from(j.at("context"));
      e.history = vector_from(j.at("history"));
      e.future = vector_from(j.at("future"));
      entries.push_back(std::move(e));
    }
    return std::tuple{n, norm, header.at("encoder_version").get<std::string>(),
                      header.at("checksum").get<std::string>()};
  });
  if (declared == 0 && entries.empty() && !ckpt.use_retrieval) return {};
  if (version != ckpt.encoder_version) {
    throw VersionMismatchError("bank encoder_version " + version + " does not match checkpoint " +
                               ckpt.encoder_version);
  }
  if (declared != entries.size()) throw VersionMismatchError("bank entry count differs from its header");
  if (entries.empty()) throw VersionMismatchError("checkpoint expects a nonempty bank");
  retrieval::MemoryBank bank(std::move(entries), normalizer);
  if (bank.checksum() != checksum || checksum != ckpt.bank_checksum) {
    throw VersionMismatchError("bank checksum mismatch");
  }
  bank.encode_keys(ckpt.params.retriever);
  return bank;
}

retrieval::MemoryBank load_bank(const std::string& path, const Checkpoint& ckpt) {
  return parse_bank(read_text(path), ckpt);
}

json metrics_to_json(const Metrics& m) {
  return {{"mae", m.mae}, {"rmse", m.rmse}, {"r2", m.r2 ? json(*m.r2) : json(nullptr)}, {"count", m.count}};
}

json report_to_json(const EvalReport& r, const std::string& config_hash) {
  json regions = json::array();
  for (const RegionMetrics& rm : r.per_region) {
    json j = metrics_to_json(rm.metrics);
    j["region_id"] = rm.region_id;
    j["cold_start"] = rm.cold_start;
    regions.push_back(j);
  }
  return {{"config_hash", config_hash},
          {"protocol", r.protocol},
          {"seed", r.seed},
          {"city", r.city},
          {"source_city", r.source_city},
          {"use_retrieval", r.use_retrieval},
          {"lambda_ret", r.lambda_ret},
          {"beta", r.beta},
          {"best_epoch", r.best_epoch},
          {"n_instances", r.n_instances},
          {"all", metrics_to_json(r.all)},
          {"cold_start", metrics_to_json(r.cold_start)},
          {"observed", metrics_to_json(r.observed)},
          {"cold_start_regions", r.cold_start_regions},
          {"prior_future_l2", r.prior_future_l2 ? json(*r.prior_future_l2) : json(nullptr)},
          {"per_region", regions}};
}

std::string curves_csv(const std::vector<CurvePoint>& curves, const std::string& config_hash) {
  std::ostringstream out;
  out.precision(17);
  out << "# config_hash=" << config_hash << '\n';
  out << "anchor,region_id,cold_start,step,prediction,backbone,prior,truth\n";
  for (const CurvePoint& c : curves) {
    out << c.anchor << ',' << c.region_id << ',' << (c.cold_start ? 1 : 0) << ',' << c.step << ','
        << c.prediction << ',' << c.backbone << ',' << c.prior << ',' << c.truth << '\n';
  }
  return out.str();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& content) {
  const fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << content;
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace bridge::io
