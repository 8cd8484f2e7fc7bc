#include "bridge/toy.hpp"

#include <random>

namespace bridge {

ToyProblem make_toy_problem(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.name = "toy";
  spec.n_regions = 4;
  spec.d_c = 4;
  spec.n_archetypes = 2;
  spec.t_total = 40;
  spec.window = 4;
  spec.horizon = 4;
  spec.seed = seed;

  ModelDims dims;
  dims.context_dim = spec.d_c;
  dims.node_dim = 3;
  dims.temporal_dim = 3;
  dims.hidden = 5;
  dims.head_blocks = 2;
  dims.gcn_layers = 1;
  dims.window = 4;
  dims.horizon = 4;
  dims.branch_dim = 3;
  dims.hour_dim = 2;
  dims.retriever_hidden = 6;
  dims.retriever_dim = 4;

  ToyProblem toy;
  toy.city = generate_synthetic_city(spec);
  toy.params = init_params(dims, seed);
  std::mt19937_64 rng(seed ^ 0x70a11ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Move the fusion away from its zero start so every parameter receives gradient.
  for (Eigen::Index i = 0; i < toy.params.fusion.gate.size(); ++i) toy.params.fusion.gate.data()[i] = 0.3 * normal(rng);
  toy.params.fusion.beta(0, 0) = 0.7;

  const std::vector<int> ids = all_region_ids(toy.city);
  const Normalizer norm = fit_normalizer(toy.city, ids);
  const int anchor = 20;
  toy.input = make_graph_input(toy.city, anchor, ids, {1}, norm, dims.window, dims.horizon, true);

  // Five same-hour entries (one of them the query's own window, excluded
  // during training) and one entry from another hour.
  std::vector<retrieval::BankEntry> entries;
  for (int e = 0; e < 6; ++e) {
    retrieval::BankEntry entry;
    entry.region_id = e % 4;
    entry.anchor = e == 0 ? anchor : e;
    entry.hour = e == 5 ? (toy.input.hour + 3) % kHoursPerDay : toy.input.hour;
    entry.context = Vector::NullaryExpr(dims.context_dim, [&] { return normal(rng); });
    entry.history = Vector::NullaryExpr(dims.window, [&] { return 10.0 + 3.0 * normal(rng); });
    entry.future = Vector::NullaryExpr(dims.horizon, [&] { return 10.0 + 3.0 * normal(rng); });
    entries.push_back(std::move(entry));
  }
  toy.bank = retrieval::MemoryBank(std::move(entries), norm);
  toy.bank.encode_keys(toy.params.retriever);

  toy.options.use_retrieval = true;
  toy.options.exclude_self = true;
  toy.options.top_k = 2;
  toy.options.temperature = 0.1;
  toy.options.lambda_ret = 0.2;
  return toy;
}

}  // namespace bridge
