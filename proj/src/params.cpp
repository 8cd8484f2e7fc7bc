#include "bridge/params.hpp"

#include <cstring>
#include <random>
#include <stdexcept>

#include "bridge/hashing.hpp"

namespace bridge {

void ModelDims::validate() const {
  const int fields[] = {context_dim, node_dim, temporal_dim, hidden, head_blocks, gcn_layers, window,
                        horizon, branch_dim, hour_dim, retriever_hidden, retriever_dim};
  for (int v : fields) {
    if (v < 1) throw ConfigError("model dimensions must all be positive");
  }
}

ModelParams zero_params(const ModelDims& dims) {
  dims.validate();
  ModelParams p;
  p.dims = dims;
  const int d = dims.state_dim();
  auto& b = p.backbone;
  b.context_proj = Matrix::Zero(dims.node_dim, dims.context_dim);
  b.temporal_proj = Matrix::Zero(dims.temporal_dim, dims.window);
  b.gcn_weights.assign(static_cast<std::size_t>(dims.gcn_layers), Matrix::Zero(d, d));
  b.head_in_weight = Matrix::Zero(dims.hidden, d);
  b.head_in_bias = Matrix::Zero(1, dims.hidden);
  b.block_weights.assign(static_cast<std::size_t>(dims.head_blocks), Matrix::Zero(dims.hidden, dims.hidden));
  b.block_biases.assign(static_cast<std::size_t>(dims.head_blocks), Matrix::Zero(1, dims.hidden));
  b.head_out_weight = Matrix::Zero(dims.horizon, dims.hidden);
  b.head_out_bias = Matrix::Zero(1, dims.horizon);

  auto& r = p.retriever;
  r.context_branch = Matrix::Zero(dims.branch_dim, dims.context_dim);
  r.temporal_branch = Matrix::Zero(dims.branch_dim, dims.window + dims.hour_dim);
  r.hour_table = Matrix::Zero(24, dims.hour_dim);
  r.fuse_weight1 = Matrix::Zero(dims.retriever_hidden, 2 * dims.branch_dim);
  r.fuse_bias1 = Matrix::Zero(1, dims.retriever_hidden);
  r.fuse_weight2 = Matrix::Zero(dims.retriever_dim, dims.retriever_hidden);
  r.fuse_bias2 = Matrix::Zero(1, dims.retriever_dim);

  auto& f = p.fusion;
  f.prior_proj = Matrix::Zero(dims.horizon, dims.horizon);
  f.gate = Matrix::Zero(dims.horizon, 2 * dims.horizon);
  f.beta = Matrix::Zero(1, 1);
  return p;
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p = zero_params(dims);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Matrix& m, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };
  auto fan_in = [](const Matrix& m) { return 1.0 / std::sqrt(static_cast<double>(m.cols())); };

  auto& b = p.backbone;
  fill(b.context_proj, fan_in(b.context_proj));
  fill(b.temporal_proj, fan_in(b.temporal_proj));
  for (auto& w : b.gcn_weights) fill(w, fan_in(w));
  fill(b.head_in_weight, fan_in(b.head_in_weight));
  // Residual blocks start small so the stack begins close to identity.
  for (auto& w : b.block_weights) fill(w, 0.5 * fan_in(w));
  fill(b.head_out_weight, fan_in(b.head_out_weight));

  auto& r = p.retriever;
  fill(r.context_branch, fan_in(r.context_branch));
  fill(r.temporal_branch, fan_in(r.temporal_branch));
  fill(r.hour_table, 1.0);
  fill(r.fuse_weight1, std::sqrt(3.0) * fan_in(r.fuse_weight1));
  fill(r.fuse_weight2, fan_in(r.fuse_weight2));

  p.fusion.prior_proj = Matrix::Identity(dims.horizon, dims.horizon);
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  out.set_zero();
  return out;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  for_each([&](const std::string& name, const Matrix&) { out.push_back(name); });
  return out;
}

Matrix& ModelParams::at(const std::string& name) {
  Matrix* found = nullptr;
  for_each([&](const std::string& n, Matrix& m) {
    if (n == name) found = &m;
  });
  if (found == nullptr) throw std::out_of_range("unknown parameter '" + name + "'");
  return *found;
}

const Matrix& ModelParams::at(const std::string& name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

std::size_t ModelParams::coordinate_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

void ModelParams::set_zero() {
  for_each([](const std::string&, Matrix& m) { m.setZero(); });
}

void ModelParams::add_scaled(const ModelParams& other, double scale) {
  std::vector<const Matrix*> rhs;
  other.for_each([&](const std::string&, const Matrix& m) { rhs.push_back(&m); });
  std::size_t k = 0;
  for_each([&](const std::string&, Matrix& m) { m += scale * *rhs[k++]; });
}

void ModelParams::scale(double factor) {
  for_each([factor](const std::string&, Matrix& m) { m *= factor; });
}

double ModelParams::squared_norm() const {
  double total = 0.0;
  for_each([&](const std::string&, const Matrix& m) { total += m.squaredNorm(); });
  return total;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

std::string retriever_fingerprint(const RetrieverParams& params) {
  Fnv1a hash;
  for (const Matrix* m : {&params.context_branch, &params.temporal_branch, &params.hour_table,
                          &params.fuse_weight1, &params.fuse_bias1, &params.fuse_weight2,
                          &params.fuse_bias2}) {
    hash.update(m->rows());
    hash.update(m->cols());
    hash.update(m->data(), static_cast<std::size_t>(m->size()) * sizeof(double));
  }
  return hash.hex();
}

}  // namespace bridge
