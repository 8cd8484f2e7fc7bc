#include "bridge/model.hpp"

#include <optional>

namespace bridge {

GraphInput make_graph_input(const CityDataset& city, int anchor, const std::vector<int>& region_ids,
                            const std::set<int>& masked, const Normalizer& normalizer, int window,
                            int horizon, bool with_target) {
  if (anchor - window + 1 < 0 || anchor + horizon >= city.t_total()) {
    throw DataError("graph input: anchor " + std::to_string(anchor) + " out of range");
  }
  GraphInput in;
  in.region_ids = region_ids;
  in.anchor = anchor;
  in.hour = city.hour_at(anchor);
  in.contexts = city.contexts(region_ids);
  const auto n = static_cast<Eigen::Index>(region_ids.size());
  in.history = Matrix::Zero(window, n);
  in.observed.assign(region_ids.size(), true);
  in.supervised.assign(region_ids.size(), with_target);
  if (with_target) in.target.resize(n, horizon);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int r = region_ids[static_cast<std::size_t>(i)];
    if (masked.count(r) > 0) {
      in.observed[static_cast<std::size_t>(i)] = false;
    } else {
      for (int k = 0; k < window; ++k) {
        in.history(k, i) = normalizer.forward(city.demand(anchor - window + 1 + k, r));
      }
    }
    if (with_target) {
      for (int k = 0; k < horizon; ++k) in.target(i, k) = normalizer.forward(city.demand(anchor + 1 + k, r));
    }
  }
  return in;
}

double masked_l1(const Matrix& pred, const Matrix& target, const std::vector<bool>& supervise, Matrix* d_pred) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
      supervise.size() != static_cast<std::size_t>(pred.rows())) {
    throw ShapeError("masked_l1: shape mismatch");
  }
  std::size_t count = 0;
  for (bool s : supervise) count += s ? 1 : 0;
  if (count == 0) throw std::invalid_argument("masked_l1: empty supervision set");
  const double scale = 1.0 / (static_cast<double>(count) * static_cast<double>(pred.cols()));
  double total = 0.0;
  if (d_pred != nullptr) d_pred->setZero(pred.rows(), pred.cols());
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!supervise[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index k = 0; k < pred.cols(); ++k) {
      const double e = pred(i, k) - target(i, k);
      total += std::abs(e);
      if (d_pred != nullptr) (*d_pred)(i, k) = e > 0 ? scale : (e < 0 ? -scale : 0.0);
    }
  }
  return total * scale;
}

ForwardResult evaluate_objective(const ModelParams& params, const GraphInput& input,
                                 const retrieval::MemoryBank* bank, const ObjectiveOptions& options,
                                 ModelParams* grad) {
  const Eigen::Index n = input.size();
  const Eigen::Index horizon = params.dims.horizon;
  const bool has_target = input.target.size() > 0;
  if (options.use_retrieval && (bank == nullptr || !bank->has_keys())) {
    throw std::logic_error("evaluate_objective: retrieval enabled without an encoded bank");
  }

  ForwardResult res;
  const backbone::Trace bb = backbone::forward(params.backbone, input.contexts, input.history);
  res.backbone = bb.output;

  std::vector<retrieval::EncodeTrace> queries;
  std::vector<std::optional<std::size_t>> chosen(static_cast<std::size_t>(n));
  std::vector<retrieval::EncodeTrace> chosen_keys(static_cast<std::size_t>(n));
  Matrix priors = Matrix::Zero(n, horizon);
  std::vector<bool> valid(static_cast<std::size_t>(n), false);

  if (options.use_retrieval) {
    queries.reserve(static_cast<std::size_t>(n));
    double ret_total = 0.0;
    Matrix query_rows(n, params.dims.retriever_dim);
    std::vector<std::optional<retrieval::EntryKey>> exclude;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      queries.push_back(retrieval::encode_traced(input.contexts.row(i).transpose(), input.history.col(i),
                                                 input.hour, params.retriever));
      query_rows.row(i) = queries.back().unit.transpose();
      const bool hide = options.hide_masked_windows && !input.observed[ui];
      if (hide || options.exclude_self) {
        exclude.push_back(retrieval::EntryKey{input.anchor, input.region_ids[ui], hide});
      } else {
        exclude.push_back(std::nullopt);
      }
    }
    res.retrieval = retrieval::retrieve_batch(query_rows, *bank, input.hour, options.top_k, options.temperature,
                                              exclude);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const auto& row = res.retrieval[ui];
      valid[ui] = row.valid;
      priors.row(i) = row.prior.transpose();
      if (has_target && row.valid) {
        const std::size_t best = retrieval::future_nearest(row.indices, input.target.row(i).transpose(), *bank);
        chosen[ui] = best;
        Vector key;
        if (options.lambda_ret > 0) {
          const auto& e = bank->entry(best);
          chosen_keys[ui] = retrieval::encode_traced(
              e.context, bank->normalized_histories().row(static_cast<Eigen::Index>(best)).transpose(), e.hour,
              params.retriever);
          key = chosen_keys[ui].unit;
        } else {
          key = bank->keys().row(static_cast<Eigen::Index>(best)).transpose();
        }
        ret_total += 1.0 - queries[ui].unit.dot(key);
        ++res.ret_regions;
      }
    }
    if (res.ret_regions > 0) res.ret_loss = ret_total / static_cast<double>(res.ret_regions);
  }

  const fusion::Trace fz = fusion::forward(params.fusion, bb.output, priors, valid);
  res.fused = fz.output;
  if (!has_target) return res;

  Matrix d_fused;
  res.pred_loss = masked_l1(res.fused, input.target, input.supervised, grad != nullptr ? &d_fused : nullptr);
  res.loss = res.pred_loss + options.lambda_ret * res.ret_loss;
  if (grad == nullptr) return res;

  const fusion::Gradients fg = fusion::backward(params.fusion, fz, d_fused, grad->fusion);
  backbone::backward(params.backbone, bb, fg.d_backbone, grad->backbone);
  if (!options.use_retrieval) return res;

  const double ret_scale = res.ret_regions > 0 ? options.lambda_ret / static_cast<double>(res.ret_regions) : 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto& row = res.retrieval[ui];
    if (!row.valid) continue;
    const Vector& q = queries[ui].unit;
    Vector dq = Vector::Zero(q.size());

    // Prior path: p = sum_j alpha_j y_j with alpha = softmax(q . k_j / T).
    const Vector dp = fg.d_prior.row(i).transpose();
    const auto m = static_cast<Eigen::Index>(row.indices.size());
    Vector d_alpha(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      d_alpha(j) = bank->normalized_futures().row(static_cast<Eigen::Index>(row.indices[static_cast<std::size_t>(j)])).dot(dp.transpose());
    }
    const Vector d_scores = (row.weights.array() * (d_alpha.array() - row.weights.dot(d_alpha))).matrix() /
                            options.temperature;
    for (Eigen::Index j = 0; j < m; ++j) {
      dq += d_scores(j) * bank->keys().row(static_cast<Eigen::Index>(row.indices[static_cast<std::size_t>(j)])).transpose();
    }

    // Retrieval loss: -(lambda / N) q . k*.
    if (chosen[ui] && options.lambda_ret > 0) {
      const auto& key = chosen_keys[ui];
      dq -= ret_scale * key.unit;
      if (!options.stop_key_grad) {
        retrieval::encode_backward(key, -ret_scale * q, params.retriever, grad->retriever);
      }
    }
    retrieval::encode_backward(queries[ui], dq, params.retriever, grad->retriever);
  }
  return res;
}

numerics::LossFn<ModelParams> objective_fn(const GraphInput& input, const retrieval::MemoryBank* bank,
                                           const ObjectiveOptions& options) {
  return [&input, bank, options](const ModelParams& params, ModelParams* grad) {
    if (grad == nullptr) return evaluate_objective(params, input, bank, options).loss;
    *grad = params.zeros_like();
    return evaluate_objective(params, input, bank, options, grad).loss;
  };
}

}  // namespace bridge
