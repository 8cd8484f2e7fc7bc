#pragma once

#include <set>
#include <vector>

#include "bridge/backbone.hpp"
#include "bridge/datamodel.hpp"
#include "bridge/fusion.hpp"
#include "bridge/params.hpp"
#include "bridge/retrieval.hpp"

namespace bridge {

/// One forecasting instance restricted to a region set, in normalized space.
struct GraphInput {
  std::vector<int> region_ids;   // dataset ids, row order of every matrix below
  Matrix contexts;               // n x d_c
  Matrix history;                // W x n, masked columns are exactly zero
  Matrix target;                 // n x H, empty when no supervision is available
  std::vector<bool> observed;    // history mask per row
  std::vector<bool> supervised;  // rows that enter the forecasting loss
  int anchor = 0;
  int hour = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(region_ids.size()); }
};

/// Builds the model input for `region_ids` at `anchor`. Regions in `masked`
/// get a zero history and are never read from the raw demand matrix.
GraphInput make_graph_input(const CityDataset& city, int anchor, const std::vector<int>& region_ids,
                            const std::set<int>& masked, const Normalizer& normalizer, int window,
                            int horizon, bool with_target);

struct ObjectiveOptions {
  bool use_retrieval = true;
  bool exclude_self = false;  // drop the (anchor, region) entry from each query's candidates
  bool hide_masked_windows = true;  // masked regions never retrieve their own stored windows
  int top_k = 8;
  double temperature = 0.1;
  double lambda_ret = 0.2;
  bool stop_key_grad = false;
};

struct ForwardResult {
  Matrix backbone;  // n x H, normalized
  Matrix fused;     // n x H, normalized
  std::vector<retrieval::RetrievalRow> retrieval;
  double loss = 0.0;
  double pred_loss = 0.0;
  double ret_loss = 0.0;
  std::size_t ret_regions = 0;
};

/// (1 / (|S| H)) sum_{i in S} |pred_i - target_i|_1. Writes the subgradient
/// into `d_pred` when non-null.
double masked_l1(const Matrix& pred, const Matrix& target, const std::vector<bool>& supervise,
                 Matrix* d_pred = nullptr);

/// Full forward pass; when the input carries a target the objective
/// L_pred + lambda_ret * L_ret is evaluated. When `grad` is non-null the
/// gradient is ADDED to it.
ForwardResult evaluate_objective(const ModelParams& params, const GraphInput& input,
                                 const retrieval::MemoryBank* bank, const ObjectiveOptions& options,
                                 ModelParams* grad = nullptr);

/// Loss function over parameters for numerics::grad_check (gradient overwritten).
numerics::LossFn<ModelParams> objective_fn(const GraphInput& input, const retrieval::MemoryBank* bank,
                                           const ObjectiveOptions& options);

}  // namespace bridge
