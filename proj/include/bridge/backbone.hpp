#pragma once

#include <vector>

#include "bridge/params.hpp"

namespace bridge::backbone {

/// G = C * W_c^T: contexts (n x d_c) into node embeddings (n x d_g).
Matrix project_context(const Matrix& contexts, const Matrix& context_proj);

/// Row-stochastic similarity graph softmax_row(gelu(G G^T)).
Matrix build_adjacency(const Matrix& node_embeddings);

/// Linear temporal encoder over a W x n history (already zero-masked); returns n x d_z.
Matrix encode_history(const Matrix& masked_history, const Matrix& temporal_proj);

/// H^(l+1) = relu(A H^(l) W_l) + H^(l) for every layer weight.
Matrix message_pass(const Matrix& states, const Matrix& adjacency, const std::vector<Matrix>& layer_weights);

/// Row-wise forecasting head: input linear, residual ReLU blocks, output linear. Returns n x H.
Matrix forecast_head(const Matrix& states, const BackboneParams& params);

/// Intermediates of one backbone pass kept for the backward sweep.
struct Trace {
  Matrix contexts;       // n x d_c
  Matrix history;        // W x n
  Matrix embeddings;     // G
  Matrix similarity;     // G G^T
  Matrix adjacency;      // A
  Matrix temporal;       // Z
  std::vector<Matrix> states;       // H^(0) .. H^(L)
  std::vector<Matrix> propagated;   // A H^(l)
  std::vector<Matrix> layer_pre;    // A H^(l) W_l
  std::vector<Matrix> head_states;  // U_0 .. U_B
  std::vector<Matrix> block_pre;    // U_k W_k^T + b_k
  Matrix output;         // n x H
};

Trace forward(const BackboneParams& params, const Matrix& contexts, const Matrix& masked_history);

/// Accumulates dLoss/dparams into `grad` given dLoss/dOutput (n x H).
void backward(const BackboneParams& params, const Trace& trace, const Matrix& d_output, BackboneParams& grad);

}  // namespace bridge::backbone
