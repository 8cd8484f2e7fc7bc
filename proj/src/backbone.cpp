#include "bridge/backbone.hpp"

namespace bridge::backbone {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

Matrix add_row_bias(Matrix m, const Matrix& bias) {
  m.rowwise() += bias.row(0);
  return m;
}

}  // namespace

Matrix project_context(const Matrix& contexts, const Matrix& context_proj) {
  require(contexts.cols() == context_proj.cols(), "project_context: context dimension mismatch");
  return contexts * context_proj.transpose();
}

Matrix build_adjacency(const Matrix& node_embeddings) {
  require(node_embeddings.rows() >= 1, "build_adjacency: empty region set");
  const Matrix similarity = node_embeddings * node_embeddings.transpose();
  return numerics::row_softmax(numerics::gelu(similarity), 1.0);
}

Matrix encode_history(const Matrix& masked_history, const Matrix& temporal_proj) {
  require(masked_history.rows() == temporal_proj.cols(), "encode_history: window length mismatch");
  return (temporal_proj * masked_history).transpose();
}

Matrix message_pass(const Matrix& states, const Matrix& adjacency, const std::vector<Matrix>& layer_weights) {
  require(adjacency.rows() == states.rows() && adjacency.cols() == states.rows(),
          "message_pass: adjacency does not match region count");
  Matrix h = states;
  for (const Matrix& w : layer_weights) {
    require(w.rows() == w.cols() && w.rows() == h.cols(), "message_pass: layer weight must be square");
    h = numerics::relu(adjacency * h * w) + h;
  }
  return h;
}

Matrix forecast_head(const Matrix& states, const BackboneParams& params) {
  require(states.cols() == params.head_in_weight.cols(), "forecast_head: state width mismatch");
  Matrix u = add_row_bias(states * params.head_in_weight.transpose(), params.head_in_bias);
  for (std::size_t k = 0; k < params.block_weights.size(); ++k) {
    u = numerics::relu(add_row_bias(u * params.block_weights[k].transpose(), params.block_biases[k])) + u;
  }
  return add_row_bias(u * params.head_out_weight.transpose(), params.head_out_bias);
}

Trace forward(const BackboneParams& params, const Matrix& contexts, const Matrix& masked_history) {
  require(contexts.rows() == masked_history.cols(), "backbone: contexts and history disagree on region count");
  Trace t;
  t.contexts = contexts;
  t.history = masked_history;
  t.embeddings = project_context(contexts, params.context_proj);
  t.similarity = t.embeddings * t.embeddings.transpose();
  t.adjacency = numerics::row_softmax(numerics::gelu(t.similarity), 1.0);
  t.temporal = encode_history(masked_history, params.temporal_proj);

  Matrix h0(contexts.rows(), t.temporal.cols() + t.embeddings.cols());
  h0 << t.temporal, t.embeddings;
  t.states.push_back(std::move(h0));
  for (const Matrix& w : params.gcn_weights) {
    require(w.rows() == w.cols() && w.rows() == t.states.back().cols(), "message_pass: layer weight must be square");
    t.propagated.push_back(t.adjacency * t.states.back());
    t.layer_pre.push_back(t.propagated.back() * w);
    t.states.push_back(numerics::relu(t.layer_pre.back()) + t.states.back());
  }

  t.head_states.push_back(add_row_bias(t.states.back() * params.head_in_weight.transpose(), params.head_in_bias));
  for (std::size_t k = 0; k < params.block_weights.size(); ++k) {
    t.block_pre.push_back(add_row_bias(t.head_states.back() * params.block_weights[k].transpose(),
                                       params.block_biases[k]));
    t.head_states.push_back(numerics::relu(t.block_pre.back()) + t.head_states.back());
  }
  t.output = add_row_bias(t.head_states.back() * params.head_out_weight.transpose(), params.head_out_bias);
  return t;
}

void backward(const BackboneParams& params, const Trace& t, const Matrix& d_output, BackboneParams& grad) {
  // Head.
  grad.head_out_weight += d_output.transpose() * t.head_states.back();
  grad.head_out_bias += d_output.colwise().sum();
  Matrix du = d_output * params.head_out_weight;
  for (std::size_t k = params.block_weights.size(); k-- > 0;) {
    const Matrix dpre = du.cwiseProduct(numerics::relu_mask(t.block_pre[k]));
    grad.block_weights[k] += dpre.transpose() * t.head_states[k];
    grad.block_biases[k] += dpre.colwise().sum();
    du += dpre * params.block_weights[k];
  }
  grad.head_in_weight += du.transpose() * t.states.back();
  grad.head_in_bias += du.colwise().sum();
  Matrix dh = du * params.head_in_weight;

  // Message passing.
  Matrix d_adjacency = Matrix::Zero(t.adjacency.rows(), t.adjacency.cols());
  for (std::size_t l = params.gcn_weights.size(); l-- > 0;) {
    const Matrix dpre = dh.cwiseProduct(numerics::relu_mask(t.layer_pre[l]));
    grad.gcn_weights[l] += t.propagated[l].transpose() * dpre;
    const Matrix dprop = dpre * params.gcn_weights[l].transpose();
    d_adjacency += dprop * t.states[l].transpose();
    dh += t.adjacency.transpose() * dprop;
  }

  const Eigen::Index dz = t.temporal.cols();
  const Matrix d_temporal = dh.leftCols(dz);
  Matrix d_embed = dh.rightCols(dh.cols() - dz);

  // Z = (P X)^T  =>  dP = dZ^T X^T
  grad.temporal_proj += d_temporal.transpose() * t.history.transpose();

  // A = softmax(gelu(S)), S = G G^T
  const Matrix d_gelu = numerics::row_softmax_backward(t.adjacency, d_adjacency, 1.0);
  const Matrix d_sim = d_gelu.cwiseProduct(numerics::gelu_grad(t.similarity));
  d_embed += (d_sim + d_sim.transpose()) * t.embeddings;

  grad.context_proj += d_embed.transpose() * t.contexts;
}

}  // namespace bridge::backbone
