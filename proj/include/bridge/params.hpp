#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bridge/numerics.hpp"

namespace bridge {

/// Architecture sizes. Defaults follow the reference configuration
/// (node embedding 32, hidden 64, three head blocks, one message-passing
/// layer, retriever dimension 128, W = H = 24).
struct ModelDims {
  int context_dim = 8;
  int node_dim = 32;       // d_g
  int temporal_dim = 32;   // d_z
  int hidden = 64;
  int head_blocks = 3;
  int gcn_layers = 1;
  int window = 24;
  int horizon = 24;
  int branch_dim = 32;     // width of the retriever's context and temporal branches
  int hour_dim = 8;        // d_h
  int retriever_hidden = 128;
  int retriever_dim = 128; // d_r

  int state_dim() const { return temporal_dim + node_dim; }
  void validate() const;
};

struct BackboneParams {
  Matrix context_proj;              // d_g x d_c
  Matrix temporal_proj;             // d_z x W
  std::vector<Matrix> gcn_weights;  // L of (d_z+d_g) x (d_z+d_g)
  Matrix head_in_weight;            // hidden x (d_z+d_g)
  Matrix head_in_bias;              // 1 x hidden
  std::vector<Matrix> block_weights;  // hidden x hidden
  std::vector<Matrix> block_biases;   // 1 x hidden
  Matrix head_out_weight;           // H x hidden
  Matrix head_out_bias;             // 1 x H
};

struct RetrieverParams {
  Matrix context_branch;   // W_r: branch x d_c
  Matrix temporal_branch;  // W_x: branch x (W + d_h)
  Matrix hour_table;       // 24 x d_h
  Matrix fuse_weight1;     // hidden x 2*branch
  Matrix fuse_bias1;       // 1 x hidden
  Matrix fuse_weight2;     // d_r x hidden
  Matrix fuse_bias2;       // 1 x d_r
};

struct FusionParams {
  Matrix prior_proj;  // W_p: H x H
  Matrix gate;        // W_g: H x 2H
  Matrix beta;        // 1 x 1, starts at exactly 0

  double beta_value() const { return beta(0, 0); }
};

/// Every learnable array of the model, addressable by name.
struct ModelParams {
  ModelDims dims;
  BackboneParams backbone;
  RetrieverParams retriever;
  FusionParams fusion;

  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  /// Same layout, all entries zero.
  ModelParams zeros_like() const;

  std::vector<std::string> names() const;
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  std::size_t coordinate_count() const;

  void set_zero();
  void add_scaled(const ModelParams& other, double scale);
  void scale(double factor);
  double squared_norm() const;
  bool all_finite() const;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    auto& b = self.backbone;
    f(std::string("backbone.context_proj"), b.context_proj);
    f(std::string("backbone.temporal_proj"), b.temporal_proj);
    for (std::size_t l = 0; l < b.gcn_weights.size(); ++l) {
      f("backbone.gcn." + std::to_string(l) + ".weight", b.gcn_weights[l]);
    }
    f(std::string("backbone.head.in.weight"), b.head_in_weight);
    f(std::string("backbone.head.in.bias"), b.head_in_bias);
    for (std::size_t k = 0; k < b.block_weights.size(); ++k) {
      f("backbone.head.block." + std::to_string(k) + ".weight", b.block_weights[k]);
      f("backbone.head.block." + std::to_string(k) + ".bias", b.block_biases[k]);
    }
    f(std::string("backbone.head.out.weight"), b.head_out_weight);
    f(std::string("backbone.head.out.bias"), b.head_out_bias);
    auto& r = self.retriever;
    f(std::string("retriever.context_branch"), r.context_branch);
    f(std::string("retriever.temporal_branch"), r.temporal_branch);
    f(std::string("retriever.hour_table"), r.hour_table);
    f(std::string("retriever.fuse.0.weight"), r.fuse_weight1);
    f(std::string("retriever.fuse.0.bias"), r.fuse_bias1);
    f(std::string("retriever.fuse.1.weight"), r.fuse_weight2);
    f(std::string("retriever.fuse.1.bias"), r.fuse_bias2);
    auto& u = self.fusion;
    f(std::string("fusion.prior_proj"), u.prior_proj);
    f(std::string("fusion.gate"), u.gate);
    f(std::string("fusion.beta"), u.beta);
  }
};

/// Seeded initialization: uniform fan-in scaling for weights, zero biases,
/// identity prior projection, zero gate and beta = 0.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

/// Allocates zero arrays with the shapes implied by `dims`.
ModelParams zero_params(const ModelDims& dims);

/// 64-bit FNV-1a over the raw bytes of the retriever arrays, as hex.
std::string retriever_fingerprint(const RetrieverParams& params);

}  // namespace bridge
