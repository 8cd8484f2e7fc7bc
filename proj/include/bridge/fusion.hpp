#pragma once

#include <vector>

#include "bridge/params.hpp"

namespace bridge::fusion {

/// y_hat = y_tilde + beta * (u .* W_p p), u = sigmoid(W_g [y_tilde || W_p p]).
/// With prior_valid == false the backbone forecast is returned unchanged.
Vector fuse(const Vector& backbone_forecast, const Vector& prior, const FusionParams& params, bool prior_valid);

struct Trace {
  Matrix backbone;   // n x H
  Matrix prior;      // n x H
  Matrix projected;  // n x H, p W_p^T
  Matrix gate;       // n x H, u
  std::vector<bool> valid;
  Matrix output;     // n x H
};

/// Row-wise fusion over n regions.
Trace forward(const FusionParams& params, const Matrix& backbone_forecast, const Matrix& priors,
              const std::vector<bool>& prior_valid);

struct Gradients {
  Matrix d_backbone;  // n x H
  Matrix d_prior;     // n x H
};

Gradients backward(const FusionParams& params, const Trace& trace, const Matrix& d_output, FusionParams& grad);

}  // namespace bridge::fusion
