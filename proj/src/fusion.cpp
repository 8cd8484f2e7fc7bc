#include "bridge/fusion.hpp"

namespace bridge::fusion {

Vector fuse(const Vector& backbone_forecast, const Vector& prior, const FusionParams& params, bool prior_valid) {
  const Eigen::Index h = params.prior_proj.rows();
  if (backbone_forecast.size() != h || prior.size() != params.prior_proj.cols() || params.gate.cols() != 2 * h) {
    throw ShapeError("fuse: horizon mismatch");
  }
  if (!prior_valid) return backbone_forecast;
  const Vector projected = params.prior_proj * prior;
  Vector joined(2 * h);
  joined << backbone_forecast, projected;
  const Vector gate = numerics::sigmoid(params.gate * joined);
  return backbone_forecast + params.beta_value() * gate.cwiseProduct(projected);
}

Trace forward(const FusionParams& params, const Matrix& backbone_forecast, const Matrix& priors,
              const std::vector<bool>& prior_valid) {
  const Eigen::Index n = backbone_forecast.rows();
  const Eigen::Index h = params.prior_proj.rows();
  if (backbone_forecast.cols() != h || priors.rows() != n || priors.cols() != h ||
      prior_valid.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("fusion: shape mismatch");
  }
  Trace t;
  t.backbone = backbone_forecast;
  t.prior = priors;
  t.valid = prior_valid;
  t.projected = priors * params.prior_proj.transpose();
  Matrix joined(n, 2 * h);
  joined << backbone_forecast, t.projected;
  t.gate = numerics::sigmoid(joined * params.gate.transpose());
  t.output = backbone_forecast;
  const double beta = params.beta_value();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (t.valid[static_cast<std::size_t>(i)]) {
      t.output.row(i) += beta * t.gate.row(i).cwiseProduct(t.projected.row(i));
    }
  }
  return t;
}

Gradients backward(const FusionParams& params, const Trace& t, const Matrix& d_output, FusionParams& grad) {
  const Eigen::Index n = t.backbone.rows();
  const Eigen::Index h = t.backbone.cols();
  const double beta = params.beta_value();
  Gradients g;
  g.d_backbone = d_output;
  Matrix d_projected = Matrix::Zero(n, h);
  Matrix d_gate_pre = Matrix::Zero(n, h);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!t.valid[static_cast<std::size_t>(i)]) continue;
    const auto dy = d_output.row(i);
    grad.beta(0, 0) += dy.dot(t.gate.row(i).cwiseProduct(t.projected.row(i)));
    const auto gate = t.gate.row(i).array();
    d_gate_pre.row(i) = (beta * dy.array() * t.projected.row(i).array() * gate * (1.0 - gate)).matrix();
    d_projected.row(i) = (beta * dy.array() * gate).matrix();
  }
  Matrix joined(n, 2 * h);
  joined << t.backbone, t.projected;
  grad.gate += d_gate_pre.transpose() * joined;
  const Matrix d_joined = d_gate_pre * params.gate;
  g.d_backbone += d_joined.leftCols(h);
  d_projected += d_joined.rightCols(h);
  grad.prior_proj += d_projected.transpose() * t.prior;
  g.d_prior = d_projected * params.prior_proj;
  return g;
}

}  // namespace bridge::fusion
