#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bridge/errors.hpp"

namespace bridge {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

namespace numerics {

// ---------------------------------------------------------------------------
// Activations

/// Exact GeLU, x * Phi(x).
template <std::floating_point Scalar>
Scalar gelu(Scalar x) {
  return Scalar(0.5) * x * std::erfc(-x / std::numbers::sqrt2_v<Scalar>);
}

/// d/dx gelu(x) = Phi(x) + x * phi(x).
template <std::floating_point Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar cdf = Scalar(0.5) * std::erfc(-x / std::numbers::sqrt2_v<Scalar>);
  const Scalar pdf = std::exp(Scalar(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<Scalar> /
                     std::numbers::sqrt2_v<Scalar>;
  return cdf + x * pdf;
}

template <std::floating_point Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= 0) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <std::floating_point Scalar>
Scalar relu(Scalar x) {
  return x > Scalar(0) ? x : Scalar(0);
}

template <typename Derived>
auto gelu(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return m.unaryExpr([](Scalar v) { return gelu(v); }).eval();
}

template <typename Derived>
auto gelu_grad(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return m.unaryExpr([](Scalar v) { return gelu_grad(v); }).eval();
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return m.unaryExpr([](Scalar v) { return sigmoid(v); }).eval();
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return m.unaryExpr([](Scalar v) { return relu(v); }).eval();
}

/// 1 where the input is strictly positive, 0 elsewhere.
template <typename Derived>
auto relu_mask(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  return m.unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); }).eval();
}

// ---------------------------------------------------------------------------
// Normalizations

/// Row-wise softmax of m / temperature, max-subtracted per row.
template <typename Derived>
MatrixX<typename Derived::Scalar> row_softmax(const Eigen::MatrixBase<Derived>& m,
                                              typename Derived::Scalar temperature = 1) {
  using Scalar = typename Derived::Scalar;
  if (!(temperature > Scalar(0))) {
    throw std::invalid_argument("row_softmax: temperature must be positive");
  }
  MatrixX<Scalar> out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Scalar peak = m.row(r).maxCoeff();
    Scalar total = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out(r, c) = std::exp((m(r, c) - peak) / temperature);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

/// Backward of row_softmax given its output and the upstream gradient.
template <typename DerivedP, typename DerivedG>
MatrixX<typename DerivedP::Scalar> row_softmax_backward(const Eigen::MatrixBase<DerivedP>& probs,
                                                        const Eigen::MatrixBase<DerivedG>& upstream,
                                                        typename DerivedP::Scalar temperature = 1) {
  using Scalar = typename DerivedP::Scalar;
  MatrixX<Scalar> out(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const Scalar inner = probs.row(r).dot(upstream.row(r));
    out.row(r) = (probs.row(r).array() * (upstream.row(r).array() - inner)).matrix();
  }
  return out / temperature;
}

template <typename Derived>
VectorX<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& v,
                                               typename Derived::Scalar min_norm = 1e-12) {
  const auto norm = v.norm();
  if (!(norm > min_norm)) {
    throw DegenerateEmbedding("l2_normalize: vector norm " + std::to_string(norm) +
                              " below threshold");
  }
  return v / norm;
}

/// Backward of v / ||v|| given the normalized output.
template <typename DerivedU, typename DerivedG>
VectorX<typename DerivedU::Scalar> l2_normalize_backward(const Eigen::MatrixBase<DerivedU>& unit,
                                                         const Eigen::MatrixBase<DerivedG>& upstream,
                                                         typename DerivedU::Scalar norm) {
  return (upstream - unit * unit.dot(upstream)) / norm;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification

/// |a - b| / max(1, |a|, |b|)
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t coordinates_total = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Evaluates the loss at `params`; when `grad` is non-null it is overwritten with
/// the reverse-mode gradient (same registry layout as `params`).
template <typename Params>
using LossFn = std::function<double(const Params&, Params* grad)>;

/// Compares reverse-mode gradients with central differences on every registered
/// array. Arrays with more than `max_coords` entries are checked on a seeded
/// random subsample of that size.
///
/// `Params` must be copyable and expose `for_each(f)` calling `f(name, Matrix&)`.
template <typename Params>
GradCheckReport grad_check(const LossFn<Params>& loss_fn, const Params& params, double eps,
                           double tol, std::uint64_t seed = 0, std::size_t max_coords = 10000) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");
  }
  const double first = loss_fn(params, nullptr);
  const double second = loss_fn(params, nullptr);
  if (first != second) {
    throw NondeterministicLoss("grad_check: two forward passes disagree");
  }

  Params analytic = params;
  loss_fn(params, &analytic);

  Params work = params;
  std::vector<std::pair<std::string, Matrix*>> work_views;
  work.for_each([&](const std::string& name, Matrix& m) { work_views.emplace_back(name, &m); });
  std::vector<const Matrix*> grad_views;
  analytic.for_each([&](const std::string&, Matrix& m) { grad_views.push_back(&m); });

  std::mt19937_64 rng(seed);
  GradCheckReport report;
  report.tolerance = tol;
  for (std::size_t k = 0; k < work_views.size(); ++k) {
    auto& [name, mat] = work_views[k];
    const Matrix& g = *grad_views[k];
    const auto total = static_cast<std::size_t>(mat->size());
    std::vector<std::size_t> coords(total);
    for (std::size_t i = 0; i < total; ++i) coords[i] = i;
    if (total > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
      std::sort(coords.begin(), coords.end());
    }
    GradCheckEntry entry{name, 0.0, coords.size(), total};
    for (std::size_t idx : coords) {
      double& value = mat->data()[idx];
      const double saved = value;
      value = saved + eps;
      const double plus = loss_fn(work, nullptr);
      value = saved - eps;
      const double minus = loss_fn(work, nullptr);
      value = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(g.data()[idx], numeric));
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace numerics
}  // namespace bridge
