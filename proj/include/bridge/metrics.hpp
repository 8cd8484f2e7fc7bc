#pragma once

#include <cstddef>
#include <optional>

#include "bridge/numerics.hpp"

namespace bridge {

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> r2;  // empty when the targets have zero variance
  std::size_t count = 0;
};

/// MAE, RMSE and R^2 over all entries of equally shaped matrices.
Metrics compute_metrics(const Matrix& pred, const Matrix& target);

/// Streaming version of compute_metrics.
class MetricAccumulator {
 public:
  void add(double pred, double target) {
    const double e = pred - target;
    abs_sum_ += std::abs(e);
    sq_sum_ += e * e;
    target_sum_ += target;
    target_sq_sum_ += target * target;
    ++count_;
  }
  template <typename A, typename B>
  void add(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& target) {
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      for (Eigen::Index j = 0; j < pred.cols(); ++j) add(pred(i, j), target(i, j));
    }
  }
  std::size_t count() const { return count_; }
  Metrics finish() const;

 private:
  double abs_sum_ = 0.0;
  double sq_sum_ = 0.0;
  double target_sum_ = 0.0;
  double target_sq_sum_ = 0.0;
  std::size_t count_ = 0;
};

}  // namespace bridge
