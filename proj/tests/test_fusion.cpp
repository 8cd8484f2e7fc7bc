#include <gtest/gtest.h>

#include "bridge/fusion.hpp"
#include "bridge/model.hpp"
#include "test_util.hpp"

using namespace bridge;
using testutil::random_matrix;
using testutil::random_vector;

namespace {

FusionParams random_fusion(int h, std::mt19937_64& rng, double beta) {
  FusionParams p;
  p.prior_proj = random_matrix(h, h, rng);
  p.gate = random_matrix(h, 2 * h, rng);
  p.beta = Matrix::Constant(1, 1, beta);
  return p;
}

// Fusion weights plus both inputs, so input gradients are checked too.
struct FusionState {
  FusionParams p;
  Matrix y;
  Matrix prior;
  template <typename F>
  void for_each(F&& f) {
    f(std::string("prior_proj"), p.prior_proj);
    f(std::string("gate"), p.gate);
    f(std::string("beta"), p.beta);
    f(std::string("backbone"), y);
    f(std::string("prior"), prior);
  }
};

}  // namespace

TEST(Fuse, ZeroBetaReturnsBackbone) {
  std::mt19937_64 rng(1);
  const FusionParams p = random_fusion(4, rng, 0.0);
  const Vector y = random_vector(4, rng);
  EXPECT_EQ(fusion::fuse(y, random_vector(4, rng, 10.0), p, true), y);
}

TEST(Fuse, InvalidPriorSkipsGate) {
  std::mt19937_64 rng(2);
  const FusionParams p = random_fusion(3, rng, 1.7);
  const Vector y = random_vector(3, rng);
  EXPECT_EQ(fusion::fuse(y, random_vector(3, rng), p, false), y);
}

TEST(Fuse, HalfGateExample) {
  FusionParams p;
  p.prior_proj = Matrix::Identity(2, 2);
  p.gate = Matrix::Zero(2, 4);
  p.beta = Matrix::Constant(1, 1, 1.0);
  const Vector y{{1.0, -2.0}};
  const Vector prior{{4.0, 0.5}};
  const Vector out = fusion::fuse(y, prior, p, true);
  EXPECT_DOUBLE_EQ(out(0), 3.0);
  EXPECT_DOUBLE_EQ(out(1), -1.75);
}

TEST(Fuse, ShapeMismatch) {
  std::mt19937_64 rng(3);
  const FusionParams p = random_fusion(3, rng, 1.0);
  EXPECT_THROW(fusion::fuse(random_vector(2, rng), random_vector(3, rng), p, true), ShapeError);
}

TEST(Fuse, RowwiseMatchesSingle) {
  std::mt19937_64 rng(4);
  const FusionParams p = random_fusion(3, rng, 0.6);
  const Matrix y = random_matrix(4, 3, rng);
  const Matrix prior = random_matrix(4, 3, rng);
  const std::vector<bool> valid{true, false, true, true};
  const fusion::Trace t = fusion::forward(p, y, prior, valid);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const Vector one = fusion::fuse(y.row(i).transpose(), prior.row(i).transpose(), p, valid[static_cast<std::size_t>(i)]);
    EXPECT_LT((t.output.row(i).transpose() - one).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Fuse, GateStrictlyInsideUnitInterval) {
  std::mt19937_64 rng(5);
  const FusionParams p = random_fusion(5, rng, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const fusion::Trace t = fusion::forward(p, random_matrix(3, 5, rng), random_matrix(3, 5, rng),
                                            {true, true, true});
    EXPECT_GT(t.gate.minCoeff(), 0.0);
    EXPECT_LT(t.gate.maxCoeff(), 1.0);
  }
}

TEST(Fuse, BetaDerivativeIsGatedPrior) {
  std::mt19937_64 rng(6);
  FusionParams p = random_fusion(4, rng, 0.3);
  const Matrix y = random_matrix(1, 4, rng);
  const Matrix prior = random_matrix(1, 4, rng);
  const fusion::Trace t = fusion::forward(p, y, prior, {true});
  const Vector analytic = t.gate.row(0).cwiseProduct(t.projected.row(0)).transpose();
  const double eps = 1e-6;
  FusionParams plus = p;
  plus.beta(0, 0) += eps;
  FusionParams minus = p;
  minus.beta(0, 0) -= eps;
  const Vector numeric = ((fusion::forward(plus, y, prior, {true}).output -
                           fusion::forward(minus, y, prior, {true}).output) /
                          (2 * eps))
                             .row(0)
                             .transpose();
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_LT(numerics::relative_error(analytic(k), numeric(k)), 1e-5);
}

TEST(Fuse, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  FusionState start{random_fusion(3, rng, 0.8), random_matrix(4, 3, rng), random_matrix(4, 3, rng)};
  const Matrix weights = random_matrix(4, 3, rng);
  const std::vector<bool> valid{true, true, false, true};
  numerics::LossFn<FusionState> loss = [&](const FusionState& s, FusionState* grad) {
    const fusion::Trace t = fusion::forward(s.p, s.y, s.prior, valid);
    if (grad != nullptr) {
      FusionParams g{Matrix::Zero(3, 3), Matrix::Zero(3, 6), Matrix::Zero(1, 1)};
      const fusion::Gradients d = fusion::backward(s.p, t, weights, g);
      *grad = FusionState{g, d.d_backbone, d.d_prior};
    }
    return t.output.cwiseProduct(weights).sum();
  };
  const auto report = numerics::grad_check(loss, start, 1e-6, 1e-5);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Fuse, InitialisedModelMatchesBackbone) {
  ModelDims d;
  d.context_dim = 4;
  d.node_dim = 3;
  d.temporal_dim = 3;
  d.hidden = 5;
  d.window = 6;
  d.horizon = 3;
  d.branch_dim = 4;
  d.retriever_hidden = 32;
  d.retriever_dim = 5;
  const ModelParams params = init_params(d, 9);
  EXPECT_EQ(params.fusion.beta_value(), 0.0);
  EXPECT_EQ(params.fusion.prior_proj, Matrix::Identity(3, 3));
  EXPECT_TRUE(params.fusion.gate.isZero(0));
  SyntheticSpec s;
  s.n_regions = 6;
  s.d_c = 4;
  s.n_archetypes = 2;
  s.t_total = 150;
  s.window = 6;
  s.horizon = 3;
  const CityDataset city = generate_synthetic_city(s);
  const Normalizer norm = fit_normalizer(city, all_region_ids(city));
  std::vector<int> anchors;
  for (int t = 5; t < city.split.train_end; ++t) anchors.push_back(t);
  const retrieval::MemoryBank bank = retrieval::build_bank(city, anchors, {0, 1, 2, 3}, 6, 3, norm, params.retriever);
  ObjectiveOptions opts;
  for (int anchor = city.split.val_end; anchor < city.split.val_end + 10; ++anchor) {
    const GraphInput in = make_graph_input(city, anchor, all_region_ids(city), {4, 5}, norm, 6, 3, false);
    const ForwardResult r = evaluate_objective(params, in, &bank, opts);
    EXPECT_EQ(r.fused, r.backbone);
  }
}
