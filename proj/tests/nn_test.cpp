#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "voltgrid/error.hpp"
#include "voltgrid/nn.hpp"

namespace voltgrid {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "voltgrid_nn_test";
  fs::create_directories(dir);
  return dir / name;
}

Eigen::MatrixXd random_batch(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

// A network with no hidden layers whose heads are set by hand.
Parameters linear_dueling(double v, const std::vector<double>& a) {
  const MlpSpec spec{.input_dim = 1, .hidden = {}, .n_actions = a.size(), .dueling = true};
  Rng rng(1);
  Parameters p = zeros_like(init_params(spec, rng));
  for (std::size_t k = 0; k < a.size(); ++k) p.biases[0](k) = a[k];
  p.biases[1](0) = v;
  return p;
}

double loss_of(const Parameters& p, const Eigen::MatrixXd& obs, const Eigen::VectorXd& w,
               const std::vector<std::size_t>& actions, const Eigen::VectorXd& y) {
  return backward(p, obs, w, actions, y).loss;
}

TEST(Forward, DuelingAggregation) {
  const Parameters p = linear_dueling(1.0, {1.0, 2.0, 3.0});
  const Eigen::MatrixXd q = forward(p, Eigen::MatrixXd::Zero(1, 1));
  EXPECT_DOUBLE_EQ(q(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(q(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(q(0, 2), 2.0);
}

TEST(Forward, ZeroParametersGiveZeroQ) {
  Rng rng(3);
  for (bool dueling : {true, false}) {
    const MlpSpec spec{.input_dim = 4, .hidden = {8, 5}, .n_actions = 6, .dueling = dueling};
    const Parameters p = zeros_like(init_params(spec, rng));
    EXPECT_TRUE(forward(p, random_batch(rng, 3, 4)).isZero(0.0));
  }
}

TEST(Forward, IdenticalRowsAndPurity) {
  Rng rng(5);
  const MlpSpec spec{.input_dim = 7, .hidden = {16, 16}, .n_actions = 9};
  const Parameters p = init_params(spec, rng);
  Eigen::MatrixXd obs(2, 7);
  obs.row(0) = random_batch(rng, 1, 7);
  obs.row(1) = obs.row(0);
  const Eigen::MatrixXd q = forward(p, obs);
  EXPECT_EQ(q.rows(), 2);
  EXPECT_EQ(q.cols(), 9);
  EXPECT_TRUE(q.row(0) == q.row(1));
  EXPECT_TRUE(forward(p, obs) == q);
}

TEST(Forward, ShapeMismatchThrows) {
  Rng rng(1);
  const Parameters p = init_params({.input_dim = 3, .hidden = {4}, .n_actions = 2}, rng);
  EXPECT_THROW(forward(p, Eigen::MatrixXd::Zero(1, 4)), SpecMismatchError);
}

TEST(Forward, AdvantageShiftLeavesQUnchanged) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const MlpSpec spec{.input_dim = 5, .hidden = {12}, .n_actions = 4};
    Parameters p = init_params(spec, rng);
    const Eigen::MatrixXd obs = random_batch(rng, 6, 5);
    const Eigen::MatrixXd before = forward(p, obs);
    p.biases[1].array() += rng.uniform(-50.0, 50.0);
    EXPECT_LE((forward(p, obs) - before).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Spec, ZeroDimensionRejected) {
  EXPECT_THROW(check(MlpSpec{.input_dim = 0, .hidden = {}, .n_actions = 1}), SpecMismatchError);
  EXPECT_THROW(check(MlpSpec{.input_dim = 1, .hidden = {0}, .n_actions = 1}), SpecMismatchError);
  EXPECT_THROW(check(MlpSpec{.input_dim = 1, .hidden = {}, .n_actions = 0}), SpecMismatchError);
  EXPECT_NO_THROW(check(MlpSpec{.input_dim = 39, .hidden = {64, 64}, .n_actions = 26}));
}

TEST(Init, RangeFollowsFanIn) {
  Rng rng(2);
  const Parameters p = init_params({.input_dim = 100, .hidden = {25}, .n_actions = 3}, rng);
  EXPECT_LE(p.weights[0].cwiseAbs().maxCoeff(), 0.1);
  EXPECT_GT(p.weights[0].cwiseAbs().maxCoeff(), 0.09);
  EXPECT_LE(p.weights[1].cwiseAbs().maxCoeff(), 0.2);
  EXPECT_EQ(p.size(), 100u * 25 + 25 + 25 * 3 + 3 + 25 + 1);
  EXPECT_TRUE(p.all_finite());
}

TEST(Backward, PerfectPredictionHasZeroLossAndGradient) {
  Rng rng(7);
  const Parameters p = init_params({.input_dim = 4, .hidden = {8}, .n_actions = 3}, rng);
  const Eigen::MatrixXd obs = random_batch(rng, 5, 4);
  const std::vector<std::size_t> actions{0, 2, 1, 1, 0};
  const Eigen::MatrixXd q = forward(p, obs);
  Eigen::VectorXd y(5);
  for (int i = 0; i < 5; ++i) y(i) = q(i, static_cast<Eigen::Index>(actions[i]));
  const Gradients g = backward(p, obs, Eigen::VectorXd::Ones(5), actions, y);
  EXPECT_EQ(g.loss, 0.0);
  for (std::size_t l = 0; l < g.grads.weights.size(); ++l) {
    EXPECT_TRUE(g.grads.weights[l].isZero(0.0));
    EXPECT_TRUE(g.grads.biases[l].isZero(0.0));
  }
}

TEST(Backward, HuberZones) {
  const Parameters p = linear_dueling(0.0, {0.0, 0.0});
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(1, 1);
  const double w = 0.7;
  const Gradients quad = backward(p, obs, Eigen::VectorXd::Constant(1, w), {0},
                                  Eigen::VectorXd::Constant(1, 0.4));
  EXPECT_NEAR(quad.loss, 0.5 * w * 0.16, 1e-15);
  EXPECT_NEAR(quad.td_error(0), -0.4, 1e-15);
  const Gradients lin = backward(p, obs, Eigen::VectorXd::Constant(1, w), {0},
                                 Eigen::VectorXd::Constant(1, 3.0));
  EXPECT_NEAR(lin.loss, w * (3.0 - 0.5), 1e-15);
}

TEST(Backward, UntouchedActionsContributeNothing) {
  // Without dueling, the head row of an action that never appears in the
  // batch receives no gradient.
  Rng rng(4);
  const Parameters p =
      init_params({.input_dim = 3, .hidden = {6}, .n_actions = 4, .dueling = false}, rng);
  const Gradients g = backward(p, random_batch(rng, 4, 3), Eigen::VectorXd::Ones(4), {0, 1, 0, 1},
                               Eigen::VectorXd::Constant(4, 2.0));
  EXPECT_TRUE(g.grads.weights[1].row(2).isZero(0.0));
  EXPECT_TRUE(g.grads.weights[1].row(3).isZero(0.0));
  EXPECT_EQ(g.grads.biases[1](3), 0.0);
}

TEST(Backward, NonFiniteInputThrows) {
  Rng rng(4);
  const Parameters p = init_params({.input_dim = 2, .hidden = {3}, .n_actions = 2}, rng);
  Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(1, 2);
  obs(0, 1) = std::nan("");
  EXPECT_THROW(backward(p, obs, Eigen::VectorXd::Ones(1), {0}, Eigen::VectorXd::Zero(1)), Error);
  EXPECT_THROW(backward(p, Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Ones(1), {0},
                        Eigen::VectorXd::Constant(1, INFINITY)),
               Error);
  EXPECT_THROW(backward(p, Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Ones(1), {2},
                        Eigen::VectorXd::Zero(1)),
               SpecMismatchError);
}

// Central differences over every parameter of randomly shaped networks.
TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(20240);
  const double h = 1e-6;
  for (int trial = 0; trial < 24; ++trial) {
    MlpSpec spec;
    spec.input_dim = 1 + rng.below(5);
    spec.hidden.resize(rng.below(3));
    for (auto& width : spec.hidden) width = 1 + rng.below(6);
    spec.n_actions = 1 + rng.below(5);
    spec.dueling = trial % 4 != 3;
    Parameters p = init_params(spec, rng);
    const Eigen::Index batch = 1 + static_cast<Eigen::Index>(rng.below(4));
    const Eigen::MatrixXd obs = random_batch(rng, batch, static_cast<Eigen::Index>(spec.input_dim));
    Eigen::VectorXd w(batch), y(batch);
    std::vector<std::size_t> actions(static_cast<std::size_t>(batch));
    for (Eigen::Index i = 0; i < batch; ++i) {
      w(i) = rng.uniform(0.2, 1.0);
      y(i) = rng.uniform(-2.0, 2.0);
      actions[static_cast<std::size_t>(i)] = rng.below(spec.n_actions);
    }
    const Gradients g = backward(p, obs, w, actions, y);

    auto check_tensor = [&](double* data, const double* grad, Eigen::Index n) {
      for (Eigen::Index k = 0; k < n; ++k) {
        const double saved = data[k];
        data[k] = saved + h;
        const double up = loss_of(p, obs, w, actions, y);
        data[k] = saved - h;
        const double down = loss_of(p, obs, w, actions, y);
        data[k] = saved;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max({std::abs(numeric), std::abs(grad[k]), 1e-6});
        EXPECT_LT(std::abs(numeric - grad[k]) / scale, 1e-4)
            << describe(spec) << " trial " << trial << " entry " << k;
      }
    };
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      check_tensor(p.weights[l].data(), g.grads.weights[l].data(), p.weights[l].size());
      check_tensor(p.biases[l].data(), g.grads.biases[l].data(), p.biases[l].size());
    }
  }
}

TEST(ClipGradNorm, RescalesOnlyAboveThreshold) {
  Rng rng(9);
  Parameters g = init_params({.input_dim = 3, .hidden = {4}, .n_actions = 2}, rng);
  const Parameters copy = g;
  const double norm = clip_grad_norm(g, 1e6);
  EXPECT_TRUE(g == copy);
  const double clipped_from = clip_grad_norm(g, norm / 2);
  EXPECT_DOUBLE_EQ(clipped_from, norm);
  EXPECT_NEAR(clip_grad_norm(g, 1e6), norm / 2, 1e-12);
}

TEST(Adam, ZeroGradientFromRestLeavesParameters) {
  Rng rng(6);
  Parameters p = init_params({.input_dim = 3, .hidden = {4}, .n_actions = 2}, rng);
  const Parameters before = p;
  AdamState s = make_adam(p);
  adam_step(p, zeros_like(p), s, 1e-3);
  EXPECT_TRUE(p == before);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ZeroGradientDecaysMoments) {
  Rng rng(6);
  Parameters p = init_params({.input_dim = 3, .hidden = {4}, .n_actions = 2}, rng);
  AdamState s = make_adam(p);
  adam_step(p, init_params(p.spec, rng), s, 1e-3);
  const AdamState after_one = s;
  adam_step(p, zeros_like(p), s, 1e-3);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    EXPECT_TRUE(s.m.weights[l].isApprox(0.9 * after_one.m.weights[l]));
    EXPECT_TRUE(s.v.weights[l].isApprox(0.999 * after_one.v.weights[l]));
  }
}

TEST(Adam, FirstStepMovesAgainstGradientSign) {
  Rng rng(8);
  Parameters p = init_params({.input_dim = 5, .hidden = {7}, .n_actions = 3}, rng);
  const Parameters before = p;
  const Parameters g = init_params(p.spec, rng);
  AdamState s = make_adam(p);
  const double lr = 1e-3;
  adam_step(p, g, s, lr);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const Eigen::ArrayXXd delta = (p.weights[l] - before.weights[l]).array();
    const Eigen::ArrayXXd expected = -lr * g.weights[l].array().sign();
    EXPECT_TRUE((delta.sign() == expected.sign()).all());
    EXPECT_LE((delta - expected).abs().maxCoeff(), lr * 1e-4);
  }
}

// f(θ) = ½ Σ c_k (θ_k − t_k)² has its minimum 0 at θ = t.
TEST(Adam, MinimizesQuadraticBowl) {
  Rng rng(12);
  Parameters p = init_params({.input_dim = 4, .hidden = {3}, .n_actions = 2}, rng);
  const Parameters target = init_params(p.spec, rng);
  const Parameters curvature = init_params(p.spec, rng);
  auto bowl = [&](const Parameters& x, Parameters* grad) {
    double f = 0.0;
    for (std::size_t l = 0; l < x.weights.size(); ++l) {
      const Eigen::ArrayXXd c = curvature.weights[l].array().abs() + 0.5;
      const Eigen::ArrayXXd d = (x.weights[l] - target.weights[l]).array();
      f += 0.5 * (c * d * d).sum();
      const Eigen::ArrayXd cb = curvature.biases[l].array().abs() + 0.5;
      const Eigen::ArrayXd db = (x.biases[l] - target.biases[l]).array();
      f += 0.5 * (cb * db * db).sum();
      if (grad) {
        grad->weights[l] = (c * d).matrix();
        grad->biases[l] = (cb * db).matrix();
      }
    }
    return f;
  };
  AdamState s = make_adam(p);
  Parameters g = zeros_like(p);
  int steps = 0;
  double lr = 0.05;
  while (bowl(p, &g) >= 1e-6 && steps < 5000) {
    if (steps == 1500) lr = 0.005;
    adam_step(p, g, s, lr);
    ++steps;
  }
  EXPECT_LT(bowl(p, nullptr), 1e-6);
  EXPECT_LE(steps, 5000);
}

TEST(Persistence, RoundTripIsBitwise) {
  Rng rng(13);
  const MlpSpec spec{.input_dim = 39, .hidden = {64, 64}, .n_actions = 26};
  const Parameters p = init_params(spec, rng);
  const fs::path path = scratch("roundtrip.vgnn");
  save_params(p, path);
  const Parameters back = load_params(path, spec);
  EXPECT_TRUE(back == p);
  const Eigen::MatrixXd probe = random_batch(rng, 8, 39);
  EXPECT_TRUE(forward(back, probe) == forward(p, probe));
  EXPECT_TRUE(load_params(path) == p);
}

TEST(Persistence, WrongSpecRejected) {
  Rng rng(14);
  const MlpSpec spec{.input_dim = 39, .hidden = {64, 64}, .n_actions = 26};
  const fs::path path = scratch("spec.vgnn");
  save_params(init_params(spec, rng), path);
  MlpSpec other = spec;
  other.input_dim = 40;
  EXPECT_THROW(load_params(path, other), SpecMismatchError);
  other = spec;
  other.dueling = false;
  EXPECT_THROW(load_params(path, other), SpecMismatchError);
}

TEST(Persistence, DamagedFilesRejected) {
  Rng rng(15);
  const fs::path path = scratch("damaged.vgnn");
  save_params(init_params({.input_dim = 3, .hidden = {4}, .n_actions = 2}, rng), path);
  const auto full = fs::file_size(path);

  fs::resize_file(path, full - 9);
  EXPECT_THROW(load_params(path), CorruptFileError);
  fs::resize_file(path, 6);
  EXPECT_THROW(load_params(path), CorruptFileError);

  save_params(init_params({.input_dim = 3, .hidden = {4}, .n_actions = 2}, rng), path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  EXPECT_THROW(load_params(path), CorruptFileError);

  std::ofstream(path, std::ios::binary) << "not a network at all, just text";
  EXPECT_THROW(load_params(path), CorruptFileError);
}

TEST(Persistence, AdamRoundTrip) {
  Rng rng(16);
  const MlpSpec spec{.input_dim = 5, .hidden = {6}, .n_actions = 3};
  Parameters p = init_params(spec, rng);
  AdamState s = make_adam(p);
  for (int i = 0; i < 3; ++i) adam_step(p, init_params(spec, rng), s, 1e-3);
  const fs::path path = scratch("adam.bin");
  save_adam(s, path);
  const AdamState back = load_adam(path, spec);
  EXPECT_EQ(back.step, 3);
  EXPECT_TRUE(back.m == s.m);
  EXPECT_TRUE(back.v == s.v);
  MlpSpec other = spec;
  other.n_actions = 4;
  EXPECT_THROW(load_adam(path, other), SpecMismatchError);
  EXPECT_THROW(load_params(path), CorruptFileError);
}

}  // namespace
}  // namespace voltgrid
