// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <koopgrad/jets.hpp>
#include <koopgrad/tasks.hpp>

#include "test_support.hpp"

#include <cmath>
#include <memory>

using namespace koopgrad;
using namespace koopgrad::testing;

namespace {

HyperParams lr_only(double raw, Transform t = Transform::Identity) {
  HyperParams hp;
  hp.raw = RealVector::Constant(1, raw);
  hp.transforms = {t};
  hp.names = {"lr"};
  return hp;
}

}  // namespace

TEST_CASE("quadratic task validates positive definiteness") {
  RealMatrix bad = -RealMatrix::Identity(2, 2);
  CHECK_THROWS_WITH(QuadraticTask(bad, RealVector::Zero(2), RealVector::Zero(2)),
                    Catch::Matchers::ContainsSubstring("positive definite"));
  QuadraticTask ok = make_random_quadratic(6, 3, 0.1, 1.0);
  CHECK(ok.param_count() == 6);
}

TEST_CASE("quadratic oracle closed forms") {
  RealMatrix a(1, 1);
  a << 1.0;
  QuadraticTask task(a, RealVector::Zero(1), RealVector::Zero(1));
  RealVector theta0(1);
  theta0 << 1.0;

  HyperParams hp = lr_only(0.1);
  KnobBinding lr = KnobBinding::named(hp, "lr", 0.0);
  KnobBinding wd = KnobBinding::constant(0.0);

  RealVector h3 = quadratic_oracle_hypergradient(task, hp, lr, wd, theta0, 3);
  CHECK(h3(0) == Catch::Approx(-1.77147).epsilon(1e-12));

  // eta = 0 freezes theta but not the lr sensitivity: d(theta_T)/d(eta) at
  // eta = 0 is -T (A theta0 - b), so h = -T (A theta0 - b)^T (theta0 - target).
  HyperParams zero = lr_only(0.0);
  RealVector h0 = quadratic_oracle_hypergradient(task, zero, KnobBinding::named(zero, "lr", 0.0),
                                                 wd, theta0, 5);
  CHECK(h0(0) == Catch::Approx(-5.0));

  // with a stationary start the dynamics carry no sensitivity at all, even
  // though the meta gradient itself is nonzero (target != theta0)
  QuadraticTask offset(a, RealVector::Zero(1), RealVector::Constant(1, 0.8));
  RealVector stationary = RealVector::Zero(1);  // A theta - b = 0 at theta = 0
  RealVector h_stat = quadratic_oracle_hypergradient(
      offset, zero, KnobBinding::named(zero, "lr", 0.0), wd, stationary, 5);
  CHECK(h_stat(0) == 0.0);

  // long horizon: hypergradient vanishes as theta reaches the fixed point
  RealVector hlong = quadratic_oracle_hypergradient(task, hp, lr, wd, theta0, 5000);
  CHECK(std::abs(hlong(0)) < 1e-12);

  HyperParams divergent = lr_only(3.0);
  CHECK_THROWS_WITH(
      quadratic_oracle_hypergradient(task, divergent, KnobBinding::named(divergent, "lr", 0.0),
                                     wd, theta0, 3),
      Catch::Matchers::ContainsSubstring("divergent"));
}

TEST_CASE("quadratic oracle agrees with the unrolled tangent path to 1e-10") {
  QuadraticTask task = make_random_quadratic(8, 12, 0.2, 1.5);
  HyperParams hp;
  hp.raw = RealVector::Zero(2);
  hp.raw << -2.0, -5.0;
  hp.transforms = {Transform::Sigmoid, Transform::Sigmoid};
  hp.names = {"lr", "wd"};
  KnobBinding lr = KnobBinding::named(hp, "lr", 0.0);
  KnobBinding wd = KnobBinding::named(hp, "wd", 0.0);

  const long steps = 120;
  RealVector theta0 = task.init_params(3);
  RealVector oracle = quadratic_oracle_hypergradient(task, hp, lr, wd, theta0, steps);

  SgdTangentOptimizer opt(lr, KnobBinding::constant(0.0), wd);
  Batch none;
  RealVector theta = theta0;
  TangentState z;
  z.reset(theta.size(), hp.size(), opt.buffer_count());
  opt.reset(theta.size());
  for (long t = 1; t <= steps; ++t) opt.step(theta, z, hp, none, task, t);
  RealVector unrolled = local_hypergradient(theta, z, task, none);

  CHECK((oracle - unrolled).norm() <= 1e-10 * std::max(1.0, oracle.norm()));
}

TEST_CASE("mlp parameter count matches the dense formula") {
  MlpClassifier small({784, 18, 10}, 0);
  CHECK(small.param_count() == (784 * 18 + 18) + (18 * 10 + 10));
  CHECK(small.param_count() == 14320);
}

TEST_CASE("mlp gradient matches central finite differences") {
  Dataset ds = synthetic_classification(24, 7, 3, 31);
  MlpClassifier model({7, 6, 3}, 0);
  RealVector theta = model.init_params(8);
  Batch batch = full_batch(ds);
  RealVector grad = model.train_grad(theta, RealVector(), batch);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pick(0, model.param_count() - 1);
  const double delta = 1e-6;
  for (int trial = 0; trial < 25; ++trial) {
    const int k = pick(rng);
    RealVector plus = theta, minus = theta;
    plus(k) += delta;
    minus(k) -= delta;
    const double fd =
        (model.train_loss(plus, RealVector(), batch) - model.train_loss(minus, RealVector(), batch)) /
        (2 * delta);
    CHECK(grad(k) == Catch::Approx(fd).epsilon(1e-5).margin(1e-10));
  }
}

TEST_CASE("mlp jvp matches finite differences of the gradient") {
  Dataset ds = synthetic_classification(20, 6, 2, 37);
  MlpClassifier model({6, 5, 2}, 0);
  RealVector theta = model.init_params(21);
  Batch batch = full_batch(ds);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  RealVector dir(model.param_count());
  for (int i = 0; i < dir.size(); ++i) dir(i) = gauss(rng);
  dir.normalize();

  RealVector jvp = model.train_grad_jvp(theta, RealVector(), batch, dir, RealVector());
  const double delta = 1e-6;
  RealVector fd = (model.train_grad(theta + delta * dir, RealVector(), batch) -
                   model.train_grad(theta - delta * dir, RealVector(), batch)) /
                  (2 * delta);
  CHECK(relative_error(jvp, fd) < 1e-5);
}

TEST_CASE("leaky relu negative slope shows up in the activation derivative") {
  // single linear unit into 2 logits; push the preactivation negative
  Dataset ds;
  ds.class_count = 2;
  ds.inputs = RealMatrix::Constant(1, 1, 1.0);
  ds.labels = {0};
  MlpClassifier model({1, 1, 2}, 0, 0.125);
  RealVector theta = RealVector::Zero(model.param_count());
  theta(0) = -2.0;  // W1: preactivation = -2, in the leaky region
  theta(2) = 1.0;   // W2 row
  Batch batch = full_batch(ds);
  // d(logit0)/d(b1) flows through the activation: equals W2(0,0) * slope
  RealVector dir = RealVector::Zero(model.param_count());
  dir(1) = 1.0;  // b1
  MlpClassifier::Workspace ws = model.forward(theta, batch);
  MlpClassifier::TangentWorkspace tg = model.forward_tangent(theta, dir, ws);
  CHECK(tg.dpreacts.back()(0, 0) == Catch::Approx(0.125));
}

TEST_CASE("jet arithmetic matches finite differences of the reweighter") {
  ReweightModule mu{4, 0.01};
  RealVector phi = mu.init(12, 0.8);
  RealVector dir(phi.size());
  std::mt19937_64 rng(6);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < dir.size(); ++i) dir(i) = gauss(rng);

  const double x = 0.83;
  const double delta = 1e-5;
  Jet2 jet = mu.eval_jet(phi, dir, x);

  const double fx = mu.value(phi, x);
  CHECK(jet.v == Catch::Approx(fx));
  const double fd_dx = (mu.value(phi, x + delta) - mu.value(phi, x - delta)) / (2 * delta);
  CHECK(jet.dx == Catch::Approx(fd_dx).epsilon(1e-6));
  const double wide = 1e-4;  // second difference needs a wider step for roundoff
  const double fd_dxx =
      (mu.value(phi, x + wide) - 2 * fx + mu.value(phi, x - wide)) / (wide * wide);
  CHECK(jet.dxx == Catch::Approx(fd_dxx).epsilon(1e-4));
  const double fd_dp =
      (mu.value(phi + delta * dir, x) - mu.value(phi - delta * dir, x)) / (2 * delta);
  CHECK(jet.dp == Catch::Approx(fd_dp).epsilon(1e-6));
  const double fd_dxp = (mu.eval_jet(phi + delta * dir, RealVector(), x).dx -
                         mu.eval_jet(phi - delta * dir, RealVector(), x).dx) /
                        (2 * delta);
  CHECK(jet.dxp == Catch::Approx(fd_dxp).epsilon(1e-5).margin(1e-9));
}

TEST_CASE("reweight module has the documented parameter counts") {
  CHECK(ReweightModule{8}.param_count() == 25);
  CHECK(ReweightModule{128}.param_count() == 385);
}

TEST_CASE("constant reweighter scales the plain loss and gradient") {
  Dataset ds = synthetic_classification(16, 5, 2, 41);
  MlpClassifier inner({5, 4, 2}, 0);
  ReweightModule mu{4};
  ReweightedClassifier model(inner, mu);
  RealVector theta = model.init_params(2);
  Batch batch = full_batch(ds);

  // zero the hidden output weights, set the output bias: mu == sigmoid(c)
  RealVector phi = RealVector::Zero(mu.param_count());
  phi(3 * mu.hidden) = 0.7;
  const double w = 1.0 / (1.0 + std::exp(-0.7));

  const double plain = inner.train_loss(theta, RealVector(), batch);
  CHECK(model.train_loss(theta, phi, batch) == Catch::Approx(w * plain).epsilon(1e-12));
  RealVector pg = inner.train_grad(theta, RealVector(), batch);
  RealVector rg = model.train_grad(theta, phi, batch);
  CHECK((rg - w * pg).norm() < 1e-12 * pg.norm());
}

TEST_CASE("reweighted hyper-gradient path matches finite differences") {
  Dataset ds = synthetic_classification(18, 5, 2, 43);
  MlpClassifier inner({5, 4, 2}, 0);
  ReweightModule mu{4};
  ReweightedClassifier model(inner, mu);
  RealVector theta = model.init_params(9);
  RealVector phi = mu.init(10, 0.6);
  Batch batch = full_batch(ds);

  // d(train_loss)/d(phi) against the phi-jvp of the gradient is indirect;
  // verify the loss derivative first, then the full mixed jvp.
  const double delta = 1e-5;
  for (int k = 0; k < phi.size(); k += 5) {
    RealVector plus = phi, minus = phi;
    plus(k) += delta;
    minus(k) -= delta;
    const double fd =
        (model.train_loss(theta, plus, batch) - model.train_loss(theta, minus, batch)) /
        (2 * delta);
    // analytic: mean_i dL/dphi_k = mean_i L_i * dmu/dphi_k (L_i fixed)
    double analytic = 0.0;
    MlpClassifier::Workspace ws = inner.forward(theta, batch);
    RealVector dir = RealVector::Zero(phi.size());
    dir(k) = 1.0;
    for (int i = 0; i < ws.n; ++i)
      analytic += ws.losses(i) * mu.eval_jet(phi, dir, ws.losses(i)).dp;
    analytic /= ws.n;
    CHECK(analytic == Catch::Approx(fd).epsilon(1e-4).margin(1e-10));
  }

  // mixed jvp in a joint (theta, phi) direction vs central differences
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  RealVector dtheta(model.param_count());
  for (int i = 0; i < dtheta.size(); ++i) dtheta(i) = gauss(rng);
  dtheta.normalize();
  RealVector dphi(phi.size());
  for (int i = 0; i < dphi.size(); ++i) dphi(i) = gauss(rng);
  dphi.normalize();

  RealVector jvp = model.train_grad_jvp(theta, phi, batch, dtheta, dphi);
  RealVector fd = (model.train_grad(theta + delta * dtheta, phi + delta * dphi, batch) -
                   model.train_grad(theta - delta * dtheta, phi - delta * dphi, batch)) /
                  (2 * delta);
  CHECK(relative_error(jvp, fd) < 1e-4);
}

TEST_CASE("reweighting hypergradient pushes minority weights up") {
  // imbalanced two-class toy problem: perturbing phi toward higher minority
  // weight should reduce the balanced validation loss after training.
  Dataset pool = synthetic_classification(400, 6, 2, 51, 0.4);
  Dataset train = imbalance_subsample(pool, 16.0, 3, 1);  // class 1 is scarce
  Dataset val = synthetic_classification(200, 6, 2, 52, 0.4);

  MlpClassifier inner({6, 6, 2}, 0);
  ReweightModule mu{4};
  ReweightedClassifier model(inner, mu);

  HyperParams hp;
  hp.raw = mu.init(20, 0.4);
  hp.transforms.assign(static_cast<std::size_t>(hp.raw.size()), Transform::Identity);
  for (int i = 0; i < hp.raw.size(); ++i) hp.names.push_back("mu" + std::to_string(i));

  SgdTangentOptimizer opt(KnobBinding::constant(0.2), KnobBinding::constant(0.9),
                          KnobBinding::constant(0.0));
  std::vector<Batch> batches = cycle_batches(train, 32, 60);
  TrainOutcome out = run_tangent_training(model, opt, hp, batches, 60, 5);
  RealVector h = local_hypergradient(out.theta, out.z, model, full_batch(val));

  // brute force: step phi along -h and verify the retrained validation loss drops
  const double lr_outer = 0.5 / std::max(1.0, h.norm());
  HyperParams moved = hp;
  moved.raw -= lr_outer * h;
  SgdTangentOptimizer opt2 = opt;
  TrainOutcome out2 = run_tangent_training(model, opt2, moved, batches, 60, 5);
  const double before = model.val_loss(out.theta, full_batch(val));
  const double after = model.val_loss(out2.theta, full_batch(val));
  CHECK(after < before);
}
