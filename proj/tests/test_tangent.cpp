// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <koopgrad/tangent_optim.hpp>
#include <koopgrad/tasks.hpp>

#include "test_support.hpp"

#include <cmath>
#include <memory>

using namespace koopgrad;
using namespace koopgrad::testing;

namespace {

HyperParams make_hp(std::vector<double> raw, std::vector<Transform> transforms,
                    std::vector<std::string> names) {
  HyperParams hp;
  hp.raw = Eigen::Map<RealVector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
  hp.transforms = std::move(transforms);
  hp.names = std::move(names);
  return hp;
}

QuadraticTask scalar_quadratic(double a, double target = 0.0) {
  RealMatrix am(1, 1);
  am << a;
  RealVector b = RealVector::Zero(1);
  RealVector t(1);
  t << target;
  return QuadraticTask(am, b, t);
}

/// Model with a constant training gradient; handy for Adam closed forms.
class ConstantGradientModel final : public InnerModel {
 public:
  explicit ConstantGradientModel(RealVector g) : g_(std::move(g)) {}
  int param_count() const override { return static_cast<int>(g_.size()); }
  RealVector init_params(std::uint64_t) const override { return RealVector::Zero(g_.size()); }
  double train_loss(const RealVector& theta, const RealVector&, const Batch&) const override {
    return g_.dot(theta);
  }
  RealVector train_grad(const RealVector&, const RealVector&, const Batch&) const override {
    return g_;
  }
  RealVector train_grad_jvp(const RealVector&, const RealVector&, const Batch&,
                            const RealVector&, const RealVector&) const override {
    return RealVector::Zero(g_.size());
  }
  double val_loss(const RealVector& theta, const Batch&) const override { return theta.norm(); }
  RealVector val_grad(const RealVector& theta, const Batch&) const override {
    return theta.normalized();
  }

 private:
  RealVector g_;
};

}  // namespace

TEST_CASE("transform: sigmoid values and derivatives") {
  HyperParams hp = make_hp({0.0, -2.1972245773362196, 0.37},
                           {Transform::Sigmoid, Transform::Sigmoid, Transform::Identity},
                           {"a", "b", "c"});
  TransformedValues tv = transform(hp);
  CHECK(tv.values(0) == Catch::Approx(0.5));
  CHECK(tv.jacobian_diag(0) == Catch::Approx(0.25));
  CHECK(tv.values(1) == Catch::Approx(0.1).epsilon(1e-6));
  CHECK(tv.jacobian_diag(1) == Catch::Approx(0.09).epsilon(1e-4));
  CHECK(tv.values(2) == 0.37);
  CHECK(tv.jacobian_diag(2) == 1.0);
}

TEST_CASE("sgd closed form on the scalar quadratic") {
  // theta_t = (1 - eta a)^t theta0, dtheta_t/deta = -t a (1 - eta a)^(t-1) theta0
  QuadraticTask task = scalar_quadratic(1.0);
  HyperParams hp = make_hp({0.1}, {Transform::Identity}, {"lr"});
  SgdTangentOptimizer opt(KnobBinding::named(hp, "lr", 0.0), KnobBinding::constant(0.0),
                          KnobBinding::constant(0.0));
  Batch none;
  RealVector theta(1);
  theta << 1.0;
  TangentState z;
  z.reset(1, 1, opt.buffer_count());
  opt.reset(1);
  for (long t = 1; t <= 3; ++t) opt.step(theta, z, hp, none, task, t);
  CHECK(theta(0) == Catch::Approx(0.729).epsilon(1e-12));
  CHECK(z.z_theta(0, 0) == Catch::Approx(-2.43).epsilon(1e-12));
}

TEST_CASE("sgd with zero learning rate freezes parameters but not buffers") {
  QuadraticTask task = scalar_quadratic(2.0);
  HyperParams hp = make_hp({0.0}, {Transform::Identity}, {"lr"});
  SgdTangentOptimizer opt(KnobBinding::named(hp, "lr", 0.0), KnobBinding::constant(0.5),
                          KnobBinding::constant(0.0));
  Batch none;
  RealVector theta(1);
  theta << 3.0;
  TangentState z;
  z.reset(1, 1, opt.buffer_count());
  opt.reset(1);
  for (long t = 1; t <= 4; ++t) opt.step(theta, z, hp, none, task, t);
  CHECK(theta(0) == 3.0);
  // the lr column picks up -deta * v' but z itself never moves theta
  std::string bytes;
  opt.append_state_bytes(bytes);
  double velocity;
  std::memcpy(&velocity, bytes.data(), sizeof(double));
  CHECK(velocity != 0.0);  // momentum buffer kept accumulating
}

TEST_CASE("local_hypergradient basics") {
  QuadraticTask task = scalar_quadratic(1.0);
  Batch none;
  TangentState z;
  z.reset(1, 1, 1);
  RealVector theta(1);
  theta << 0.729;
  CHECK(local_hypergradient(theta, z, task, none)(0) == 0.0);

  z.z_theta(0, 0) = -2.43;
  // meta loss 0.5 theta^2 -> h = theta * Z = -1.77147
  CHECK(local_hypergradient(theta, z, task, none)(0) == Catch::Approx(-1.77147).epsilon(1e-12));
}

TEST_CASE("sgd tangents match finite differences on a 2-layer MLP") {
  Dataset ds = synthetic_classification(64, 10, 3, 5);
  MlpClassifier model({10, 8, 3}, 0);
  HyperParams hp = make_hp({-2.0, 0.0, -4.0},
                           {Transform::Sigmoid, Transform::Sigmoid, Transform::Sigmoid},
                           {"lr", "momentum", "wd"});
  auto make_opt = [&]() -> std::unique_ptr<TangentOptimizer> {
    return std::make_unique<SgdTangentOptimizer>(KnobBinding::named(hp, "lr", 0.0),
                                                 KnobBinding::named(hp, "momentum", 0.0),
                                                 KnobBinding::named(hp, "wd", 0.0));
  };
  const long steps = 50;
  std::vector<Batch> batches = cycle_batches(ds, 16, steps);
  auto opt = make_opt();
  TrainOutcome got = run_tangent_training(model, *opt, hp, batches, steps, 42);
  RealMatrix fd = fd_theta_sensitivity(model, make_opt, hp, batches, steps, 42);
  for (int i = 0; i < hp.size(); ++i) {
    CHECK(relative_error(got.z.z_theta.col(i), fd.col(i)) < 1e-4);
  }
}

TEST_CASE("adam tangents match finite differences on a 2-layer MLP") {
  Dataset ds = synthetic_classification(48, 8, 3, 6);
  MlpClassifier model({8, 6, 3}, 0);
  HyperParams hp = make_hp({-3.0, 2.0, 4.0},
                           {Transform::Sigmoid, Transform::Sigmoid, Transform::Sigmoid},
                           {"lr", "beta1", "beta2"});
  auto make_opt = [&]() -> std::unique_ptr<TangentOptimizer> {
    return std::make_unique<AdamTangentOptimizer>(KnobBinding::named(hp, "lr", 0.0),
                                                  KnobBinding::named(hp, "beta1", 0.9),
                                                  KnobBinding::named(hp, "beta2", 0.999));
  };
  const long steps = 40;
  std::vector<Batch> batches = cycle_batches(ds, 12, steps);
  auto opt = make_opt();
  TrainOutcome got = run_tangent_training(model, *opt, hp, batches, steps, 7);
  RealMatrix fd = fd_theta_sensitivity(model, make_opt, hp, batches, steps, 7);
  for (int i = 0; i < hp.size(); ++i) {
    CHECK(relative_error(got.z.z_theta.col(i), fd.col(i)) < 1e-4);
  }
}

TEST_CASE("degenerate adam reduces to a normalized-gradient step") {
  // beta1 = beta2 = 0: update = g / (|g| + eps)
  Dataset ds = synthetic_classification(32, 6, 2, 9);
  MlpClassifier model({6, 4, 2}, 0);
  HyperParams hp = make_hp({0.05}, {Transform::Identity}, {"lr"});
  AdamTangentOptimizer opt(KnobBinding::named(hp, "lr", 0.0), KnobBinding::constant(0.0),
                           KnobBinding::constant(0.0));
  std::vector<Batch> batches = cycle_batches(ds, 8, 1);
  RealVector theta = model.init_params(3);
  RealVector g = model.train_grad(theta, RealVector(), batches[0]);
  TangentState z;
  z.reset(theta.size(), 1, opt.buffer_count());
  opt.reset(theta.size());
  RealVector theta_after = theta;
  opt.step(theta_after, z, hp, batches[0], model, 1);
  RealVector expected =
      theta - 0.05 * g.cwiseQuotient((g.cwiseAbs().array() + AdamTangentOptimizer::kEps).matrix());
  CHECK((theta_after - expected).norm() < 1e-12);

  // and its lr tangent against finite differences
  auto make_opt = [&]() -> std::unique_ptr<TangentOptimizer> {
    return std::make_unique<AdamTangentOptimizer>(KnobBinding::named(hp, "lr", 0.0),
                                                  KnobBinding::constant(0.0),
                                                  KnobBinding::constant(0.0));
  };
  std::vector<Batch> more = cycle_batches(ds, 8, 20);
  auto opt2 = make_opt();
  TrainOutcome got = run_tangent_training(model, *opt2, hp, more, 20, 3);
  // tighter centered step: the 1/(|g|+eps) curvature dominates fd error here
  RealMatrix fd = fd_theta_sensitivity(model, make_opt, hp, more, 20, 3, 1e-5);
  CHECK(relative_error(got.z.z_theta.col(0), fd.col(0)) < 1e-4);
}

TEST_CASE("adam beta tangents cancel exactly on a constant gradient stream") {
  // With a constant gradient, bias-corrected m and v equal g and g^2 at every
  // step, so d(theta)/d(beta) is identically zero; the recursion has to
  // reproduce the cancellation, and the lr column integrates -t g/(|g|+eps).
  RealVector g(3);
  g << 1.0, -2.0, 0.5;
  ConstantGradientModel model(g);
  HyperParams hp = make_hp({0.01, 0.9, 0.99},
                           {Transform::Identity, Transform::Identity, Transform::Identity},
                           {"lr", "beta1", "beta2"});
  AdamTangentOptimizer opt(KnobBinding::named(hp, "lr", 0.0), KnobBinding::named(hp, "beta1", 0.0),
                           KnobBinding::named(hp, "beta2", 0.0));
  Batch none;
  RealVector theta = RealVector::Zero(3);
  TangentState z;
  z.reset(3, 3, opt.buffer_count());
  opt.reset(3);
  const long steps = 12;
  for (long t = 1; t <= steps; ++t) opt.step(theta, z, hp, none, model, t);

  CHECK(z.z_theta.col(1).norm() < 1e-10);
  CHECK(z.z_theta.col(2).norm() < 1e-10);
  RealVector unit = g.cwiseQuotient((g.cwiseAbs().array() + AdamTangentOptimizer::kEps).matrix());
  CHECK((z.z_theta.col(0) + double(steps) * unit).norm() < 1e-10);
}

TEST_CASE("adam lr tangent equals minus the update direction after one step") {
  RealVector g(2);
  g << 0.3, -0.7;
  ConstantGradientModel model(g);
  HyperParams hp = make_hp({0.123}, {Transform::Identity}, {"lr"});
  AdamTangentOptimizer opt(KnobBinding::named(hp, "lr", 0.0), KnobBinding::constant(0.9),
                           KnobBinding::constant(0.999));
  Batch none;
  RealVector theta = RealVector::Zero(2);
  TangentState z;
  z.reset(2, 1, opt.buffer_count());
  opt.reset(2);
  RealVector before = theta;
  opt.step(theta, z, hp, none, model, 1);
  RealVector update = (before - theta) / 0.123;
  CHECK((z.z_theta.col(0) + update).norm() < 1e-14);
}

TEST_CASE("determinism: identical seeds give bit-identical outcomes") {
  Dataset ds = synthetic_classification(40, 6, 2, 17);
  MlpClassifier model({6, 5, 2}, 0);
  HyperParams hp = make_hp({-2.0, 0.5}, {Transform::Sigmoid, Transform::Sigmoid},
                           {"lr", "momentum"});
  std::vector<Batch> batches = cycle_batches(ds, 10, 30);
  SgdTangentOptimizer opt_a(KnobBinding::named(hp, "lr", 0.0),
                            KnobBinding::named(hp, "momentum", 0.0), KnobBinding::constant(0.0));
  SgdTangentOptimizer opt_b = opt_a;
  TrainOutcome a = run_tangent_training(model, opt_a, hp, batches, 30, 11);
  TrainOutcome b = run_tangent_training(model, opt_b, hp, batches, 30, 11);
  CHECK(a.theta == b.theta);
  CHECK(a.z.z_theta == b.z.z_theta);
}

TEST_CASE("unused hyperparameter keeps an exactly zero tangent column") {
  Dataset ds = synthetic_classification(32, 6, 2, 23);
  MlpClassifier model({6, 4, 2}, 0);
  // "shape" is not bound to any knob and the model ignores phi entirely
  HyperParams hp = make_hp({-2.0, 1.3}, {Transform::Sigmoid, Transform::Sigmoid},
                           {"lr", "shape"});
  SgdTangentOptimizer opt(KnobBinding::named(hp, "lr", 0.0), KnobBinding::constant(0.0),
                          KnobBinding::constant(0.0));
  std::vector<Batch> batches = cycle_batches(ds, 8, 25);
  TrainOutcome out = run_tangent_training(model, opt, hp, batches, 25, 4);
  CHECK(out.z.z_theta.col(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.z.z_theta.col(0).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("divergence is reported with the failing step") {
  QuadraticTask task = scalar_quadratic(1.0);
  HyperParams hp = make_hp({3.0}, {Transform::Identity}, {"lr"});  // eta a = 3 diverges
  SgdTangentOptimizer opt(KnobBinding::named(hp, "lr", 0.0), KnobBinding::constant(0.0),
                          KnobBinding::constant(0.0));
  Batch none;
  RealVector theta(1);
  theta << 1e300;
  TangentState z;
  z.reset(1, 1, opt.buffer_count());
  opt.reset(1);
  long failed_at = 0;
  try {
    for (long t = 1; t <= 400; ++t) opt.step(theta, z, hp, none, task, t);
  } catch (const TrainingDiverged& e) {
    failed_at = e.step;
    CHECK(std::string(e.what()).find("training diverged at step") != std::string::npos);
  }
  CHECK(failed_at > 0);
}
