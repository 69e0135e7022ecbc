// SPDX-License-Identifier: Apache-2.0
//
// Inner problems: a quadratic task with a closed-form hypergradient oracle,
// a leaky-ReLU MLP classifier with forward-over-reverse jvp support, and the
// loss-reweighting meta-module stacked on top of the classifier.
#pragma once

#include <koopgrad/data.hpp>
#include <koopgrad/jets.hpp>
#include <koopgrad/numerics.hpp>
#include <koopgrad/tangent_optim.hpp>

#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace koopgrad {

// ---------------------------------------------------------------------------
// Quadratic task
// ---------------------------------------------------------------------------

/// Inner loss 0.5 theta^T A theta - b^T theta with A positive definite;
/// meta loss 0.5 ||theta - target||^2. Gradient descent on it is an exactly
/// linear recursion, which makes this the ground-truth oracle task.
class QuadraticTask final : public InnerModel {
 public:
  QuadraticTask(RealMatrix a, RealVector b, RealVector target)
      : a_(std::move(a)), b_(std::move(b)), target_(std::move(target)) {
    if (a_.rows() != a_.cols() || a_.rows() != b_.size() || b_.size() != target_.size()) {
      throw std::invalid_argument("QuadraticTask: inconsistent shapes");
    }
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(0.5 * (a_ + a_.transpose()));
    if (es.eigenvalues().minCoeff() <= 0.0) {
      throw std::invalid_argument("QuadraticTask: symmetric part not positive definite");
    }
  }

  const RealMatrix& a() const { return a_; }
  const RealVector& b() const { return b_; }
  const RealVector& target() const { return target_; }

  int param_count() const override { return static_cast<int>(b_.size()); }

  RealVector init_params(std::uint64_t seed) const override {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    RealVector theta(param_count());
    for (int i = 0; i < theta.size(); ++i) theta(i) = gauss(rng);
    return theta;
  }

  double train_loss(const RealVector& theta, const RealVector&, const Batch&) const override {
    return 0.5 * theta.dot(a_ * theta) - b_.dot(theta);
  }
  RealVector train_grad(const RealVector& theta, const RealVector&, const Batch&) const override {
    return a_ * theta - b_;
  }
  RealVector train_grad_jvp(const RealVector&, const RealVector&, const Batch&,
                            const RealVector& dtheta, const RealVector&) const override {
    return a_ * dtheta;
  }
  double val_loss(const RealVector& theta, const Batch&) const override {
    return 0.5 * (theta - target_).squaredNorm();
  }
  RealVector val_grad(const RealVector& theta, const Batch&) const override {
    return theta - target_;
  }

 private:
  RealMatrix a_;
  RealVector b_, target_;
};

/// Random SPD quadratic with eigenvalues log-spaced in [eig_min, eig_max].
inline QuadraticTask make_random_quadratic(int p, std::uint64_t seed, double eig_min,
                                           double eig_max) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  RealMatrix noise(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) noise(i, j) = gauss(rng);
  Eigen::HouseholderQR<RealMatrix> qr(noise);
  RealMatrix q = qr.householderQ() * RealMatrix::Identity(p, p);
  RealVector eigs(p);
  for (int i = 0; i < p; ++i) {
    const double frac = p > 1 ? double(i) / (p - 1) : 0.0;
    eigs(i) = eig_min * std::pow(eig_max / eig_min, frac);
  }
  RealMatrix a = q * eigs.asDiagonal() * q.transpose();
  a = 0.5 * (a + a.transpose());
  RealVector b(p), target(p);
  for (int i = 0; i < p; ++i) b(i) = gauss(rng);
  for (int i = 0; i < p; ++i) target(i) = gauss(rng);
  return QuadraticTask(std::move(a), std::move(b), std::move(target));
}

/// Exact end-of-training hypergradient of the quadratic task under plain
/// gradient descent (learning rate and optional weight decay may be bound to
/// hyperparameters; momentum must be off). Independent of the tangent
/// optimizer path: evaluates the closed-form linear recursion directly.
inline RealVector quadratic_oracle_hypergradient(const QuadraticTask& task, const HyperParams& hp,
                                                 const KnobBinding& lr, const KnobBinding& wd,
                                                 const RealVector& theta0, long total_steps) {
  const TransformedValues tv = transform(hp);
  const double eta = lr.value(tv);
  const double decay = wd.value(tv);
  const int p = task.param_count();
  const int q = hp.size();

  RealMatrix regularized = task.a() + decay * RealMatrix::Identity(p, p);
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(regularized);
  const double worst_rate =
      std::max(std::abs(1.0 - eta * es.eigenvalues().minCoeff()),
               std::abs(1.0 - eta * es.eigenvalues().maxCoeff()));
  if (eta != 0.0 && worst_rate >= 1.0) {
    throw std::invalid_argument(
        "quadratic_oracle_hypergradient: divergent learning rate, contraction factor " +
        std::to_string(worst_rate));
  }

  RealVector theta = theta0;
  RealMatrix dtheta = RealMatrix::Zero(p, q);
  for (long t = 0; t < total_steps; ++t) {
    const RealVector grad = regularized * theta - task.b();
    RealMatrix dgrad = regularized * dtheta;
    for (int i = 0; i < q; ++i) {
      const double dwd = wd.deriv(tv, i);
      if (dwd != 0.0) dgrad.col(i) += dwd * theta;
      dtheta.col(i) -= eta * dgrad.col(i) + lr.deriv(tv, i) * grad;
    }
    theta -= eta * grad;
  }
  return dtheta.transpose() * (theta - task.target());
}

// ---------------------------------------------------------------------------
// MLP classifier
// ---------------------------------------------------------------------------

/// Fully connected leaky-ReLU classifier with softmax cross-entropy.
/// Parameters are flattened [W_1, b_1, ..., W_L, b_L] with W column-major.
/// train_grad_jvp propagates forward-mode tangents through the model's own
/// backward pass, so directional derivatives of the gradient are exact.
class MlpClassifier : public InnerModel {
 public:
  MlpClassifier(std::vector<int> layer_sizes, std::uint64_t, double leaky_slope = 0.01)
      : sizes_(std::move(layer_sizes)), slope_(leaky_slope) {
    if (sizes_.size() < 2) throw std::invalid_argument("MlpClassifier: need >= 2 layer sizes");
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      param_total_ += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
      offsets_.push_back(param_total_);
    }
  }

  int param_count() const override { return param_total_; }
  int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }
  int class_count() const { return sizes_.back(); }
  double leaky_slope() const { return slope_; }

  RealVector init_params(std::uint64_t seed) const override {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    RealVector theta = RealVector::Zero(param_total_);
    for (int l = 0; l < layer_count(); ++l) {
      const int fan_in = sizes_[static_cast<std::size_t>(l)];
      const int fan_out = sizes_[static_cast<std::size_t>(l) + 1];
      const double scale = std::sqrt(2.0 / (fan_in * (1.0 + slope_ * slope_)));
      double* w = theta.data() + offsets_[static_cast<std::size_t>(l)];
      for (int k = 0; k < fan_in * fan_out; ++k) w[k] = scale * gauss(rng);
      // biases stay zero
    }
    return theta;
  }

  struct Workspace {
    RealMatrix inputs;               // n x d
    std::vector<int> labels;         // n
    std::vector<RealMatrix> acts;    // acts[0] = inputs, acts[l] post-activation
    std::vector<RealMatrix> preacts; // preacts[l] = acts[l] W + b
    RealMatrix probs;                // n x C softmax
    RealVector losses;               // per-example cross-entropy
    int n = 0;
  };

  Workspace forward(const RealVector& theta, const Batch& batch) const {
    Workspace ws;
    ws.n = batch.size();
    if (ws.n < 1) throw std::invalid_argument("MlpClassifier: empty batch");
    ws.inputs.resize(ws.n, sizes_.front());
    ws.labels.resize(static_cast<std::size_t>(ws.n));
    for (int i = 0; i < ws.n; ++i) {
      const int row = batch.indices[static_cast<std::size_t>(i)];
      ws.inputs.row(i) = batch.data->inputs.row(row);
      ws.labels[static_cast<std::size_t>(i)] = batch.data->labels[static_cast<std::size_t>(row)];
    }
    ws.acts.resize(static_cast<std::size_t>(layer_count()) + 1);
    ws.preacts.resize(static_cast<std::size_t>(layer_count()));
    ws.acts[0] = ws.inputs;
    for (int l = 0; l < layer_count(); ++l) {
      auto [w, b] = layer(theta, l);
      RealMatrix& pre = ws.preacts[static_cast<std::size_t>(l)];
      pre = ws.acts[static_cast<std::size_t>(l)] * w;
      pre.rowwise() += b.transpose();
      if (l + 1 < layer_count()) {
        ws.acts[static_cast<std::size_t>(l) + 1] =
            pre.unaryExpr([s = slope_](double x) { return x > 0.0 ? x : s * x; });
      } else {
        ws.acts[static_cast<std::size_t>(l) + 1] = pre;  // logits
      }
    }
    const RealMatrix& logits = ws.preacts.back();
    ws.probs.resize(ws.n, class_count());
    ws.losses.resize(ws.n);
    for (int i = 0; i < ws.n; ++i) {
      const double rowmax = logits.row(i).maxCoeff();
      RealVector ex = (logits.row(i).array() - rowmax).exp();
      const double denom = ex.sum();
      ws.probs.row(i) = ex.transpose() / denom;
      ws.losses(i) = std::log(denom) + rowmax - logits(i, ws.labels[static_cast<std::size_t>(i)]);
    }
    return ws;
  }

  /// Backward pass with per-example row scales (caller folds in any 1/n).
  RealVector weighted_grad(const RealVector& theta, const Workspace& ws,
                           const RealVector& row_scale) const {
    RealVector grad = RealVector::Zero(param_total_);
    RealMatrix delta = ws.probs;  // becomes row-scaled (P - Y)
    for (int i = 0; i < ws.n; ++i) {
      delta(i, ws.labels[static_cast<std::size_t>(i)]) -= 1.0;
      delta.row(i) *= row_scale(i);
    }
    for (int l = layer_count() - 1; l >= 0; --l) {
      auto [w, b] = layer(theta, l);
      (void)b;
      auto [gw, gb] = layer_grad(grad, l);
      gw = ws.acts[static_cast<std::size_t>(l)].transpose() * delta;
      gb = delta.colwise().sum().transpose();
      if (l > 0) {
        RealMatrix back = delta * w.transpose();
        delta = back.cwiseProduct(activation_mask(ws.preacts[static_cast<std::size_t>(l) - 1]));
      }
    }
    return grad;
  }

  struct TangentWorkspace {
    std::vector<RealMatrix> dacts;
    std::vector<RealMatrix> dpreacts;
    RealMatrix dprobs;
    RealVector dlosses;  // per-example loss tangents
  };

  /// Forward tangent along dtheta (inputs carry no tangent).
  TangentWorkspace forward_tangent(const RealVector& theta, const RealVector& dtheta,
                                   const Workspace& ws) const {
    TangentWorkspace tg;
    tg.dacts.resize(static_cast<std::size_t>(layer_count()) + 1);
    tg.dpreacts.resize(static_cast<std::size_t>(layer_count()));
    tg.dacts[0] = RealMatrix::Zero(ws.n, sizes_.front());
    for (int l = 0; l < layer_count(); ++l) {
      auto [w, b] = layer(theta, l);
      (void)b;
      auto [dw, db] = layer(dtheta, l);
      RealMatrix& dpre = tg.dpreacts[static_cast<std::size_t>(l)];
      dpre = tg.dacts[static_cast<std::size_t>(l)] * w + ws.acts[static_cast<std::size_t>(l)] * dw;
      dpre.rowwise() += db.transpose();
      if (l + 1 < layer_count()) {
        tg.dacts[static_cast<std::size_t>(l) + 1] =
            dpre.cwiseProduct(activation_mask(ws.preacts[static_cast<std::size_t>(l)]));
      } else {
        tg.dacts[static_cast<std::size_t>(l) + 1] = dpre;
      }
    }
    const RealMatrix& dlogits = tg.dpreacts.back();
    tg.dprobs.resize(ws.n, class_count());
    tg.dlosses.resize(ws.n);
    for (int i = 0; i < ws.n; ++i) {
      const double inner = ws.probs.row(i).dot(dlogits.row(i));
      tg.dprobs.row(i) =
          ws.probs.row(i).cwiseProduct((dlogits.row(i).array() - inner).matrix());
      tg.dlosses(i) = inner - dlogits(i, ws.labels[static_cast<std::size_t>(i)]);
    }
    return tg;
  }

  /// Tangent of weighted_grad with the row scales held fixed.
  RealVector weighted_grad_tangent(const RealVector& theta, const RealVector& dtheta,
                                   const Workspace& ws, const TangentWorkspace& tg,
                                   const RealVector& row_scale) const {
    RealVector dgrad = RealVector::Zero(param_total_);
    RealMatrix delta = ws.probs;
    RealMatrix ddelta = tg.dprobs;
    for (int i = 0; i < ws.n; ++i) {
      delta(i, ws.labels[static_cast<std::size_t>(i)]) -= 1.0;
      delta.row(i) *= row_scale(i);
      ddelta.row(i) *= row_scale(i);
    }
    for (int l = layer_count() - 1; l >= 0; --l) {
      auto [w, b] = layer(theta, l);
      (void)b;
      auto [dw, db] = layer(dtheta, l);
      (void)db;
      auto [gw, gb] = layer_grad(dgrad, l);
      gw = tg.dacts[static_cast<std::size_t>(l)].transpose() * delta +
           ws.acts[static_cast<std::size_t>(l)].transpose() * ddelta;
      gb = ddelta.colwise().sum().transpose();
      if (l > 0) {
        const RealMatrix mask = activation_mask(ws.preacts[static_cast<std::size_t>(l) - 1]);
        RealMatrix dback = ddelta * w.transpose() + delta * dw.transpose();
        ddelta = dback.cwiseProduct(mask);
        RealMatrix back = delta * w.transpose();
        delta = back.cwiseProduct(mask);
      }
    }
    return dgrad;
  }

  // InnerModel surface -------------------------------------------------------

  double train_loss(const RealVector& theta, const RealVector&,
                    const Batch& batch) const override {
    return forward(theta, batch).losses.mean();
  }

  RealVector train_grad(const RealVector& theta, const RealVector&,
                        const Batch& batch) const override {
    Workspace ws = forward(theta, batch);
    return weighted_grad(theta, ws, RealVector::Constant(ws.n, 1.0 / ws.n));
  }

  RealVector train_grad_jvp(const RealVector& theta, const RealVector&, const Batch& batch,
                            const RealVector& dtheta, const RealVector&) const override {
    Workspace ws = forward(theta, batch);
    TangentWorkspace tg = forward_tangent(theta, dtheta, ws);
    return weighted_grad_tangent(theta, dtheta, ws, tg,
                                 RealVector::Constant(ws.n, 1.0 / ws.n));
  }

  RealVector grad_with_jvps(const RealVector& theta, const RealVector&, const Batch& batch,
                            const RealMatrix& dtheta_cols, const RealMatrix&,
                            RealMatrix& jvp_out) const override {
    Workspace ws = forward(theta, batch);
    const RealVector scale = RealVector::Constant(ws.n, 1.0 / ws.n);
    jvp_out.resize(param_total_, dtheta_cols.cols());
    for (Eigen::Index i = 0; i < dtheta_cols.cols(); ++i) {
      TangentWorkspace tg = forward_tangent(theta, dtheta_cols.col(i), ws);
      jvp_out.col(i) = weighted_grad_tangent(theta, dtheta_cols.col(i), ws, tg, scale);
    }
    return weighted_grad(theta, ws, scale);
  }

  double val_loss(const RealVector& theta, const Batch& val_set) const override {
    return train_loss(theta, RealVector(), val_set);
  }
  RealVector val_grad(const RealVector& theta, const Batch& val_set) const override {
    return train_grad(theta, RealVector(), val_set);
  }

  double accuracy(const RealVector& theta, const Batch& data) const override {
    Workspace ws = forward(theta, data);
    int hits = 0;
    for (int i = 0; i < ws.n; ++i) {
      Eigen::Index best;
      ws.probs.row(i).maxCoeff(&best);
      if (static_cast<int>(best) == ws.labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return double(hits) / ws.n;
  }

 private:
  std::pair<Eigen::Map<const RealMatrix>, Eigen::Map<const RealVector>> layer(
      const RealVector& theta, int l) const {
    const int in = sizes_[static_cast<std::size_t>(l)];
    const int out = sizes_[static_cast<std::size_t>(l) + 1];
    const double* base = theta.data() + offsets_[static_cast<std::size_t>(l)];
    return {Eigen::Map<const RealMatrix>(base, in, out),
            Eigen::Map<const RealVector>(base + in * out, out)};
  }

  std::pair<Eigen::Map<RealMatrix>, Eigen::Map<RealVector>> layer_grad(RealVector& grad,
                                                                       int l) const {
    const int in = sizes_[static_cast<std::size_t>(l)];
    const int out = sizes_[static_cast<std::size_t>(l) + 1];
    double* base = grad.data() + offsets_[static_cast<std::size_t>(l)];
    return {Eigen::Map<RealMatrix>(base, in, out), Eigen::Map<RealVector>(base + in * out, out)};
  }

  RealMatrix activation_mask(const RealMatrix& pre) const {
    return pre.unaryExpr([s = slope_](double x) { return x > 0.0 ? 1.0 : s; });
  }

  std::vector<int> sizes_;
  double slope_;
  std::vector<int> offsets_;
  int param_total_ = 0;
};

// ---------------------------------------------------------------------------
// Loss reweighting
// ---------------------------------------------------------------------------

/// Scalar meta-module mu: R -> (0, 1), a one-hidden-layer leaky-ReLU MLP with
/// a logistic output. Its parameters are the hyperparameter vector
/// [a (hidden), d (hidden), v (hidden), c], identity-transformed.
struct ReweightModule {
  int hidden = 8;
  double leaky_slope = 0.01;

  int param_count() const { return 3 * hidden + 1; }

  /// Full jet evaluation at x with a directional parameter seed (may be empty).
  Jet2 eval_jet(const RealVector& phi, const RealVector& dphi, double x) const {
    check(phi);
    const bool seeded = dphi.size() == phi.size();
    Jet2 acc = seeded ? Jet2::param(phi(3 * hidden), dphi(3 * hidden))
                      : Jet2::constant(phi(3 * hidden));
    const Jet2 xin = Jet2::variable_x(x);
    for (int k = 0; k < hidden; ++k) {
      const Jet2 a = seeded ? Jet2::param(phi(k), dphi(k)) : Jet2::constant(phi(k));
      const Jet2 d =
          seeded ? Jet2::param(phi(hidden + k), dphi(hidden + k)) : Jet2::constant(phi(hidden + k));
      const Jet2 v = seeded ? Jet2::param(phi(2 * hidden + k), dphi(2 * hidden + k))
                            : Jet2::constant(phi(2 * hidden + k));
      acc = acc + v * leaky_relu(a * xin + d, leaky_slope);
    }
    return logistic(acc);
  }

  double value(const RealVector& phi, double x) const { return eval_jet(phi, RealVector(), x).v; }

  /// Seeded initialization; small weights keep mu near 1/2 at the start.
  RealVector init(std::uint64_t seed, double scale = 0.5) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    RealVector phi(param_count());
    for (int i = 0; i < phi.size(); ++i) phi(i) = scale * gauss(rng);
    phi(3 * hidden) = 0.0;
    return phi;
  }

 private:
  void check(const RealVector& phi) const {
    if (phi.size() != param_count()) {
      throw std::invalid_argument("ReweightModule: phi length " + std::to_string(phi.size()) +
                                  " != " + std::to_string(param_count()));
    }
  }
};

/// Classifier trained under the example-reweighted loss
///   mean_i L_i * mu_phi(L_i),
/// where L_i is the per-example cross-entropy. phi is mu's parameter vector;
/// gradients and jvps differentiate through both the theta and phi paths.
class ReweightedClassifier final : public InnerModel {
 public:
  ReweightedClassifier(MlpClassifier classifier, ReweightModule module)
      : classifier_(std::move(classifier)), module_(module) {}

  const MlpClassifier& classifier() const { return classifier_; }
  const ReweightModule& reweighter() const { return module_; }

  int param_count() const override { return classifier_.param_count(); }
  RealVector init_params(std::uint64_t seed) const override {
    return classifier_.init_params(seed);
  }

  double train_loss(const RealVector& theta, const RealVector& phi,
                    const Batch& batch) const override {
    MlpClassifier::Workspace ws = classifier_.forward(theta, batch);
    double acc = 0.0;
    for (int i = 0; i < ws.n; ++i) acc += ws.losses(i) * module_.value(phi, ws.losses(i));
    return acc / ws.n;
  }

  RealVector train_grad(const RealVector& theta, const RealVector& phi,
                        const Batch& batch) const override {
    MlpClassifier::Workspace ws = classifier_.forward(theta, batch);
    RealVector scale(ws.n);
    for (int i = 0; i < ws.n; ++i) {
      const Jet2 mu = module_.eval_jet(phi, RealVector(), ws.losses(i));
      scale(i) = (mu.v + ws.losses(i) * mu.dx) / ws.n;
    }
    return classifier_.weighted_grad(theta, ws, scale);
  }

  RealVector train_grad_jvp(const RealVector& theta, const RealVector& phi, const Batch& batch,
                            const RealVector& dtheta, const RealVector& dphi) const override {
    MlpClassifier::Workspace ws = classifier_.forward(theta, batch);
    MlpClassifier::TangentWorkspace tg = classifier_.forward_tangent(theta, dtheta, ws);
    RealVector scale(ws.n), dscale(ws.n);
    for (int i = 0; i < ws.n; ++i) {
      const double loss = ws.losses(i);
      const Jet2 mu = module_.eval_jet(phi, dphi, loss);
      // w = mu + L mu_x; dw chains through dL (theta path) and dphi.
      scale(i) = (mu.v + loss * mu.dx) / ws.n;
      dscale(i) =
          ((2.0 * mu.dx + loss * mu.dxx) * tg.dlosses(i) + mu.dp + loss * mu.dxp) / ws.n;
    }
    return classifier_.weighted_grad_tangent(theta, dtheta, ws, tg, scale) +
           classifier_.weighted_grad(theta, ws, dscale);
  }

  RealVector grad_with_jvps(const RealVector& theta, const RealVector& phi, const Batch& batch,
                            const RealMatrix& dtheta_cols, const RealMatrix& dphi_cols,
                            RealMatrix& jvp_out) const override {
    MlpClassifier::Workspace ws = classifier_.forward(theta, batch);
    RealVector scale(ws.n);
    for (int i = 0; i < ws.n; ++i) {
      const Jet2 mu = module_.eval_jet(phi, RealVector(), ws.losses(i));
      scale(i) = (mu.v + ws.losses(i) * mu.dx) / ws.n;
    }
    jvp_out.resize(param_count(), dtheta_cols.cols());
    RealVector dscale(ws.n);
    for (Eigen::Index col = 0; col < dtheta_cols.cols(); ++col) {
      MlpClassifier::TangentWorkspace tg =
          classifier_.forward_tangent(theta, dtheta_cols.col(col), ws);
      for (int i = 0; i < ws.n; ++i) {
        const double loss = ws.losses(i);
        const Jet2 mu = module_.eval_jet(phi, dphi_cols.col(col), loss);
        dscale(i) =
            ((2.0 * mu.dx + loss * mu.dxx) * tg.dlosses(i) + mu.dp + loss * mu.dxp) / ws.n;
      }
      jvp_out.col(col) =
          classifier_.weighted_grad_tangent(theta, dtheta_cols.col(col), ws, tg, scale) +
          classifier_.weighted_grad(theta, ws, dscale);
    }
    return classifier_.weighted_grad(theta, ws, scale);
  }

  // Meta objective: plain cross-entropy on the balanced validation set.
  double val_loss(const RealVector& theta, const Batch& val_set) const override {
    return classifier_.val_loss(theta, val_set);
  }
  RealVector val_grad(const RealVector& theta, const Batch& val_set) const override {
    return classifier_.val_grad(theta, val_set);
  }
  double accuracy(const RealVector& theta, const Batch& data) const override {
    return classifier_.accuracy(theta, data);
  }

 private:
  MlpClassifier classifier_;
  ReweightModule module_;
};

}  // namespace koopgrad
