// SPDX-License-Identifier: Apache-2.0
//
// Differentiable inner-loop optimizers. Each step advances the model
// parameters together with the tangent Z = d(theta)/d(phi) of every
// unconstrained hyperparameter, by forward-mode propagation through the
// update rule (including the optimizer state buffers, which are part of the
// dynamical system and carry their own tangents).
#pragma once

#include <koopgrad/data.hpp>
#include <koopgrad/numerics.hpp>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace koopgrad {

enum class Transform { Identity, Sigmoid };

inline Transform transform_from_string(const std::string& s) {
  if (s == "identity") return Transform::Identity;
  if (s == "sigmoid") return Transform::Sigmoid;
  throw std::invalid_argument("unknown transform: " + s);
}

inline std::string to_string(Transform t) {
  return t == Transform::Sigmoid ? "sigmoid" : "identity";
}

/// Unconstrained hyperparameter vector with per-entry range transforms.
struct HyperParams {
  RealVector raw;
  std::vector<Transform> transforms;
  std::vector<std::string> names;

  int size() const { return static_cast<int>(raw.size()); }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    if (transforms.size() != static_cast<std::size_t>(raw.size()) ||
        names.size() != static_cast<std::size_t>(raw.size())) {
      throw std::invalid_argument("HyperParams: raw/transforms/names sizes disagree");
    }
  }
};

struct TransformedValues {
  RealVector values;         // constrained values seen by the update rule
  RealVector jacobian_diag;  // d(value)/d(raw), per entry
};

/// Applies the per-entry transforms. Sigmoid maps raw r to 1/(1+e^-r) with
/// derivative v(1-v); identity passes through with derivative 1.
inline TransformedValues transform(const HyperParams& hp) {
  hp.validate();
  TransformedValues tv;
  tv.values.resize(hp.size());
  tv.jacobian_diag.resize(hp.size());
  for (int i = 0; i < hp.size(); ++i) {
    if (hp.transforms[static_cast<std::size_t>(i)] == Transform::Sigmoid) {
      const double v = 1.0 / (1.0 + std::exp(-hp.raw(i)));
      tv.values(i) = v;
      tv.jacobian_diag(i) = v * (1.0 - v);
    } else {
      tv.values(i) = hp.raw(i);
      tv.jacobian_diag(i) = 1.0;
    }
  }
  return tv;
}

/// Tangents of the training state: z_theta = d(theta)/d(phi_raw) plus one
/// matching block per optimizer state buffer. All zero right after
/// (re)initialization.
struct TangentState {
  RealMatrix z_theta;                  // p x q
  std::vector<RealMatrix> z_buffers;   // one p x q block per optimizer buffer

  void reset(Eigen::Index p, Eigen::Index q, std::size_t buffer_count) {
    z_theta = RealMatrix::Zero(p, q);
    z_buffers.assign(buffer_count, RealMatrix::Zero(p, q));
  }

  bool all_finite() const {
    if (!z_theta.allFinite()) return false;
    for (const RealMatrix& b : z_buffers)
      if (!b.allFinite()) return false;
    return true;
  }
};

struct TrainingDiverged : std::runtime_error {
  long step;
  explicit TrainingDiverged(long step_index)
      : std::runtime_error("training diverged at step " + std::to_string(step_index)),
        step(step_index) {}
};

/// Contract every inner problem implements. `phi` is always the vector of
/// transformed hyperparameter values; models that do not consume
/// hyperparameters directly simply ignore it (and its jvp direction).
class InnerModel {
 public:
  virtual ~InnerModel() = default;

  virtual int param_count() const = 0;
  virtual RealVector init_params(std::uint64_t seed) const = 0;

  virtual double train_loss(const RealVector& theta, const RealVector& phi,
                            const Batch& batch) const = 0;
  virtual RealVector train_grad(const RealVector& theta, const RealVector& phi,
                                const Batch& batch) const = 0;

  /// Directional derivative of train_grad at (theta, phi) along (dtheta, dphi).
  virtual RealVector train_grad_jvp(const RealVector& theta, const RealVector& phi,
                                    const Batch& batch, const RealVector& dtheta,
                                    const RealVector& dphi) const = 0;

  /// Gradient plus one jvp per direction column; overridable to share the
  /// primal forward/backward work across columns.
  virtual RealVector grad_with_jvps(const RealVector& theta, const RealVector& phi,
                                    const Batch& batch, const RealMatrix& dtheta_cols,
                                    const RealMatrix& dphi_cols, RealMatrix& jvp_out) const {
    RealVector g = train_grad(theta, phi, batch);
    jvp_out.resize(theta.size(), dtheta_cols.cols());
    for (Eigen::Index i = 0; i < dtheta_cols.cols(); ++i) {
      jvp_out.col(i) =
          train_grad_jvp(theta, phi, batch, dtheta_cols.col(i), dphi_cols.col(i));
    }
    return g;
  }

  virtual double val_loss(const RealVector& theta, const Batch& val_set) const = 0;
  virtual RealVector val_grad(const RealVector& theta, const Batch& val_set) const = 0;

  virtual double accuracy(const RealVector&, const Batch&) const {
    return std::numeric_limits<double>::quiet_NaN();
  }
};

/// h_t = val_grad(theta)^T Z, the local hypergradient of the meta objective.
inline RealVector local_hypergradient(const RealVector& theta, const TangentState& z,
                                      const InnerModel& model, const Batch& val_set) {
  return z.z_theta.transpose() * model.val_grad(theta, val_set);
}

/// One optimizer knob: either an index into phi or a fixed constant.
struct KnobBinding {
  int index = -1;
  double fixed = 0.0;

  static KnobBinding hyper(int i) { return KnobBinding{i, 0.0}; }
  static KnobBinding constant(double v) { return KnobBinding{-1, v}; }
  static KnobBinding named(const HyperParams& hp, const std::string& name, double fallback) {
    const int i = hp.index_of(name);
    return i >= 0 ? hyper(i) : constant(fallback);
  }

  bool is_hyper() const { return index >= 0; }
  double value(const TransformedValues& tv) const {
    return is_hyper() ? tv.values(index) : fixed;
  }
  // d(knob)/d(raw_i), including the transform jacobian
  double deriv(const TransformedValues& tv, int i) const {
    return (is_hyper() && index == i) ? tv.jacobian_diag(i) : 0.0;
  }
};

/// Inner optimizer advancing (theta, buffers) and their tangents in lockstep.
class TangentOptimizer {
 public:
  virtual ~TangentOptimizer() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t buffer_count() const = 0;
  virtual void reset(Eigen::Index p) = 0;
  /// step_index is 1-based and drives divergence reports (and Adam's bias
  /// correction); the caller owns the counter so that checkpoint restores
  /// rewind it naturally.
  virtual void step(RealVector& theta, TangentState& z, const HyperParams& hp,
                    const Batch& batch, const InnerModel& model, long step_index) = 0;
  virtual std::unique_ptr<TangentOptimizer> clone() const = 0;
  /// Raw bytes of the optimizer state, for checkpoint bit-identity checks.
  virtual void append_state_bytes(std::string& out) const = 0;
};

namespace detail {

inline void append_vector_bytes(std::string& out, const RealVector& v) {
  out.append(reinterpret_cast<const char*>(v.data()), sizeof(double) * v.size());
}

inline RealMatrix knob_directions(const TransformedValues& tv) {
  // dphi column i in transformed space for raw direction e_i
  return RealMatrix(tv.jacobian_diag.asDiagonal());
}

}  // namespace detail

/// SGD with momentum and weight decay:
///   v' = mu v + grad + wd theta,  theta' = theta - eta v'
/// with tangents through every knob that is bound to a hyperparameter.
class SgdTangentOptimizer final : public TangentOptimizer {
 public:
  SgdTangentOptimizer(KnobBinding lr, KnobBinding momentum, KnobBinding weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  std::string kind() const override { return "sgd"; }
  std::size_t buffer_count() const override { return 1; }

  void reset(Eigen::Index p) override { velocity_ = RealVector::Zero(p); }

  void step(RealVector& theta, TangentState& z, const HyperParams& hp, const Batch& batch,
            const InnerModel& model, long step_index) override {
    const TransformedValues tv = transform(hp);
    const double eta = lr_.value(tv);
    const double mu = momentum_.value(tv);
    const double wd = weight_decay_.value(tv);
    const int q = hp.size();

    RealMatrix jvps;
    const RealVector grad =
        model.grad_with_jvps(theta, tv.values, batch, z.z_theta, detail::knob_directions(tv), jvps);

    const RealVector velocity_new = mu * velocity_ + grad + wd * theta;
    RealMatrix& dv = z.z_buffers[0];
    for (int i = 0; i < q; ++i) {
      RealVector dv_new = mu * dv.col(i) + jvps.col(i) + wd * z.z_theta.col(i);
      const double dmu = momentum_.deriv(tv, i);
      const double dwd = weight_decay_.deriv(tv, i);
      const double deta = lr_.deriv(tv, i);
      if (dmu != 0.0) dv_new += dmu * velocity_;
      if (dwd != 0.0) dv_new += dwd * theta;
      z.z_theta.col(i) -= eta * dv_new;
      if (deta != 0.0) z.z_theta.col(i) -= deta * velocity_new;
      dv.col(i) = dv_new;
    }
    velocity_ = velocity_new;
    theta -= eta * velocity_;

    if (!theta.allFinite() || !z.all_finite()) throw TrainingDiverged(step_index);
  }

  std::unique_ptr<TangentOptimizer> clone() const override {
    return std::make_unique<SgdTangentOptimizer>(*this);
  }

  void append_state_bytes(std::string& out) const override {
    detail::append_vector_bytes(out, velocity_);
  }

 private:
  KnobBinding lr_, momentum_, weight_decay_;
  RealVector velocity_;
};

/// Bias-corrected Adam with learnable learning rate and betas. Tangents chain
/// through the moment buffers, the beta powers in the bias corrections, and
/// the 1/(sqrt(v)+eps) nonlinearity. eps is fixed, not a hyperparameter.
class AdamTangentOptimizer final : public TangentOptimizer {
 public:
  AdamTangentOptimizer(KnobBinding lr, KnobBinding beta1, KnobBinding beta2)
      : lr_(lr), beta1_(beta1), beta2_(beta2) {}

  std::string kind() const override { return "adam"; }
  std::size_t buffer_count() const override { return 2; }

  void reset(Eigen::Index p) override {
    first_moment_ = RealVector::Zero(p);
    second_moment_ = RealVector::Zero(p);
  }

  void step(RealVector& theta, TangentState& z, const HyperParams& hp, const Batch& batch,
            const InnerModel& model, long step_index) override {
    const TransformedValues tv = transform(hp);
    const double eta = lr_.value(tv);
    const double b1 = beta1_.value(tv);
    const double b2 = beta2_.value(tv);
    const int q = hp.size();
    const auto t = static_cast<double>(step_index);

    RealMatrix jvps;
    const RealVector grad =
        model.grad_with_jvps(theta, tv.values, batch, z.z_theta, detail::knob_directions(tv), jvps);

    const RealVector m_new = b1 * first_moment_ + (1.0 - b1) * grad;
    const RealVector u_new = b2 * second_moment_ + (1.0 - b2) * grad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(b1, t);
    const double bc2 = 1.0 - std::pow(b2, t);
    const RealVector m_hat = m_new / bc1;
    const RealVector u_hat = u_new / bc2;
    const RealVector denom = u_hat.cwiseSqrt().array() + kEps;
    const RealVector update = m_hat.cwiseQuotient(denom);

    // d(sqrt(u_hat)): guard exact zeros (possible only when every past
    // gradient component was zero, in which case the tangent is zero too).
    RealVector inv_two_sqrt(u_hat.size());
    for (Eigen::Index k = 0; k < u_hat.size(); ++k) {
      inv_two_sqrt(k) = u_hat(k) > 0.0 ? 0.5 / std::sqrt(u_hat(k)) : 0.0;
    }

    RealMatrix& dm = z.z_buffers[0];
    RealMatrix& du = z.z_buffers[1];
    for (int i = 0; i < q; ++i) {
      const double db1 = beta1_.deriv(tv, i);
      const double db2 = beta2_.deriv(tv, i);
      const double deta = lr_.deriv(tv, i);

      RealVector dm_new = b1 * dm.col(i) + (1.0 - b1) * jvps.col(i);
      if (db1 != 0.0) dm_new += db1 * (first_moment_ - grad);
      RealVector du_new = b2 * du.col(i) +
                          (1.0 - b2) * 2.0 * grad.cwiseProduct(jvps.col(i));
      if (db2 != 0.0) du_new += db2 * (second_moment_ - grad.cwiseAbs2());

      RealVector dm_hat = dm_new / bc1;
      if (db1 != 0.0) dm_hat += m_new * (t * std::pow(b1, t - 1.0) * db1 / (bc1 * bc1));
      RealVector du_hat = du_new / bc2;
      if (db2 != 0.0) du_hat += u_new * (t * std::pow(b2, t - 1.0) * db2 / (bc2 * bc2));

      const RealVector ddenom = du_hat.cwiseProduct(inv_two_sqrt);
      const RealVector dupdate =
          dm_hat.cwiseQuotient(denom) -
          m_hat.cwiseProduct(ddenom).cwiseQuotient(denom.cwiseAbs2());

      z.z_theta.col(i) -= eta * dupdate;
      if (deta != 0.0) z.z_theta.col(i) -= deta * update;
      dm.col(i) = dm_new;
      du.col(i) = du_new;
    }

    first_moment_ = m_new;
    second_moment_ = u_new;
    theta -= eta * update;

    if (!theta.allFinite() || !z.all_finite()) throw TrainingDiverged(step_index);
  }

  std::unique_ptr<TangentOptimizer> clone() const override {
    return std::make_unique<AdamTangentOptimizer>(*this);
  }

  void append_state_bytes(std::string& out) const override {
    detail::append_vector_bytes(out, first_moment_);
    detail::append_vector_bytes(out, second_moment_);
  }

  static constexpr double kEps = 1e-8;

 private:
  KnobBinding lr_, beta1_, beta2_;
  RealVector first_moment_, second_moment_;
};

}  // namespace koopgrad
