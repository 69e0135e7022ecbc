// SPDX-License-Identifier: Apache-2.0
//
// Inner/outer loop orchestration for the three update strategies: local
// (latest short-horizon hypergradient), greedy-global (playout to the end of
// training from a checkpoint), and glocal (Koopman steady-state estimate from
// the trailing window of local hypergradients), plus a no-HPO baseline and a
// restart-style reference mode.
#pragma once

#include <koopgrad/data.hpp>
#include <koopgrad/dmd.hpp>
#include <koopgrad/runlog.hpp>
#include <koopgrad/tangent_optim.hpp>

#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace koopgrad {

enum class Strategy { None, Local, GlobalGreedy, GlobalRestart, Glocal };

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "none") return Strategy::None;
  if (s == "local") return Strategy::Local;
  if (s == "global") return Strategy::GlobalGreedy;
  if (s == "global-restart") return Strategy::GlobalRestart;
  if (s == "glocal") return Strategy::Glocal;
  throw std::invalid_argument("unknown strategy: " + s);
}

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::None: return "none";
    case Strategy::Local: return "local";
    case Strategy::GlobalGreedy: return "global";
    case Strategy::GlobalRestart: return "global-restart";
    case Strategy::Glocal: return "glocal";
  }
  return "?";
}

// --- outer optimizer ---------------------------------------------------------

struct OuterOptSpec {
  enum class Kind { Gd, Adam };
  Kind kind = Kind::Adam;
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Updates the raw (unconstrained) hyperparameter vector. State persists
/// across outer steps for the lifetime of one run.
class OuterOptimizer {
 public:
  explicit OuterOptimizer(OuterOptSpec spec) : spec_(spec) {}

  void reset(Eigen::Index q) {
    m_ = RealVector::Zero(q);
    v_ = RealVector::Zero(q);
    count_ = 0;
  }

  void apply(HyperParams& hp, const RealVector& hypergrad) {
    if (hypergrad.size() != hp.raw.size()) {
      throw std::invalid_argument("outer_update: hypergradient size mismatch");
    }
    if (spec_.kind == OuterOptSpec::Kind::Gd) {
      hp.raw -= spec_.lr * hypergrad;
      return;
    }
    ++count_;
    m_ = spec_.beta1 * m_ + (1.0 - spec_.beta1) * hypergrad;
    v_ = spec_.beta2 * v_ + (1.0 - spec_.beta2) * hypergrad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(spec_.beta1, double(count_));
    const double bc2 = 1.0 - std::pow(spec_.beta2, double(count_));
    const RealVector m_hat = m_ / bc1;
    const RealVector v_hat = v_ / bc2;
    hp.raw -= spec_.lr * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + spec_.eps).matrix());
  }

 private:
  OuterOptSpec spec_;
  RealVector m_, v_;
  long count_ = 0;
};

/// Applies one outer update in raw space; skips (and reports false) on a
/// non-finite hypergradient.
inline bool outer_update(HyperParams& hp, const RealVector& hypergrad, OuterOptimizer& opt) {
  if (!hypergrad.allFinite()) return false;
  opt.apply(hp, hypergrad);
  return true;
}

// --- batch streams -----------------------------------------------------------

/// Deterministic position-addressable batch source: batch(t) must depend only
/// on t (and construction parameters), so playout restores replay exactly.
class BatchStream {
 public:
  virtual ~BatchStream() = default;
  virtual Batch batch(long step) const = 0;
};

class FullBatchStream final : public BatchStream {
 public:
  explicit FullBatchStream(const Dataset& ds) : batch_(full_batch(ds)) {}
  explicit FullBatchStream(Batch b) : batch_(std::move(b)) {}
  Batch batch(long) const override { return batch_; }

 private:
  Batch batch_;
};

/// Seeded shuffle per epoch; batch t is slice (t mod bpe) of epoch t / bpe.
class ShuffledBatchStream final : public BatchStream {
 public:
  ShuffledBatchStream(const Dataset& ds, int batch_size, std::uint64_t seed)
      : data_(&ds), batch_size_(batch_size), seed_(seed) {
    if (batch_size < 1 || batch_size > ds.size()) {
      throw std::invalid_argument("ShuffledBatchStream: bad batch size " +
                                  std::to_string(batch_size));
    }
    batches_per_epoch_ = ds.size() / batch_size;
  }

  Batch batch(long step) const override {
    const long epoch = step / batches_per_epoch_;
    const long slot = step % batches_per_epoch_;
    if (epoch != cached_epoch_) {
      cached_perm_.resize(static_cast<std::size_t>(data_->size()));
      std::iota(cached_perm_.begin(), cached_perm_.end(), 0);
      std::mt19937_64 rng(seed_ ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(epoch + 1)));
      std::shuffle(cached_perm_.begin(), cached_perm_.end(), rng);
      cached_epoch_ = epoch;
    }
    Batch b;
    b.data = data_;
    const auto base = static_cast<std::size_t>(slot) * static_cast<std::size_t>(batch_size_);
    b.indices.assign(cached_perm_.begin() + static_cast<std::ptrdiff_t>(base),
                     cached_perm_.begin() + static_cast<std::ptrdiff_t>(base + batch_size_));
    return b;
  }

 private:
  const Dataset* data_;
  int batch_size_;
  std::uint64_t seed_;
  long batches_per_epoch_;
  mutable long cached_epoch_ = -1;
  mutable std::vector<int> cached_perm_;
};

// --- schedule ----------------------------------------------------------------

struct Schedule {
  long total_steps = 0;   // T
  long tau = 0;           // inner steps per outer step
  long sigma = 0;         // trailing hypergradients fed to DMD
  long delay_m = 10;      // Hankel delay
  OuterOptSpec outer;
  bool reset_tangent_each_interval = false;
  double unit_circle_tol = 0.05;
  double divergence_tol = 0.05;
  double rank_rtol = 1e-10;
  long inner_log_stride = 10;
  int diagnostics_horizon = 100;

  long outer_steps() const { return tau > 0 ? total_steps / tau : 0; }

  void validate() const {
    if (total_steps < 1 || tau < 1) throw std::invalid_argument("Schedule: need T >= 1, tau >= 1");
    if (total_steps % tau != 0) {
      throw std::invalid_argument("Schedule: tau (" + std::to_string(tau) +
                                  ") must divide T (" + std::to_string(total_steps) + ")");
    }
    if (sigma < delay_m + 1 || sigma > tau) {
      throw std::invalid_argument("Schedule: need delay + 1 <= sigma <= tau, got sigma " +
                                  std::to_string(sigma) + ", delay " + std::to_string(delay_m) +
                                  ", tau " + std::to_string(tau));
    }
  }
};

// --- run engine ----------------------------------------------------------------

struct RunInputs {
  const InnerModel* model = nullptr;
  const BatchStream* stream = nullptr;
  Batch val_set;                 // full hold-out set, used for every h_t
  Batch test_set;                // optional; empty means "no test metrics"
  const TangentOptimizer* optimizer_prototype = nullptr;
  HyperParams hp0;
  std::uint64_t init_seed = 0;
};

namespace detail {

struct Checkpoint {
  RealVector theta;
  TangentState z;
  std::unique_ptr<TangentOptimizer> optimizer;
};

inline std::uint64_t state_hash(const RealVector& theta, const TangentState& z,
                                const TangentOptimizer& opt, long step) {
  std::string bytes;
  bytes.append(reinterpret_cast<const char*>(theta.data()),
               sizeof(double) * static_cast<std::size_t>(theta.size()));
  bytes.append(reinterpret_cast<const char*>(z.z_theta.data()),
               sizeof(double) * static_cast<std::size_t>(z.z_theta.size()));
  for (const RealMatrix& b : z.z_buffers) {
    bytes.append(reinterpret_cast<const char*>(b.data()),
                 sizeof(double) * static_cast<std::size_t>(b.size()));
  }
  opt.append_state_bytes(bytes);
  bytes.append(reinterpret_cast<const char*>(&step), sizeof(step));
  return fnv1a(bytes);
}

inline void assert_transformed_ranges(const HyperParams& hp) {
  const TransformedValues tv = transform(hp);
  for (int i = 0; i < hp.size(); ++i) {
    if (hp.transforms[static_cast<std::size_t>(i)] == Transform::Sigmoid) {
      const double v = tv.values(i);
      if (!(v > 0.0 && v < 1.0)) {
        throw std::logic_error("hyperparameter '" + hp.names[static_cast<std::size_t>(i)] +
                               "' left (0,1): " + std::to_string(v));
      }
    }
  }
}

}  // namespace detail

/// Shared engine behind the per-strategy entry points below.
inline RunLog run_strategy(Strategy strategy, const Schedule& schedule, const RunInputs& in) {
  schedule.validate();
  if (in.model == nullptr || in.stream == nullptr || in.optimizer_prototype == nullptr) {
    throw std::invalid_argument("run_strategy: missing model, stream, or optimizer");
  }
  const InnerModel& model = *in.model;
  const BatchStream& stream = *in.stream;
  const bool wants_hypergrads = strategy != Strategy::None;
  const auto run_t0 = std::chrono::steady_clock::now();

  RunLog log;
  log.hyper_names = in.hp0.names;

  HyperParams hp = in.hp0;
  hp.validate();
  const int q = hp.size();

  RealVector theta = model.init_params(in.init_seed);
  std::unique_ptr<TangentOptimizer> optimizer = in.optimizer_prototype->clone();
  optimizer->reset(theta.size());
  TangentState z;
  z.reset(theta.size(), q, optimizer->buffer_count());
  OuterOptimizer outer_opt(schedule.outer);
  outer_opt.reset(q);

  // Restart reference mode: S independent trainings of T steps each.
  if (strategy == Strategy::GlobalRestart) {
    for (long s = 1; s <= schedule.outer_steps(); ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      theta = model.init_params(in.init_seed);
      optimizer = in.optimizer_prototype->clone();
      optimizer->reset(theta.size());
      z.reset(theta.size(), q, optimizer->buffer_count());
      for (long t = 1; t <= schedule.total_steps; ++t) {
        optimizer->step(theta, z, hp, stream.batch(t - 1), model, t);
      }
      OuterRecord rec;
      rec.outer_step = s;
      rec.global_step = schedule.total_steps;
      rec.source_tag = "global-restart";
      rec.phi_raw_before = hp.raw;
      rec.hypergrad = local_hypergradient(theta, z, model, in.val_set);
      rec.update_skipped = !outer_update(hp, rec.hypergrad, outer_opt);
      detail::assert_transformed_ranges(hp);
      rec.phi_raw_after = hp.raw;
      rec.phi_value_after = transform(hp).values;
      rec.val_loss = model.val_loss(theta, in.val_set);
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count();
      log.outer.push_back(std::move(rec));
    }
  } else {
    long global_step = 0;
    const long outer_count = wants_hypergrads ? schedule.outer_steps() : 1;
    const long interval = wants_hypergrads ? schedule.tau : schedule.total_steps;

    for (long s = 1; s <= outer_count; ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      if (schedule.reset_tangent_each_interval) {
        z.reset(theta.size(), q, optimizer->buffer_count());
      }
      HypergradTrajectory traj;
      traj.dim_q = q;

      for (long t = 1; t <= interval; ++t) {
        ++global_step;
        const Batch batch = stream.batch(global_step - 1);
        optimizer->step(theta, z, hp, batch, model, global_step);
        if (wants_hypergrads) {
          traj.push(local_hypergradient(theta, z, model, in.val_set));
        }
        if (global_step % schedule.inner_log_stride == 0 || global_step == schedule.total_steps) {
          InnerRecord row;
          row.step = global_step;
          row.train_loss = model.train_loss(theta, transform(hp).values, batch);
          row.val_loss = model.val_loss(theta, in.val_set);
          log.inner.push_back(row);
        }
      }

      if (!wants_hypergrads) break;

      OuterRecord rec;
      rec.outer_step = s;
      rec.global_step = global_step;
      rec.phi_raw_before = hp.raw;
      bool apply = true;

      switch (strategy) {
        case Strategy::Local: {
          rec.source_tag = "local";
          rec.hypergrad = traj.steps.back();
          break;
        }
        case Strategy::GlobalGreedy: {
          detail::Checkpoint ckpt{theta, z, optimizer->clone()};
          const std::uint64_t before = detail::state_hash(theta, z, *optimizer, global_step);
          try {
            for (long t = global_step + 1; t <= schedule.total_steps; ++t) {
              optimizer->step(theta, z, hp, stream.batch(t - 1), model, t);
            }
            rec.source_tag = "global-playout";
            rec.hypergrad = local_hypergradient(theta, z, model, in.val_set);
          } catch (const TrainingDiverged&) {
            rec.source_tag = "fallback-local";
            rec.hypergrad = traj.steps.back();
            apply = false;
            rec.update_skipped = true;
          }
          theta = ckpt.theta;
          z = std::move(ckpt.z);
          optimizer = std::move(ckpt.optimizer);
          const std::uint64_t after = detail::state_hash(theta, z, *optimizer, global_step);
          if (before != after) {
            throw std::logic_error("playout restore differs from checkpoint at outer step " +
                                   std::to_string(s));
          }
          break;
        }
        case Strategy::Glocal: {
          HypergradTrajectory window = traj.tail(static_cast<std::size_t>(schedule.sigma));
          SnapshotPair pair = hankel_embed(window, static_cast<int>(schedule.delay_m));
          if (!hankel_shift_structure_ok(pair, q)) {
            throw std::logic_error("hankel embedding lost its shift structure");
          }
          bool degenerate = false;
          KoopmanModel dmd_model;
          try {
            dmd_model = fit_dmd(pair, q, schedule.rank_rtol);
            dmd_model = fit_amplitudes(dmd_model, pair.xp.col(pair.xp.cols() - 1).eval());
          } catch (const std::invalid_argument&) {
            degenerate = true;  // e.g. an identically-zero window
          }
          if (degenerate) {
            rec.source_tag = "fallback-local";
            rec.hypergrad = traj.steps.back();
            break;
          }
          SteadyStateEstimate est =
              steady_state(dmd_model, schedule.unit_circle_tol, schedule.divergence_tol);
          SpectrumDiagnostics diag =
              spectrum_diagnostics(dmd_model, window, schedule.diagnostics_horizon);
          rec.spectral_radius = dmd_model.spectral_radius;
          rec.kept_modes = est.kept_mode_count;
          rec.e_tau_norm = diag.one_step_residual;
          rec.discarded_energy = est.discarded_energy;
          for (int j = 0; j < dmd_model.mode_count(); ++j) {
            if (std::abs(dmd_model.eigenvalues(j) - Complex(1.0, 0.0)) < schedule.unit_circle_tol)
              ++rec.near_one_modes;
          }
          log.spectra.emplace_back(s, dmd_model);
          if (log.mode_magnitudes.size() == 0) log.mode_magnitudes = diag.mode_magnitudes;
          if (est.diverging || est.kept_mode_count == 0) {
            rec.source_tag = "fallback-local";
            rec.hypergrad = traj.steps.back();
          } else {
            rec.source_tag = "glocal";
            rec.hypergrad = est.value;
          }
          break;
        }
        default:
          break;
      }

      if (apply) {
        const bool applied = outer_update(hp, rec.hypergrad, outer_opt);
        rec.update_skipped = !applied;
      }
      detail::assert_transformed_ranges(hp);
      rec.phi_raw_after = hp.raw;
      rec.phi_value_after = transform(hp).values;
      rec.val_loss = model.val_loss(theta, in.val_set);
      rec.wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      log.outer.push_back(std::move(rec));
    }
  }

  log.final_val_loss = model.val_loss(theta, in.val_set);
  log.final_train_loss = model.train_loss(theta, transform(hp).values,
                                          in.stream->batch(schedule.total_steps - 1));
  log.final_accuracy = in.test_set.data != nullptr ? model.accuracy(theta, in.test_set)
                                                   : std::numeric_limits<double>::quiet_NaN();
  log.final_theta_hash = hash_vector(theta);
  log.final_theta = theta;
  log.final_phi_raw = hp.raw;
  log.total_wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - run_t0).count();
  return log;
}

inline RunLog run_local(const Schedule& s, const RunInputs& in) {
  return run_strategy(Strategy::Local, s, in);
}
inline RunLog run_global_greedy(const Schedule& s, const RunInputs& in) {
  return run_strategy(Strategy::GlobalGreedy, s, in);
}
inline RunLog run_glocal(const Schedule& s, const RunInputs& in) {
  return run_strategy(Strategy::Glocal, s, in);
}
inline RunLog run_without_hpo(const Schedule& s, const RunInputs& in) {
  return run_strategy(Strategy::None, s, in);
}

}  // namespace koopgrad
