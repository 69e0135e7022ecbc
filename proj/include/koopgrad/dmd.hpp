// SPDX-License-Identifier: Apache-2.0
//
// Koopman-operator approximation of a hypergradient trajectory: exact DMD
// with optional Hankel delay embedding, spectral mode decomposition, and the
// steady-state extraction that yields the end-of-training hypergradient
// estimate.
#pragma once

#include <koopgrad/numerics.hpp>

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace koopgrad {

/// Ordered local hypergradients h_t collected within one outer interval.
struct HypergradTrajectory {
  int dim_q = 0;
  std::vector<RealVector> steps;  // each of length dim_q, time-ordered

  void push(const RealVector& h) {
    if (h.size() != dim_q) {
      throw std::invalid_argument("HypergradTrajectory: vector length " +
                                  std::to_string(h.size()) + " != dim_q " +
                                  std::to_string(dim_q));
    }
    if (!h.allFinite()) throw std::invalid_argument("HypergradTrajectory: non-finite entry");
    steps.push_back(h);
  }

  /// Trajectory restricted to the trailing `count` steps.
  HypergradTrajectory tail(std::size_t count) const {
    HypergradTrajectory out;
    out.dim_q = dim_q;
    std::size_t start = steps.size() > count ? steps.size() - count : 0;
    out.steps.assign(steps.begin() + static_cast<std::ptrdiff_t>(start), steps.end());
    return out;
  }
};

struct SnapshotPair {
  RealMatrix x;   // columns are delay-stacked snapshots g_t, mq x (sigma - m)
  RealMatrix xp;  // columns are g_{t+1} for the same t
};

/// Stacks m consecutive hypergradients into lifted snapshots
/// g_t = [h_t; h_{t+1}; ...; h_{t+m-1}] and returns the shifted pair (X, X').
inline SnapshotPair hankel_embed(const HypergradTrajectory& traj, int delay_m) {
  const auto sigma = static_cast<int>(traj.steps.size());
  const int q = traj.dim_q;
  if (delay_m < 1) throw std::invalid_argument("hankel_embed: delay must be >= 1");
  if (sigma < delay_m + 1) {
    throw std::invalid_argument("hankel_embed: need at least " + std::to_string(delay_m + 1) +
                                " snapshots for delay " + std::to_string(delay_m) + ", got " +
                                std::to_string(sigma));
  }
  const int cols = sigma - delay_m;
  SnapshotPair pair;
  pair.x.resize(static_cast<Eigen::Index>(delay_m) * q, cols);
  pair.xp.resizeLike(pair.x);
  for (int t = 0; t < cols; ++t) {
    for (int r = 0; r < delay_m; ++r) {
      pair.x.block(static_cast<Eigen::Index>(r) * q, t, q, 1) = traj.steps[t + r];
      pair.xp.block(static_cast<Eigen::Index>(r) * q, t, q, 1) = traj.steps[t + r + 1];
    }
  }
  return pair;
}

/// Delay-embedding consistency: block r of X's column t must equal block r-1
/// of column t+1 (and X' must be X shifted by one step).
inline bool hankel_shift_structure_ok(const SnapshotPair& pair, int dim_q) {
  const Eigen::Index q = dim_q;
  if (pair.x.rows() != pair.xp.rows() || pair.x.cols() != pair.xp.cols()) return false;
  if (q <= 0 || pair.x.rows() % q != 0) return false;
  const Eigen::Index blocks = pair.x.rows() / q;
  for (Eigen::Index t = 0; t + 1 < pair.x.cols(); ++t) {
    for (Eigen::Index r = 1; r < blocks; ++r) {
      if (pair.x.block(r * q, t, q, 1) != pair.x.block((r - 1) * q, t + 1, q, 1)) return false;
    }
    if (pair.xp.col(t) != pair.x.col(t + 1)) return false;
  }
  return true;
}

/// Finite-dimensional Koopman approximation fitted by exact DMD.
struct KoopmanModel {
  int delay_m = 1;
  int dim_q = 0;
  ComplexVector eigenvalues;  // lambda_j of the reduced operator
  ComplexMatrix modes;        // lifted modes u_j as unit-norm columns (mq x r)
  ComplexVector amplitudes;   // b_j, empty until fit_amplitudes
  double fit_residual = 0.0;  // ||X' - U K U^T X||_F, the one-step DMD objective
  double spectral_radius = 0.0;
  bool has_amplitudes = false;

  // Projection data kept for prediction residuals and diagnostics.
  RealMatrix proj_basis;  // U, mq x r
  RealMatrix reduced_op;  // K reduced to the POD basis, r x r

  int mode_count() const { return static_cast<int>(eigenvalues.size()); }
  Eigen::Index lifted_dim() const { return static_cast<Eigen::Index>(delay_m) * dim_q; }
};

/// Exact DMD: thin SVD of X truncated at rank_rtol, reduced operator
/// K = U^T X' V S^{-1}, eigendecomposition, and lifted unit-norm modes U w_j.
/// Amplitudes are left unset; fit them against an anchor snapshot separately.
inline KoopmanModel fit_dmd(const SnapshotPair& pair, int dim_q, double rank_rtol = 1e-10) {
  const RealMatrix& x = pair.x;
  const RealMatrix& xp = pair.xp;
  if (x.rows() != xp.rows() || x.cols() != xp.cols()) {
    throw std::invalid_argument("fit_dmd: snapshot matrices differ in shape");
  }
  if (x.cols() < 1) throw std::invalid_argument("fit_dmd: need at least one snapshot column");
  if (dim_q < 1 || x.rows() % dim_q != 0) {
    throw std::invalid_argument("fit_dmd: lifted dimension not a multiple of dim_q");
  }
  if (x.norm() == 0.0) throw std::invalid_argument("fit_dmd: degenerate trajectory (all-zero X)");

  ThinSvd svd = thin_svd(x);
  const double cutoff = rank_rtol * svd.singular_values(0);
  int rank = 0;
  while (rank < svd.singular_values.size() && svd.singular_values(rank) > cutoff) ++rank;
  if (rank == 0) throw std::invalid_argument("fit_dmd: degenerate trajectory (zero numerical rank)");

  KoopmanModel model;
  model.delay_m = static_cast<int>(x.rows()) / dim_q;
  model.dim_q = dim_q;
  model.proj_basis = svd.u.leftCols(rank);
  RealMatrix v = svd.v.leftCols(rank);
  RealVector sinv = svd.singular_values.head(rank).cwiseInverse();
  model.reduced_op = model.proj_basis.transpose() * xp * v * sinv.asDiagonal();

  ComplexEigenSystem eig = eig_nonsymmetric(model.reduced_op);
  model.eigenvalues = eig.eigenvalues;
  model.modes = model.proj_basis.cast<Complex>() * eig.eigenvectors;
  for (Eigen::Index j = 0; j < model.modes.cols(); ++j) {
    double norm = model.modes.col(j).norm();
    if (norm > 0.0) model.modes.col(j) /= norm;
  }
  model.spectral_radius = model.eigenvalues.cwiseAbs().maxCoeff();
  model.fit_residual =
      (xp - model.proj_basis * (model.reduced_op * (model.proj_basis.transpose() * x))).norm();
  return model;
}

inline KoopmanModel fit_dmd(const RealMatrix& x, const RealMatrix& xp, int dim_q,
                            double rank_rtol = 1e-10) {
  return fit_dmd(SnapshotPair{x, xp}, dim_q, rank_rtol);
}

/// Least-squares amplitudes b = argmin ||[u_1 ... u_r] b - anchor||_2.
inline KoopmanModel fit_amplitudes(KoopmanModel model, const RealVector& anchor) {
  if (anchor.size() != model.lifted_dim()) {
    throw std::invalid_argument("fit_amplitudes: anchor length " + std::to_string(anchor.size()) +
                                " != lifted dimension " + std::to_string(model.lifted_dim()));
  }
  model.amplitudes = least_squares_solve(model.modes, anchor.cast<Complex>().eval());
  model.has_amplitudes = true;
  return model;
}

/// Re(sum_j b_j lambda_j^steps u_j), the spectral forecast of the lifted state
/// `steps` steps past the amplitude anchor.
inline RealVector predict(const KoopmanModel& model, long steps) {
  if (!model.has_amplitudes) throw std::logic_error("predict: amplitudes not fitted");
  ComplexVector acc = ComplexVector::Zero(model.lifted_dim());
  for (int j = 0; j < model.mode_count(); ++j) {
    Complex factor = model.amplitudes(j) * std::pow(model.eigenvalues(j), double(steps));
    acc += factor * model.modes.col(j);
  }
  return acc.real();
}

/// Steady-state (t -> infinity) prediction restricted to the leading q-block
/// of the lifted vector, i.e. the undelayed coordinate.
struct SteadyStateEstimate {
  RealVector value;            // length dim_q
  int kept_mode_count = 0;     // modes with lambda within unit_circle_tol of 1
  double discarded_energy = 0.0;  // first-block 2-norm of the excluded-mode sum at the anchor
  bool diverging = false;      // spectral radius exceeded 1 + divergence_tol
  double imag_residue = 0.0;   // |Im| left after summing kept modes; fit-error gauge
};

inline SteadyStateEstimate steady_state(const KoopmanModel& model, double unit_circle_tol = 0.05,
                                        double divergence_tol = 0.05) {
  if (!model.has_amplitudes) throw std::logic_error("steady_state: amplitudes not fitted");
  const int q = model.dim_q;
  SteadyStateEstimate est;
  est.diverging = model.spectral_radius > 1.0 + divergence_tol;
  ComplexVector kept_sum = ComplexVector::Zero(q);
  ComplexVector excluded_sum = ComplexVector::Zero(q);
  for (int j = 0; j < model.mode_count(); ++j) {
    ComplexVector head = model.amplitudes(j) * model.modes.col(j).head(q);
    if (std::abs(model.eigenvalues(j) - Complex(1.0, 0.0)) <= unit_circle_tol) {
      kept_sum += head;
      ++est.kept_mode_count;
    } else {
      excluded_sum += head;
    }
  }
  est.value = kept_sum.real();
  est.imag_residue = kept_sum.imag().norm();
  est.discarded_energy = excluded_sum.norm();
  return est;
}

/// Diagnostics mirroring the estimation-error bound: one-step residual at the
/// last snapshot, full spectrum, per-mode magnitude decay, and the tail mass
/// of the strictly decaying modes.
struct SpectrumDiagnostics {
  double one_step_residual = 0.0;  // ||e_tau||_2 on the undelayed block
  ComplexVector eigenvalues;
  RealVector moduli;
  RealVector amplitude_moduli;
  RealMatrix mode_magnitudes;      // (horizon+1) x r, entry (t, j) = |b_j| |lambda_j|^t ||u_j||
  double decaying_tail_bound = 0.0;  // sum_{|lambda|<1} |b_j| |lambda_j|^sigma ||u_j||
};

inline SpectrumDiagnostics spectrum_diagnostics(const KoopmanModel& model,
                                                const HypergradTrajectory& traj,
                                                int horizon = 100) {
  if (!model.has_amplitudes) throw std::logic_error("spectrum_diagnostics: amplitudes not fitted");
  SpectrumDiagnostics diag;
  const int q = model.dim_q;
  const auto sigma = static_cast<double>(traj.steps.size());

  SnapshotPair pair = hankel_embed(traj, model.delay_m);
  const Eigen::Index last = pair.x.cols() - 1;
  RealVector predicted =
      model.proj_basis * (model.reduced_op * (model.proj_basis.transpose() * pair.x.col(last)));
  diag.one_step_residual = (pair.xp.col(last).head(q) - predicted.head(q)).norm();

  const int r = model.mode_count();
  diag.eigenvalues = model.eigenvalues;
  diag.moduli = model.eigenvalues.cwiseAbs();
  diag.amplitude_moduli = model.amplitudes.cwiseAbs();
  diag.mode_magnitudes.resize(horizon + 1, r);
  for (int j = 0; j < r; ++j) {
    const double mode_norm = model.modes.col(j).norm();
    const double amp = diag.amplitude_moduli(j);
    for (int t = 0; t <= horizon; ++t) {
      diag.mode_magnitudes(t, j) = amp * std::pow(diag.moduli(j), double(t)) * mode_norm;
    }
    if (diag.moduli(j) < 1.0) {
      diag.decaying_tail_bound += amp * std::pow(diag.moduli(j), sigma) * mode_norm;
    }
  }
  return diag;
}

/// CSV columns: mode_index, re_lambda, im_lambda, modulus, amplitude_modulus, kept_flag.
inline void write_spectrum_csv(std::ostream& out, const KoopmanModel& model,
                               double unit_circle_tol = 0.05) {
  out << "mode_index,re_lambda,im_lambda,modulus,amplitude_modulus,kept_flag\n";
  char buf[160];
  for (int j = 0; j < model.mode_count(); ++j) {
    const Complex lambda = model.eigenvalues(j);
    const double amp = model.has_amplitudes ? std::abs(model.amplitudes(j)) : 0.0;
    const int kept = std::abs(lambda - Complex(1.0, 0.0)) <= unit_circle_tol ? 1 : 0;
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%d\n", j, lambda.real(),
                  lambda.imag(), std::abs(lambda), amp, kept);
    out << buf;
  }
}

}  // namespace koopgrad
