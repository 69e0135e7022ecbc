// SPDX-License-Identifier: Apache-2.0
//
// Run records and their CSV/JSONL serialization. Rows are keyed by logical
// step counters, never wall clock; wall time appears only in the dedicated
// wall_ms column so logs stay byte-comparable across replays.
#pragma once

#include <koopgrad/dmd.hpp>
#include <koopgrad/numerics.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace koopgrad {

inline constexpr const char* kLogSchemaVersion = "1";

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

struct InnerRecord {
  long step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct OuterRecord {
  long outer_step = 0;      // s, 1-based
  long global_step = 0;     // inner step at which phi was updated
  std::string source_tag;   // local | global-playout | glocal | fallback-local
  bool update_skipped = false;
  RealVector phi_raw_before;
  RealVector phi_raw_after;
  RealVector phi_value_after;  // transformed values
  RealVector hypergrad;        // the applied (or skipped) estimate
  double val_loss = 0.0;
  double spectral_radius = 0.0;
  int kept_modes = 0;
  int near_one_modes = 0;      // |lambda - 1| < unit_circle_tol, logged not asserted
  double e_tau_norm = 0.0;
  double discarded_energy = 0.0;
  double wall_ms = 0.0;
};

struct RunLog {
  std::vector<std::string> hyper_names;
  std::vector<InnerRecord> inner;
  std::vector<OuterRecord> outer;
  std::vector<std::pair<long, KoopmanModel>> spectra;  // (outer_step, fitted model)
  RealMatrix mode_magnitudes;  // first fitted interval, (horizon+1) x modes
  double final_val_loss = 0.0;
  double final_train_loss = 0.0;
  double final_accuracy = 0.0;  // NaN when not applicable
  double total_wall_ms = 0.0;
  std::uint64_t final_theta_hash = 0;
  RealVector final_theta;
  RealVector final_phi_raw;
};

// --- hashing ---------------------------------------------------------------

inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 1469598103934665603ull) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t seed = 1469598103934665603ull) {
  return fnv1a(s.data(), s.size(), seed);
}

inline std::uint64_t hash_vector(const RealVector& v, std::uint64_t seed = 1469598103934665603ull) {
  return fnv1a(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()), seed);
}

inline std::uint64_t hash_matrix(const RealMatrix& m, std::uint64_t seed = 1469598103934665603ull) {
  return fnv1a(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), seed);
}

// --- serialization ----------------------------------------------------------

inline void write_inner_csv(std::ostream& out, const RunLog& log) {
  out << "step,train_loss,val_loss\n";
  for (const InnerRecord& r : log.inner) {
    out << r.step << ',' << detail::fmt_double(r.train_loss) << ','
        << detail::fmt_double(r.val_loss) << '\n';
  }
}

inline void write_inner_jsonl(std::ostream& out, const RunLog& log) {
  for (const InnerRecord& r : log.inner) {
    out << "{\"step\":" << r.step << ",\"train_loss\":" << detail::fmt_double(r.train_loss)
        << ",\"val_loss\":" << detail::fmt_double(r.val_loss) << "}\n";
  }
}

inline void write_outer_csv(std::ostream& out, const RunLog& log) {
  out << "outer_step,global_step,source_tag,update_skipped";
  for (const std::string& n : log.hyper_names) out << ",phi_raw_" << n;
  for (const std::string& n : log.hyper_names) out << ",phi_value_" << n;
  for (const std::string& n : log.hyper_names) out << ",hypergrad_" << n;
  out << ",val_loss,spectral_radius,kept_modes,near_one_modes,e_tau_norm,discarded_energy,"
         "wall_ms\n";
  for (const OuterRecord& r : log.outer) {
    out << r.outer_step << ',' << r.global_step << ',' << r.source_tag << ','
        << (r.update_skipped ? 1 : 0);
    for (Eigen::Index i = 0; i < r.phi_raw_after.size(); ++i)
      out << ',' << detail::fmt_double(r.phi_raw_after(i));
    for (Eigen::Index i = 0; i < r.phi_value_after.size(); ++i)
      out << ',' << detail::fmt_double(r.phi_value_after(i));
    for (Eigen::Index i = 0; i < r.hypergrad.size(); ++i)
      out << ',' << detail::fmt_double(r.hypergrad(i));
    out << ',' << detail::fmt_double(r.val_loss) << ',' << detail::fmt_double(r.spectral_radius)
        << ',' << r.kept_modes << ',' << r.near_one_modes << ','
        << detail::fmt_double(r.e_tau_norm) << ',' << detail::fmt_double(r.discarded_energy)
        << ',' << detail::fmt_double(r.wall_ms) << '\n';
  }
}

inline void write_outer_jsonl(std::ostream& out, const RunLog& log) {
  for (const OuterRecord& r : log.outer) {
    out << "{\"outer_step\":" << r.outer_step << ",\"global_step\":" << r.global_step
        << ",\"source_tag\":\"" << r.source_tag << "\",\"update_skipped\":"
        << (r.update_skipped ? "true" : "false");
    auto emit_vec = [&](const char* key, const RealVector& v) {
      out << ",\"" << key << "\":[";
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out << ',';
        out << detail::fmt_double(v(i));
      }
      out << ']';
    };
    emit_vec("phi_raw", r.phi_raw_after);
    emit_vec("phi_value", r.phi_value_after);
    emit_vec("hypergrad", r.hypergrad);
    out << ",\"val_loss\":" << detail::fmt_double(r.val_loss)
        << ",\"spectral_radius\":" << detail::fmt_double(r.spectral_radius)
        << ",\"kept_modes\":" << r.kept_modes << ",\"near_one_modes\":" << r.near_one_modes
        << ",\"e_tau_norm\":" << detail::fmt_double(r.e_tau_norm)
        << ",\"discarded_energy\":" << detail::fmt_double(r.discarded_energy)
        << ",\"wall_ms\":" << detail::fmt_double(r.wall_ms) << "}\n";
  }
}

inline void write_mode_magnitudes_csv(std::ostream& out, const RealMatrix& magnitudes) {
  out << "t";
  for (Eigen::Index j = 0; j < magnitudes.cols(); ++j) out << ",mode_" << j;
  out << '\n';
  for (Eigen::Index t = 0; t < magnitudes.rows(); ++t) {
    out << t;
    for (Eigen::Index j = 0; j < magnitudes.cols(); ++j)
      out << ',' << detail::fmt_double(magnitudes(t, j));
    out << '\n';
  }
}

}  // namespace koopgrad
