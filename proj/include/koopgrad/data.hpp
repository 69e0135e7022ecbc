// SPDX-License-Identifier: Apache-2.0
//
// Dataset containers, IDX (MNIST-family) ingestion, hold-out splitting,
// class-imbalanced subsampling, and synthetic task generators.
#pragma once

#include <koopgrad/numerics.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace koopgrad {

struct Dataset {
  RealMatrix inputs;        // n x d, finite entries
  std::vector<int> labels;  // length n, values in [0, class_count)
  int class_count = 0;

  int size() const { return static_cast<int>(inputs.rows()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }

  void validate() const {
    if (size() < 1) throw std::invalid_argument("Dataset: empty");
    if (labels.size() != static_cast<std::size_t>(size()))
      throw std::invalid_argument("Dataset: label count mismatch");
    if (!inputs.allFinite()) throw std::invalid_argument("Dataset: non-finite inputs");
    for (int y : labels) {
      if (y < 0 || y >= class_count)
        throw std::invalid_argument("Dataset: label " + std::to_string(y) + " out of range");
    }
  }

  Dataset select(const std::vector<int>& idx) const {
    Dataset out;
    out.class_count = class_count;
    out.inputs.resize(static_cast<Eigen::Index>(idx.size()), inputs.cols());
    out.labels.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(idx[i]);
      out.labels.push_back(labels[static_cast<std::size_t>(idx[i])]);
    }
    return out;
  }
};

/// A view into a dataset: the row indices an inner step consumes.
struct Batch {
  const Dataset* data = nullptr;
  std::vector<int> indices;

  int size() const { return static_cast<int>(indices.size()); }
};

inline Batch full_batch(const Dataset& ds) {
  Batch b;
  b.data = &ds;
  b.indices.resize(static_cast<std::size_t>(ds.size()));
  std::iota(b.indices.begin(), b.indices.end(), 0);
  return b;
}

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw std::runtime_error("idx: truncated file: " + path);
  return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
         (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

inline std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

}  // namespace detail

/// Reads the big-endian IDX image/label pair (magics 0x00000803 / 0x00000801),
/// scaling pixels to [0, 1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("dataset not found: " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("dataset not found: " + labels_path);

  const std::uint32_t img_magic = detail::read_be32(img, images_path);
  if (img_magic != 0x00000803u) {
    throw std::runtime_error("idx: bad image magic " + detail::hex32(img_magic) + " in " +
                             images_path);
  }
  const std::uint32_t n_img = detail::read_be32(img, images_path);
  const std::uint32_t rows = detail::read_be32(img, images_path);
  const std::uint32_t cols = detail::read_be32(img, images_path);

  const std::uint32_t lab_magic = detail::read_be32(lab, labels_path);
  if (lab_magic != 0x00000801u) {
    throw std::runtime_error("idx: bad label magic " + detail::hex32(lab_magic) + " in " +
                             labels_path);
  }
  const std::uint32_t n_lab = detail::read_be32(lab, labels_path);
  if (n_img != n_lab) {
    throw std::runtime_error("idx: image count " + std::to_string(n_img) +
                             " != label count " + std::to_string(n_lab));
  }
  if (n_img == 0) throw std::runtime_error("idx: empty dataset in " + images_path);

  const std::size_t d = std::size_t(rows) * cols;
  std::vector<unsigned char> pixel_row(d);
  Dataset ds;
  ds.inputs.resize(n_img, static_cast<Eigen::Index>(d));
  ds.labels.resize(n_img);
  for (std::uint32_t i = 0; i < n_img; ++i) {
    img.read(reinterpret_cast<char*>(pixel_row.data()), static_cast<std::streamsize>(d));
    if (!img) throw std::runtime_error("idx: truncated file: " + images_path);
    for (std::size_t j = 0; j < d; ++j) {
      ds.inputs(i, static_cast<Eigen::Index>(j)) = pixel_row[j] / 255.0;
    }
  }
  int max_label = 0;
  for (std::uint32_t i = 0; i < n_lab; ++i) {
    char byte;
    lab.read(&byte, 1);
    if (!lab) throw std::runtime_error("idx: truncated file: " + labels_path);
    ds.labels[i] = static_cast<unsigned char>(byte);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;
  ds.validate();
  return ds;
}

/// Disjoint, exhaustive, seed-shuffled train/validation split.
inline std::pair<Dataset, Dataset> holdout_split(const Dataset& ds, double val_fraction,
                                                 std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("holdout_split: fraction must lie in (0, 1), got " +
                                std::to_string(val_fraction));
  }
  std::vector<int> idx(static_cast<std::size_t>(ds.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto val_n = static_cast<std::size_t>(std::llround(val_fraction * ds.size()));
  if (val_n == 0 || val_n >= idx.size()) {
    throw std::invalid_argument("holdout_split: fraction leaves an empty side");
  }
  std::vector<int> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(val_n));
  std::vector<int> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(val_n), idx.end());
  return {ds.select(train_idx), ds.select(val_idx)};
}

/// Class c retains floor(N_c * f^(-c/C)) examples, sampled without replacement.
/// `denominator_offset` switches the exponent denominator from C to C-1.
inline Dataset imbalance_subsample(const Dataset& ds, double factor, std::uint64_t seed,
                                   int denominator_offset = 0) {
  if (factor < 1.0) throw std::invalid_argument("imbalance_subsample: factor must be >= 1");
  const int c_count = ds.class_count;
  const double denom = static_cast<double>(c_count - denominator_offset);
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(c_count));
  for (int i = 0; i < ds.size(); ++i)
    by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<int> kept;
  for (int c = 0; c < c_count; ++c) {
    auto& members = by_class[static_cast<std::size_t>(c)];
    const auto keep = static_cast<std::size_t>(
        std::floor(static_cast<double>(members.size()) * std::pow(factor, -double(c) / denom)));
    if (keep == 0) {
      throw std::runtime_error("imbalance_subsample: class " + std::to_string(c) +
                               " emptied; use a smaller factor than " + std::to_string(factor));
    }
    std::shuffle(members.begin(), members.end(), rng);
    kept.insert(kept.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(kept.begin(), kept.end());
  return ds.select(kept);
}

/// Synthetic image-like classification data: per-class prototypes plus noise,
/// squashed into [0, 1]. Deterministic in (n, d, classes, seed).
inline Dataset synthetic_classification(int n, int input_dim, int classes, std::uint64_t seed,
                                        double noise_scale = 1.0) {
  if (n < classes || input_dim < 1 || classes < 2) {
    throw std::invalid_argument("synthetic_classification: invalid sizes");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  RealMatrix prototypes(classes, input_dim);
  for (int c = 0; c < classes; ++c)
    for (int j = 0; j < input_dim; ++j) prototypes(c, j) = gauss(rng);

  Dataset ds;
  ds.class_count = classes;
  ds.inputs.resize(n, input_dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int c = i % classes;  // balanced by construction
    ds.labels[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < input_dim; ++j) {
      const double z = prototypes(c, j) + noise_scale * gauss(rng);
      ds.inputs(i, j) = 1.0 / (1.0 + std::exp(-z));  // pixel-like range
    }
  }
  return ds;
}

}  // namespace koopgrad
