// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <koopgrad/data.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

using namespace koopgrad;

namespace {

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char bytes[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(bytes), 4);
}

struct IdxFixture {
  std::string images;
  std::string labels;
};

IdxFixture write_idx_fixture(const std::vector<std::vector<unsigned char>>& pixel_rows,
                             const std::vector<unsigned char>& label_bytes, std::uint32_t rows,
                             std::uint32_t cols, std::uint32_t image_magic = 0x00000803u,
                             std::uint32_t label_magic = 0x00000801u,
                             const char* tag = "fixture") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "koopgrad_idx";
  fs::create_directories(dir);
  IdxFixture fx{(dir / (std::string(tag) + "-images.idx")).string(),
                (dir / (std::string(tag) + "-labels.idx")).string()};
  {
    std::ofstream img(fx.images, std::ios::binary);
    write_be32(img, image_magic);
    write_be32(img, static_cast<std::uint32_t>(pixel_rows.size()));
    write_be32(img, rows);
    write_be32(img, cols);
    for (const auto& row : pixel_rows)
      img.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size()));
  }
  {
    std::ofstream lab(fx.labels, std::ios::binary);
    write_be32(lab, label_magic);
    write_be32(lab, static_cast<std::uint32_t>(label_bytes.size()));
    lab.write(reinterpret_cast<const char*>(label_bytes.data()),
              static_cast<std::streamsize>(label_bytes.size()));
  }
  return fx;
}

Dataset tiny_labeled(int n, int classes) {
  Dataset ds;
  ds.class_count = classes;
  ds.inputs = RealMatrix::Zero(n, 2);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ds.labels[static_cast<std::size_t>(i)] = i % classes;
    ds.inputs(i, 0) = i;
  }
  return ds;
}

}  // namespace

TEST_CASE("load_idx round-trips a hand-built two-image fixture") {
  std::vector<std::vector<unsigned char>> pixels{{0, 51, 102, 153}, {204, 255, 0, 128}};
  IdxFixture fx = write_idx_fixture(pixels, {3, 7}, 2, 2, 0x803u, 0x801u, "roundtrip");
  Dataset ds = load_idx(fx.images, fx.labels);
  REQUIRE(ds.size() == 2);
  REQUIRE(ds.input_dim() == 4);
  CHECK(ds.labels[0] == 3);
  CHECK(ds.labels[1] == 7);
  CHECK(ds.class_count == 8);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(ds.inputs(i, j) ==
            Catch::Approx(pixels[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] /
                          255.0));
}

TEST_CASE("load_idx reports the offending magic") {
  IdxFixture fx = write_idx_fixture({{1}}, {0}, 1, 1, 0x803u, 0xdeadbeefu, "badmagic");
  CHECK_THROWS_WITH(load_idx(fx.images, fx.labels),
                    Catch::Matchers::ContainsSubstring("0xdeadbeef"));
  IdxFixture fx2 = write_idx_fixture({{1}}, {0}, 1, 1, 0x1234u, 0x801u, "badimg");
  CHECK_THROWS_WITH(load_idx(fx2.images, fx2.labels),
                    Catch::Matchers::ContainsSubstring("0x00001234"));
}

TEST_CASE("load_idx rejects count mismatch and truncation") {
  IdxFixture fx = write_idx_fixture({{1}, {2}}, {0}, 1, 1, 0x803u, 0x801u, "mismatch");
  CHECK_THROWS_WITH(load_idx(fx.images, fx.labels),
                    Catch::Matchers::ContainsSubstring("2") &&
                        Catch::Matchers::ContainsSubstring("1"));

  // truncated image payload: header says 2x2 but only one byte present
  IdxFixture fx2 = write_idx_fixture({{9}}, {0}, 2, 2, 0x803u, 0x801u, "trunc");
  CHECK_THROWS_WITH(load_idx(fx2.images, fx2.labels),
                    Catch::Matchers::ContainsSubstring("truncated"));

  CHECK_THROWS_WITH(load_idx("/nonexistent/images", fx.labels),
                    Catch::Matchers::ContainsSubstring("dataset not found: /nonexistent/images"));
}

TEST_CASE("holdout_split is disjoint, exhaustive, and seeded") {
  Dataset ds = tiny_labeled(100, 5);
  auto [train, val] = holdout_split(ds, 0.1, 42);
  CHECK(train.size() == 90);
  CHECK(val.size() == 10);

  std::set<double> seen;
  for (int i = 0; i < train.size(); ++i) seen.insert(train.inputs(i, 0));
  for (int i = 0; i < val.size(); ++i) {
    CHECK(seen.find(val.inputs(i, 0)) == seen.end());
    seen.insert(val.inputs(i, 0));
  }
  CHECK(seen.size() == 100);

  auto [train2, val2] = holdout_split(ds, 0.1, 42);
  CHECK(train.inputs == train2.inputs);
  CHECK(val.inputs == val2.inputs);
  auto [train3, val3] = holdout_split(ds, 0.1, 43);
  CHECK(train.inputs != train3.inputs);

  CHECK_THROWS_AS(holdout_split(ds, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(holdout_split(ds, 1.0, 1), std::invalid_argument);
}

TEST_CASE("holdout_split sizes at the published 10 percent convention") {
  Dataset ds = tiny_labeled(60000, 10);
  auto [train, val] = holdout_split(ds, 0.1, 7);
  CHECK(val.size() == 6000);
  CHECK(train.size() == 54000);
}

TEST_CASE("imbalance_subsample follows the per-class power law") {
  // 10 classes x 5000 examples, factor 50: class 9 keeps floor(5000 * 50^-0.9) = 147
  Dataset ds = tiny_labeled(50000, 10);
  Dataset sub = imbalance_subsample(ds, 50.0, 11);
  std::vector<int> counts(10, 0);
  for (int y : sub.labels) counts[static_cast<std::size_t>(y)]++;
  CHECK(counts[0] == 5000);  // exponent zero keeps everything
  CHECK(counts[9] == 147);
  for (int c = 0; c < 10; ++c) {
    const int expect = static_cast<int>(std::floor(5000.0 * std::pow(50.0, -c / 10.0)));
    CHECK(counts[static_cast<std::size_t>(c)] == expect);
  }
}

TEST_CASE("imbalance_subsample unit factor keeps the dataset") {
  Dataset ds = tiny_labeled(40, 4);
  Dataset sub = imbalance_subsample(ds, 1.0, 3);
  CHECK(sub.size() == 40);
  std::vector<int> counts(4, 0);
  for (int y : sub.labels) counts[static_cast<std::size_t>(y)]++;
  for (int c = 0; c < 4; ++c) CHECK(counts[static_cast<std::size_t>(c)] == 10);
}

TEST_CASE("imbalance_subsample denominator knob and empty-class error") {
  Dataset ds = tiny_labeled(40, 2);  // 20 per class
  // C-1 convention: class 1 keeps floor(20 * f^-1)
  Dataset sub = imbalance_subsample(ds, 4.0, 5, /*denominator_offset=*/1);
  std::vector<int> counts(2, 0);
  for (int y : sub.labels) counts[static_cast<std::size_t>(y)]++;
  CHECK(counts[0] == 20);
  CHECK(counts[1] == 5);

  CHECK_THROWS_WITH(imbalance_subsample(ds, 1000.0, 5, 1),
                    Catch::Matchers::ContainsSubstring("smaller factor"));
  CHECK_THROWS_AS(imbalance_subsample(ds, 0.5, 5), std::invalid_argument);
}

TEST_CASE("synthetic_classification is deterministic, bounded, and balanced") {
  Dataset a = synthetic_classification(200, 16, 4, 99);
  Dataset b = synthetic_classification(200, 16, 4, 99);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  CHECK(a.inputs.minCoeff() > 0.0);
  CHECK(a.inputs.maxCoeff() < 1.0);
  std::vector<int> counts(4, 0);
  for (int y : a.labels) counts[static_cast<std::size_t>(y)]++;
  for (int c = 0; c < 4; ++c) CHECK(counts[static_cast<std::size_t>(c)] == 50);

  Dataset c = synthetic_classification(200, 16, 4, 100);
  CHECK(a.inputs != c.inputs);
}
