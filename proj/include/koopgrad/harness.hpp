// SPDX-License-Identifier: Apache-2.0
//
// Experiment harness behind the CLI: builds tasks and cells from a RunConfig,
// executes (strategy x seed) cells in a worker pool, persists logs and the
// replay manifest, renders figures, and benchmarks strategies.
#pragma once

#include <koopgrad/config.hpp>
#include <koopgrad/data.hpp>
#include <koopgrad/driver.hpp>
#include <koopgrad/runlog.hpp>
#include <koopgrad/svg.hpp>
#include <koopgrad/tasks.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace koopgrad {

namespace fs = std::filesystem;

/// Forwards every call with a frozen transformed-hyperparameter vector; used
/// by the no-HPO baseline so models that consume phi still work with an empty
/// hyperparameter vector (and zero tangent columns).
class FixedPhiModel final : public InnerModel {
 public:
  FixedPhiModel(const InnerModel& inner, RealVector phi)
      : inner_(&inner), phi_(std::move(phi)), zero_dphi_(RealVector::Zero(phi_.size())) {}

  int param_count() const override { return inner_->param_count(); }
  RealVector init_params(std::uint64_t seed) const override { return inner_->init_params(seed); }
  double train_loss(const RealVector& theta, const RealVector&, const Batch& b) const override {
    return inner_->train_loss(theta, phi_, b);
  }
  RealVector train_grad(const RealVector& theta, const RealVector&, const Batch& b) const override {
    return inner_->train_grad(theta, phi_, b);
  }
  RealVector train_grad_jvp(const RealVector& theta, const RealVector&, const Batch& b,
                            const RealVector& dtheta, const RealVector&) const override {
    return inner_->train_grad_jvp(theta, phi_, b, dtheta, zero_dphi_);
  }
  double val_loss(const RealVector& theta, const Batch& v) const override {
    return inner_->val_loss(theta, v);
  }
  RealVector val_grad(const RealVector& theta, const Batch& v) const override {
    return inner_->val_grad(theta, v);
  }
  double accuracy(const RealVector& theta, const Batch& d) const override {
    return inner_->accuracy(theta, d);
  }

 private:
  const InnerModel* inner_;
  RealVector phi_;
  RealVector zero_dphi_;
};

// --- shared data -------------------------------------------------------------

struct SharedData {
  Dataset train, val, test;
  bool has_data = false;
  bool has_test = false;
};

inline std::string resolve_dataset_path(const std::string& path) {
  if (!path.empty() && path.front() == '/') return path;
  if (const char* root = std::getenv("KOOPGRAD_DATA_ROOT")) {
    return std::string(root) + "/" + path;
  }
  return path;
}

inline SharedData build_shared_data(const RunConfig& cfg) {
  SharedData data;
  if (cfg.dataset_kind == "none") return data;
  data.has_data = true;

  Dataset pool;
  if (cfg.dataset_kind == "idx") {
    pool = load_idx(resolve_dataset_path(cfg.idx_images), resolve_dataset_path(cfg.idx_labels));
    if (cfg.dataset_n > 0 && cfg.dataset_n < pool.size()) {
      std::vector<int> idx(static_cast<std::size_t>(pool.size()));
      std::iota(idx.begin(), idx.end(), 0);
      std::mt19937_64 rng(cfg.dataset_seed);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(cfg.dataset_n));
      pool = pool.select(idx);
    }
  } else {
    pool = synthetic_classification(static_cast<int>(cfg.dataset_n),
                                    static_cast<int>(cfg.input_dim),
                                    static_cast<int>(cfg.classes), cfg.dataset_seed, cfg.noise);
  }

  Dataset rest = pool;
  if (cfg.test_fraction > 0.0) {
    auto [r, t] = holdout_split(pool, cfg.test_fraction, cfg.dataset_seed ^ 0x7e57ull);
    rest = std::move(r);
    data.test = std::move(t);
    data.has_test = true;
  }
  auto [train, val] = holdout_split(rest, cfg.val_fraction, cfg.dataset_seed ^ 0xa117ull);
  data.val = std::move(val);
  if (cfg.dataset_kind == "synthetic-imbalanced") {
    data.train = imbalance_subsample(train, cfg.imbalance_factor, cfg.dataset_seed ^ 0x1417ull,
                                     cfg.imbalance_denominator_offset);
  } else {
    data.train = std::move(train);
  }
  return data;
}

// --- cell construction ---------------------------------------------------------

struct CellSpec {
  Strategy strategy = Strategy::Local;
  std::uint64_t seed = 0;

  std::string dir_name() const { return to_string(strategy) + "-seed" + std::to_string(seed); }
};

struct CellRuntime {
  std::unique_ptr<InnerModel> base_model;
  std::unique_ptr<InnerModel> frozen_model;  // set for the no-HPO baseline
  std::unique_ptr<BatchStream> stream;
  std::unique_ptr<TangentOptimizer> optimizer;
  RunInputs inputs;
  Schedule schedule;
};

namespace harness_detail {

inline KnobBinding bind_knob(const KnobSpec& spec, const HyperParams& hp, const std::string& name,
                             bool freeze) {
  if (!spec.is_hyper) return KnobBinding::constant(spec.value);
  if (freeze) {
    // evaluate the transform at the raw init and pin the knob there
    HyperParams one;
    one.raw = RealVector::Constant(1, spec.value);
    one.transforms = {spec.transform};
    one.names = {name};
    return KnobBinding::constant(transform(one).values(0));
  }
  return KnobBinding::hyper(hp.index_of(name));
}

}  // namespace harness_detail

/// Materializes one (strategy, seed) cell from the parsed config.
inline CellRuntime build_cell(const RunConfig& cfg, const SharedData& data, const CellSpec& cell) {
  CellRuntime rt;
  rt.schedule = cfg.schedule;
  const bool freeze = cell.strategy == Strategy::None;

  // hyperparameter vector: learnable optimizer knobs in declaration order,
  // then the reweighting module parameters (identity transform)
  HyperParams hp;
  std::vector<double> raw;
  const std::vector<std::string> knob_order =
      cfg.inner_kind == "sgd" ? std::vector<std::string>{"lr", "momentum", "wd"}
                              : std::vector<std::string>{"lr", "beta1", "beta2"};
  if (!freeze) {
    for (const std::string& name : knob_order) {
      const KnobSpec& spec = cfg.knobs.at(name);
      if (!spec.is_hyper) continue;
      raw.push_back(spec.value);
      hp.transforms.push_back(spec.transform);
      hp.names.push_back(name);
    }
  }

  ReweightModule reweighter{static_cast<int>(cfg.reweight_hidden), cfg.leaky_slope};
  RealVector mu_init;
  if (cfg.task_kind == "reweight") {
    mu_init = reweighter.init(cell.seed ^ 0x5eedull, cfg.reweight_init_scale);
    if (!freeze) {
      for (int i = 0; i < mu_init.size(); ++i) {
        raw.push_back(mu_init(i));
        hp.transforms.push_back(Transform::Identity);
        hp.names.push_back("mu" + std::to_string(i));
      }
    }
  }
  hp.raw = raw.empty() ? RealVector(0)
                       : RealVector(Eigen::Map<RealVector>(raw.data(),
                                                           static_cast<Eigen::Index>(raw.size())));

  // model
  if (cfg.task_kind == "quadratic") {
    QuadraticTask drawn = make_random_quadratic(static_cast<int>(cfg.quad_dim),
                                                cfg.dataset_seed + cell.seed, cfg.quad_eig_min,
                                                cfg.quad_eig_max);
    // pull the target toward a shrunk optimum so weight decay has signal
    RealVector target = cfg.quad_target_scale * drawn.a().ldlt().solve(drawn.b());
    rt.base_model = std::make_unique<QuadraticTask>(drawn.a(), drawn.b(), std::move(target));
    rt.stream = std::make_unique<FullBatchStream>(Batch{});
  } else {
    std::vector<int> sizes{static_cast<int>(data.train.input_dim())};
    for (int h : cfg.mlp_hidden) sizes.push_back(h);
    sizes.push_back(data.train.class_count);
    MlpClassifier classifier(sizes, 0, cfg.leaky_slope);
    if (cfg.task_kind == "reweight") {
      rt.base_model = std::make_unique<ReweightedClassifier>(std::move(classifier), reweighter);
    } else {
      rt.base_model = std::make_unique<MlpClassifier>(std::move(classifier));
    }
    rt.stream = std::make_unique<ShuffledBatchStream>(data.train,
                                                      static_cast<int>(cfg.batch_size), cell.seed);
    rt.inputs.val_set = full_batch(data.val);
    if (data.has_test) rt.inputs.test_set = full_batch(data.test);
  }

  // the no-HPO baseline freezes phi inside the model and runs with q = 0
  const InnerModel* run_model = rt.base_model.get();
  if (freeze && cfg.task_kind == "reweight") {
    rt.frozen_model = std::make_unique<FixedPhiModel>(*rt.base_model, mu_init);
    run_model = rt.frozen_model.get();
  }

  // inner optimizer
  if (cfg.inner_kind == "sgd") {
    rt.optimizer = std::make_unique<SgdTangentOptimizer>(
        harness_detail::bind_knob(cfg.knobs.at("lr"), hp, "lr", freeze),
        harness_detail::bind_knob(cfg.knobs.at("momentum"), hp, "momentum", freeze),
        harness_detail::bind_knob(cfg.knobs.at("wd"), hp, "wd", freeze));
  } else {
    rt.optimizer = std::make_unique<AdamTangentOptimizer>(
        harness_detail::bind_knob(cfg.knobs.at("lr"), hp, "lr", freeze),
        harness_detail::bind_knob(cfg.knobs.at("beta1"), hp, "beta1", freeze),
        harness_detail::bind_knob(cfg.knobs.at("beta2"), hp, "beta2", freeze));
  }

  rt.inputs.model = run_model;
  rt.inputs.stream = rt.stream.get();
  rt.inputs.optimizer_prototype = rt.optimizer.get();
  rt.inputs.hp0 = std::move(hp);
  rt.inputs.init_seed = cell.seed;
  return rt;
}

// --- persistence ---------------------------------------------------------------

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

inline void persist_cell(const fs::path& dir, const CellSpec& cell, const RunLog& log,
                         double unit_circle_tol) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "inner.csv", std::ios::binary);
    write_inner_csv(out, log);
  }
  {
    std::ofstream out(dir / "inner.jsonl", std::ios::binary);
    write_inner_jsonl(out, log);
  }
  {
    std::ofstream out(dir / "outer.csv", std::ios::binary);
    write_outer_csv(out, log);
  }
  {
    std::ofstream out(dir / "outer.jsonl", std::ios::binary);
    write_outer_jsonl(out, log);
  }
  for (const auto& [s, model] : log.spectra) {
    char name[40];
    std::snprintf(name, sizeof(name), "spectrum_s%04ld.csv", s);
    std::ofstream out(dir / name, std::ios::binary);
    write_spectrum_csv(out, model, unit_circle_tol);
  }
  if (log.mode_magnitudes.size() > 0) {
    std::ofstream out(dir / "mode_magnitudes.csv", std::ios::binary);
    write_mode_magnitudes_csv(out, log.mode_magnitudes);
  }
  std::ostringstream summary;
  char buf[64];
  summary << "{\"strategy\":\"" << to_string(cell.strategy) << "\",\"seed\":" << cell.seed;
  std::snprintf(buf, sizeof(buf), "%.17g", log.final_val_loss);
  summary << ",\"final_val_loss\":" << buf;
  std::snprintf(buf, sizeof(buf), "%.17g", log.final_train_loss);
  summary << ",\"final_train_loss\":" << buf;
  if (std::isfinite(log.final_accuracy)) {
    std::snprintf(buf, sizeof(buf), "%.17g", log.final_accuracy);
    summary << ",\"final_accuracy\":" << buf;
  }
  summary << ",\"theta_hash\":\"" << std::hex << log.final_theta_hash << std::dec << "\"";
  std::snprintf(buf, sizeof(buf), "%.17g", log.total_wall_ms);
  summary << ",\"total_wall_ms\":" << buf << "}\n";
  write_text_file(dir / "summary.json", summary.str());
}

inline void write_manifest(const fs::path& out_dir, const RunConfig& cfg,
                           const std::vector<CellSpec>& cells) {
  std::ostringstream m;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(cfg.config_hash()));
  m << "{\"code_version\":\"" << json_escape(kCodeVersion) << "\",\"schema_version\":\""
    << kLogSchemaVersion << "\",\"config_hash\":\"" << hash << "\",\"seeds\":[";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (i) m << ',';
    m << cfg.seeds[i];
  }
  m << "],\"strategies\":[";
  for (std::size_t i = 0; i < cfg.strategies.size(); ++i) {
    if (i) m << ',';
    m << '"' << cfg.strategies[i] << '"';
  }
  m << "],\"cells\":[";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) m << ',';
    m << '"' << cells[i].dir_name() << '"';
  }
  m << "]}\n";
  write_text_file(out_dir / "manifest.json", m.str());
  write_text_file(out_dir / "config.snapshot", cfg.raw_text);
}

// --- commands ------------------------------------------------------------------

struct CliOptions {
  std::string config_path;
  std::string out_dir;        // overrides config out_dir when nonempty
  int workers = 0;            // 0 = hardware concurrency
  long seed_override = -1;    // >= 0 replaces the seed list
  std::string strategy_override;  // nonempty replaces the strategy list
};

inline RunConfig load_config(const CliOptions& opts) {
  std::ifstream in(opts.config_path, std::ios::binary);
  if (!in) throw ConfigError("config not found: " + opts.config_path);
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig cfg = parse_run_config(text.str());
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (opts.seed_override >= 0) cfg.seeds = {static_cast<std::uint64_t>(opts.seed_override)};
  if (!opts.strategy_override.empty()) {
    strategy_from_string(opts.strategy_override);
    cfg.strategies = {opts.strategy_override};
  }
  return cfg;
}

struct CellResult {
  CellSpec cell;
  bool ok = false;
  std::string error;
  double wall_ms = 0.0;
  double final_val_loss = 0.0;
  double final_accuracy = 0.0;
};

/// Runs every (strategy, seed) cell; each cell's files go to its own
/// subdirectory. Failed cells are recorded and do not stop the others.
inline std::vector<CellResult> run_cells(const RunConfig& cfg, int workers,
                                         std::ostream& diag = std::cout) {
  const SharedData data = build_shared_data(cfg);
  std::vector<CellSpec> cells;
  for (const std::string& sname : cfg.strategies) {
    for (std::uint64_t seed : cfg.seeds) {
      cells.push_back(CellSpec{strategy_from_string(sname), seed});
    }
  }
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  write_manifest(out_dir, cfg, cells);

  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  const int pool =
      workers > 0 ? workers : std::max(1u, std::thread::hardware_concurrency());
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      CellResult& res = results[i];
      res.cell = cells[i];
      try {
        CellRuntime rt = build_cell(cfg, data, cells[i]);
        RunLog log = run_strategy(cells[i].strategy, rt.schedule, rt.inputs);
        persist_cell(out_dir / cells[i].dir_name(), cells[i], log,
                     rt.schedule.unit_circle_tol);
        res.ok = true;
        res.wall_ms = log.total_wall_ms;
        res.final_val_loss = log.final_val_loss;
        res.final_accuracy = log.final_accuracy;
      } catch (const std::exception& e) {
        res.ok = false;
        res.error = e.what();
        fs::create_directories(out_dir / cells[i].dir_name());
        write_text_file(out_dir / cells[i].dir_name() / "error.txt",
                        std::string(e.what()) + "\n");
      }
    }
  };
  std::vector<std::thread> threads;
  for (int t = 0; t < pool; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();

  for (const CellResult& r : results) {
    diag << (r.ok ? "done " : "FAILED ") << r.cell.dir_name();
    if (r.ok) {
      diag << "  val_loss=" << r.final_val_loss;
      if (std::isfinite(r.final_accuracy)) diag << "  accuracy=" << r.final_accuracy;
    } else {
      diag << "  " << r.error;
    }
    diag << '\n';
  }
  return results;
}

inline int cmd_run(const CliOptions& opts, std::ostream& diag = std::cout) {
  try {
    RunConfig cfg = load_config(opts);
    std::vector<CellResult> results = run_cells(cfg, opts.workers, diag);
    for (const CellResult& r : results) {
      if (!r.ok) return 2;
    }
    return 0;
  } catch (const std::exception& e) {
    diag << "error: " << e.what() << '\n';
    return 1;
  }
}

// --- csv reading (for plot / inspect) -------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
};

inline CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  return table;
}

// --- plotting --------------------------------------------------------------------

inline int cmd_plot(const std::string& log_dir, std::ostream& diag = std::cout) {
  const fs::path root(log_dir);
  if (!fs::exists(root / "manifest.json")) {
    diag << "error: no manifest.json under " << log_dir << '\n';
    return 1;
  }
  std::vector<fs::path> cell_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "outer.csv")) {
      cell_dirs.push_back(entry.path());
    }
  }
  std::sort(cell_dirs.begin(), cell_dirs.end());
  if (cell_dirs.empty()) {
    diag << "error: no cell logs under " << log_dir << '\n';
    return 1;
  }

  // one series per strategy (first seed encountered) for the metric chart
  std::vector<Series> metric_series;
  std::vector<std::string> seen;
  for (const fs::path& dir : cell_dirs) {
    const std::string name = dir.filename().string();
    const std::string strategy = name.substr(0, name.find("-seed"));
    if (std::find(seen.begin(), seen.end(), strategy) != seen.end()) continue;
    seen.push_back(strategy);
    CsvTable inner = read_csv(dir / "inner.csv");
    const int step_col = inner.column("step");
    const int val_col = inner.column("val_loss");
    Series s;
    s.label = strategy;
    for (const auto& row : inner.rows) {
      s.xs.push_back(std::stod(row[static_cast<std::size_t>(step_col)]));
      s.ys.push_back(std::stod(row[static_cast<std::size_t>(val_col)]));
    }
    metric_series.push_back(std::move(s));
  }
  {
    std::ofstream out(root / "metric_vs_step.svg", std::ios::binary);
    write_line_chart_svg(out, "validation loss", "inner step", "val loss", metric_series);
  }

  // per-hyperparameter trajectories, one chart per strategy cell (first seed)
  seen.clear();
  for (const fs::path& dir : cell_dirs) {
    const std::string name = dir.filename().string();
    const std::string strategy = name.substr(0, name.find("-seed"));
    if (std::find(seen.begin(), seen.end(), strategy) != seen.end()) continue;
    seen.push_back(strategy);
    CsvTable outer = read_csv(dir / "outer.csv");
    if (outer.rows.empty()) continue;
    std::vector<Series> hp_series;
    for (std::size_t c = 0; c < outer.header.size(); ++c) {
      if (outer.header[c].rfind("phi_value_", 0) != 0) continue;
      Series s;
      s.label = outer.header[c].substr(10);
      for (std::size_t r = 0; r < outer.rows.size(); ++r) {
        s.xs.push_back(std::stod(outer.rows[r][0]));
        s.ys.push_back(std::stod(outer.rows[r][c]));
      }
      hp_series.push_back(std::move(s));
    }
    if (hp_series.empty()) continue;
    std::ofstream out(root / ("hyperparams_" + strategy + ".svg"), std::ios::binary);
    write_line_chart_svg(out, "hyperparameter trajectory (" + strategy + ")", "outer step",
                         "value", hp_series);
  }

  // spectrum + mode magnitudes from the first cell that has them
  for (const fs::path& dir : cell_dirs) {
    std::vector<fs::path> spectra;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string fname = entry.path().filename().string();
      if (fname.rfind("spectrum_s", 0) == 0) spectra.push_back(entry.path());
    }
    if (spectra.empty()) continue;
    std::sort(spectra.begin(), spectra.end());
    CsvTable spec = read_csv(spectra.front());
    const int re_col = spec.column("re_lambda");
    const int im_col = spec.column("im_lambda");
    ComplexVector eigs(static_cast<Eigen::Index>(spec.rows.size()));
    for (std::size_t r = 0; r < spec.rows.size(); ++r) {
      eigs(static_cast<Eigen::Index>(r)) =
          Complex(std::stod(spec.rows[r][static_cast<std::size_t>(re_col)]),
                  std::stod(spec.rows[r][static_cast<std::size_t>(im_col)]));
    }
    {
      std::ofstream out(root / "spectrum.svg", std::ios::binary);
      write_spectrum_svg(out, eigs);
    }
    if (fs::exists(dir / "mode_magnitudes.csv")) {
      CsvTable mags = read_csv(dir / "mode_magnitudes.csv");
      std::vector<Series> mag_series;
      for (std::size_t c = 1; c < mags.header.size(); ++c) {
        Series s;
        s.label = mags.header[c];
        for (const auto& row : mags.rows) {
          s.xs.push_back(std::stod(row[0]));
          s.ys.push_back(std::stod(row[c]));
        }
        mag_series.push_back(std::move(s));
      }
      std::ofstream out(root / "mode_magnitudes.svg", std::ios::binary);
      write_line_chart_svg(out, "mode magnitude decay", "t", "|b| |lambda|^t", mag_series);
    }
    break;
  }

  diag << "figures written under " << log_dir << '\n';
  return 0;
}

// --- bench -------------------------------------------------------------------------

struct BenchRow {
  std::string strategy;
  std::vector<double> wall_ms;
  double median_ms = 0.0;
  double ratio_vs_local = 0.0;
};

inline int cmd_bench(const CliOptions& opts, std::ostream& diag = std::cout) {
  RunConfig cfg;
  try {
    cfg = load_config(opts);
  } catch (const std::exception& e) {
    diag << "error: " << e.what() << '\n';
    return 1;
  }
  const bool has_none =
      std::find(cfg.strategies.begin(), cfg.strategies.end(), "none") != cfg.strategies.end();
  if (cfg.strategies.size() < 3 || !has_none) {
    diag << "error: bench needs >= 2 strategies plus the 'none' baseline\n";
    return 1;
  }
  try {
    const SharedData data = build_shared_data(cfg);
    const std::size_t reps = std::min<std::size_t>(3, cfg.seeds.size());
    std::vector<BenchRow> rows;
    for (const std::string& sname : cfg.strategies) {
      BenchRow row;
      row.strategy = sname;
      for (std::size_t r = 0; r < reps; ++r) {
        CellSpec cell{strategy_from_string(sname), cfg.seeds[r]};
        CellRuntime rt = build_cell(cfg, data, cell);
        RunLog log = run_strategy(cell.strategy, rt.schedule, rt.inputs);
        row.wall_ms.push_back(log.total_wall_ms);
      }
      std::vector<double> sorted = row.wall_ms;
      std::sort(sorted.begin(), sorted.end());
      row.median_ms = sorted[sorted.size() / 2];
      rows.push_back(std::move(row));
    }
    double local_median = 0.0;
    for (const BenchRow& row : rows) {
      if (row.strategy == "local") local_median = row.median_ms;
    }
    for (BenchRow& row : rows) {
      row.ratio_vs_local = local_median > 0.0 ? row.median_ms / local_median : 0.0;
    }

    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << "strategy,median_ms,ratio_vs_local,reps\n";
    diag << "strategy        median_ms   ratio_vs_local\n";
    for (const BenchRow& row : rows) {
      char line[160];
      std::snprintf(line, sizeof(line), "%s,%.3f,%.4f,%zu\n", row.strategy.c_str(), row.median_ms,
                    row.ratio_vs_local, row.wall_ms.size());
      csv << line;
      std::snprintf(line, sizeof(line), "%-14s %10.1f   %10.3f\n", row.strategy.c_str(),
                    row.median_ms, row.ratio_vs_local);
      diag << line;
    }
    write_text_file(out_dir / "bench.csv", csv.str());
    return 0;
  } catch (const std::exception& e) {
    diag << "error: " << e.what() << '\n';
    return 2;
  }
}

// --- inspect -------------------------------------------------------------------------

inline int cmd_inspect_spectrum(const std::string& dir, long outer_step,
                                std::ostream& diag = std::cout) {
  fs::path base(dir);
  char name[40];
  std::snprintf(name, sizeof(name), "spectrum_s%04ld.csv", outer_step);
  fs::path file = base / name;
  if (!fs::exists(file)) {
    // maybe a run directory: find the first cell that has the file
    bool found = false;
    if (fs::is_directory(base)) {
      std::vector<fs::path> subdirs;
      for (const auto& entry : fs::directory_iterator(base)) {
        if (entry.is_directory()) subdirs.push_back(entry.path());
      }
      std::sort(subdirs.begin(), subdirs.end());
      for (const auto& entry : subdirs) {
        if (fs::exists(entry / name)) {
          file = entry / name;
          found = true;
          break;
        }
      }
    }
    if (!found) {
      diag << "error: no " << name << " under " << dir << '\n';
      return 1;
    }
  }
  CsvTable table = read_csv(file);
  diag << "spectrum from " << file.string() << '\n';
  diag << " idx   re(lambda)    im(lambda)     |lambda|       |b|   kept\n";
  const int re = table.column("re_lambda"), im = table.column("im_lambda");
  const int mod = table.column("modulus"), amp = table.column("amplitude_modulus");
  const int kept = table.column("kept_flag");
  for (const auto& row : table.rows) {
    char line[200];
    std::snprintf(line, sizeof(line), "%4s  %11.6f   %11.6f   %11.6f  %8.4f   %s\n",
                  row[0].c_str(), std::stod(row[static_cast<std::size_t>(re)]),
                  std::stod(row[static_cast<std::size_t>(im)]),
                  std::stod(row[static_cast<std::size_t>(mod)]),
                  std::stod(row[static_cast<std::size_t>(amp)]),
                  row[static_cast<std::size_t>(kept)] == "1" ? "*" : "");
    diag << line;
  }
  return 0;
}

}  // namespace koopgrad
