#include "profs/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "profs/feasibility.hpp"
#include "profs/gradcheck.hpp"

namespace profs {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot write " + path.string());
  out << line << '\n';
}

std::string format_eval(const EvalReport& r) {
  std::ostringstream o;
  for (const auto& [k, v] : r.recall_at) o << "recall@" << k << "=" << num(v) << '\n';
  o << "nmi=" << num(r.nmi) << '\n'
    << "f1=" << num(r.f1) << '\n'
    << "kmeans_inertia=" << num(r.kmeans_inertia) << '\n'
    << "num_queries=" << r.num_queries << '\n';
  return o.str();
}

}  // namespace

Dataset load_or_generate(const DataConfig& c) {
  if (c.path) return load(*c.path);
  return gen_synthetic(c.synthetic);
}

int eval_threads() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("PROFS_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1)
      throw ValidationError("PROFS_THREADS: expected a positive integer, got '" + std::string(env) + "'");
    n = std::min<long>(n, cap);
  }
  return n;
}

EvalReport evaluate_split(const Matrix& embeddings, const std::vector<int>& labels,
                          std::uint64_t seed, int threads) {
  std::vector<int> ks;
  for (int k : kReportKs)
    if (k < static_cast<int>(labels.size())) ks.push_back(k);
  return evaluate_embeddings(embeddings, labels, ks, seed, threads);
}

std::string metrics_header() {
  std::string h = "record\tprojection\tstep\tloss\tdisplacement\trelative_displacement";
  for (int k : kReportKs) h += "\trecall_at_" + std::to_string(k);
  return h + "\tnmi\tf1\tinertia";
}

namespace {

std::string dashes(int n) {
  std::string s;
  for (int i = 0; i < n; ++i) s += "\t-";
  return s;
}

constexpr int kEvalColumns = 4 + 3;  // recall columns + nmi, f1, inertia

}  // namespace

std::string metrics_row(const StepRecord& r) {
  return "step\t" + std::to_string(r.projection) + "\t" + std::to_string(r.step) + "\t" + num(r.loss) +
         dashes(2 + kEvalColumns);
}

std::string metrics_row(const ProjectionRecord& r) {
  return "projection\t" + std::to_string(r.projection) + "\t-\t" + num(r.mean_loss) + "\t" +
         num(r.displacement) + "\t" + num(r.relative_displacement) + dashes(kEvalColumns);
}

std::string metrics_row(const EvalRecord& r) {
  std::string s = "eval\t" + std::to_string(r.projection) + "\t" + std::to_string(r.steps) + dashes(3);
  for (int k : kReportKs) {
    const auto it = r.report.recall_at.find(k);
    s += "\t" + (it == r.report.recall_at.end() ? std::string("-") : num(it->second));
  }
  return s + "\t" + num(r.report.nmi) + "\t" + num(r.report.f1) + "\t" + num(r.report.kmeans_inertia);
}

void append_metrics(const std::string& path, const std::vector<std::string>& rows) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot write " + path);
  if (fresh) out << metrics_header() << '\n';
  for (const auto& r : rows) out << r << '\n';
  if (!out) throw Error("write failed for " + path);
}

RunResult run_experiment(const ExperimentConfig& c, const RunOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  c.validate();
  const Dataset full = load_or_generate(c.data);
  auto [train, test] = zero_shot_split(full, c.data.split_fraction);
  TrainConfig tc = c.train;
  tc.model.input_dim = full.input_dim();
  const Trainer trainer(tc, std::move(train));
  const std::string hash = config_hash(c);

  const fs::path out(c.out_dir);
  fs::create_directories(out);
  const fs::path metrics = out / "metrics.tsv";
  const fs::path timing = out / "timing.tsv";

  RunResult result;
  result.out_dir = c.out_dir;
  TrainState& s = result.state;
  if (options.resume_from) {
    Checkpoint ck = load_checkpoint(*options.resume_from);
    if (ck.config_hash != hash)
      throw ValidationError("checkpoint: written under config " + ck.config_hash + ", current config is " + hash);
    if (!(ck.spec == tc.model)) throw ValidationError("checkpoint: network spec does not match the config");
    s = std::move(ck.state);
  } else {
    s = trainer.init_state();
    fs::remove(metrics);
    write_file(timing, "projection\tsteps\twall_seconds\n");
  }
  write_file(out / "config.ini", format_config(c));

  auto evaluate_now = [&](const TrainState& st) {
    const Matrix e = trainer.embed_all(st.params, test.inputs);
    EvalRecord rec{st.k, st.total_steps, evaluate_split(e, test.labels, tc.seed, options.threads)};
    append_line(timing, std::to_string(rec.projection) + "\t" + std::to_string(rec.steps) + "\t" +
                            num(elapsed()));
    return rec;
  };

  const auto& sched = tc.schedule;
  while (s.k < sched.max_projections && !s.converged()) {
    const std::size_t first_step = s.step_log.size();
    trainer.run_projection(s);
    std::vector<std::string> rows;
    for (std::size_t i = first_step; i < s.step_log.size(); ++i) rows.push_back(metrics_row(s.step_log[i]));
    rows.push_back(metrics_row(s.projection_log.back()));
    if (sched.eval_every > 0 && s.k % sched.eval_every == 0) {
      s.eval_log.push_back(evaluate_now(s));
      rows.push_back(metrics_row(s.eval_log.back()));
      if (!options.quiet)
        std::cout << "projection " << s.k << " recall@1=" << num(s.eval_log.back().report.recall_at.begin()->second)
                  << '\n';
    }
    append_metrics(metrics.string(), rows);
  }
  if (s.eval_log.empty() || s.eval_log.back().projection != s.k) {
    s.eval_log.push_back(evaluate_now(s));
    append_metrics(metrics.string(), {metrics_row(s.eval_log.back())});
  }
  result.final_report = s.eval_log.back().report;

  save_checkpoint((out / "checkpoint.txt").string(), s, tc.model, hash);
  std::ostringstream manifest;
  manifest << "profs_version=" << kVersion << '\n'
           << "compiler=" << __VERSION__ << '\n'
           << "eigen=" << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION
           << '\n'
           << "seed=" << tc.seed << '\n'
           << "data_seed=" << c.data.synthetic.seed << '\n'
           << "config_hash=" << hash << '\n'
           << "resumed=" << (options.resume_from ? "true" : "false") << '\n'
           << "M=" << s.M << '\n'
           << "projections=" << s.k << '\n'
           << "steps=" << s.total_steps << '\n'
           << "eval_threads=" << options.threads << '\n'
           << "wall_seconds=" << num(elapsed()) << '\n';
  write_file(out / "manifest.txt", manifest.str());
  if (!options.quiet) std::cout << format_eval(*result.final_report);
  return result;
}

std::pair<std::string, std::vector<std::string>> parse_grid(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw ValidationError("grid: expected key=v1,v2,...");
  const std::string key = spec.substr(0, eq);
  if (key != "lambda" && key != "M") throw ValidationError("grid: key must be lambda or M, got '" + key + "'");
  std::vector<std::string> values;
  std::istringstream in(spec.substr(eq + 1));
  for (std::string v; std::getline(in, v, ',');) {
    if (v.empty()) throw ValidationError("grid: empty value");
    values.push_back(v);
  }
  if (values.empty()) throw ValidationError("grid: no values");
  return {key, values};
}

namespace {

ExperimentConfig config_from(const std::string& path) {
  return path.empty() ? parse_config("") : load_config(path);
}

void apply_overrides(ExperimentConfig& c, const std::optional<std::uint64_t>& seed,
                     const std::string& out) {
  if (seed) c.train.seed = *seed;
  if (!out.empty()) c.out_dir = out;
  c.validate();
}

void set_grid_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    if (key == "lambda") {
      c.train.schedule.lambda = std::stod(value, &used);
    } else {
      c.train.schedule.M = std::stol(value, &used);
    }
    if (used != value.size()) throw std::invalid_argument(value);
  } catch (const std::logic_error&) {
    throw ValidationError(key + ": cannot parse grid value '" + value + "'");
  }
  c.validate();
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Alternating-projection metric learning on synthetic or file datasets."};
  app.require_subcommand(1);

  std::string config_path, out, checkpoint, data_path, grid;
  std::optional<std::uint64_t> seed;
  bool print_config = false;
  int trials = 100;
  std::optional<double> eps_plus, eps_minus;

  auto* gen = app.add_subcommand("generate", "Write the configured synthetic dataset to a file");
  gen->add_option("--config", config_path, "Config file");
  gen->add_option("--seed", seed, "Data seed override");
  gen->add_option("--out", out, "Dataset file to write")->required();

  auto* train = app.add_subcommand("train", "Train and evaluate one configuration");
  train->add_option("--config", config_path, "Config file");
  train->add_option("--seed", seed, "Run seed override");
  train->add_option("--out", out, "Output directory override");
  train->add_option("--checkpoint", checkpoint, "Resume from this checkpoint");
  train->add_flag("--print-config", print_config, "Print the effective config and exit");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset file");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_path, "Dataset file")->required();
  eval->add_option("--seed", seed, "k-means seed");
  eval->add_option("--out", out, "Directory whose metrics.tsv receives the record");

  auto* feas = app.add_subcommand("feasibility-check", "Constraint report for a checkpoint on a dataset");
  feas->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  feas->add_option("--data", data_path, "Dataset file")->required();
  feas->add_option("--config", config_path, "Config supplying eps_plus and eps_minus");
  feas->add_option("--eps-plus", eps_plus, "Positive-pair bound");
  feas->add_option("--eps-minus", eps_minus, "Negative-pair bound");
  feas->add_option("--seed", seed, "Seed for the representatives of the relaxed check");

  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  grad->add_option("--trials", trials, "Number of random configurations");
  grad->add_option("--seed", seed, "Seed");

  auto* sweep = app.add_subcommand("sweep", "Train one run per grid value of lambda or M");
  sweep->add_option("--config", config_path, "Config file");
  sweep->add_option("--seed", seed, "Run seed override");
  sweep->add_option("--out", out, "Parent output directory");
  sweep->add_option("--grid", grid, "key=v1,v2,... with key lambda or M")->required();
  sweep->add_flag("--print-config", print_config, "Print the effective base config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << app.help();
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig c = config_from(config_path);
      if (c.data.path) throw ValidationError("path: generate needs a synthetic data block");
      if (seed) c.data.synthetic.seed = *seed;
      const Dataset d = gen_synthetic(c.data.synthetic);
      save(d, out);
      std::cout << "wrote " << d.size() << " samples, " << d.num_classes() << " classes to " << out << '\n';
      return 0;
    }
    if (train->parsed()) {
      ExperimentConfig c = config_from(config_path);
      apply_overrides(c, seed, out);
      if (print_config) {
        std::cout << format_config(c);
        return 0;
      }
      RunOptions opt;
      opt.threads = eval_threads();
      if (!checkpoint.empty()) opt.resume_from = checkpoint;
      run_experiment(c, opt);
      return 0;
    }
    if (eval->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const Dataset d = load(data_path);
      const Matrix e = embed_batch(d.inputs, ck.state.params, ck.spec);
      EvalRecord rec{ck.state.k, ck.state.total_steps, evaluate_split(e, d.labels, seed.value_or(0), eval_threads())};
      std::cout << format_eval(rec.report);
      const fs::path dir = out.empty() ? fs::path(checkpoint).parent_path() : fs::path(out);
      if (!dir.empty()) fs::create_directories(dir);
      append_metrics((dir / "metrics.tsv").string(), {metrics_row(rec)});
      return 0;
    }
    if (feas->parsed()) {
      ConstraintSpec spec;
      const ExperimentConfig c = config_from(config_path);
      spec.eps_plus = eps_plus.value_or(c.train.loss.eps_plus);
      spec.eps_minus = eps_minus.value_or(c.train.loss.eps_minus);
      if (!(spec.eps_plus >= 0.0 && spec.eps_plus < spec.eps_minus))
        throw ValidationError("eps_plus: must satisfy 0 <= eps_plus < eps_minus");
      const Checkpoint ck = load_checkpoint(checkpoint);
      const Dataset d = load(data_path);
      const Matrix e = embed_batch(d.inputs, ck.state.params, ck.spec);
      std::cout << format_report(check_full(e, d.labels, spec), "full");
      Rng rng(seed.value_or(0));
      RepUsage usage;
      const RepresentativeSet reps = sample_representatives(d.class_index(), rng, usage);
      std::cout << format_report(check_relaxed(e, d.labels, reps.reps, spec), "relaxed");
      return 0;
    }
    if (grad->parsed()) {
      GradcheckOptions opt;
      opt.trials = trials;
      opt.seed = seed.value_or(0);
      const GradcheckReport r = run_gradcheck(opt);
      std::map<LossKind, double> worst;
      for (const auto& t : r.trials) worst[t.kind] = std::max(worst[t.kind], t.relative_error);
      for (const auto& [kind, err] : worst) std::cout << to_string(kind) << "_max_relative_error=" << num(err) << '\n';
      std::cout << "trials=" << r.trials.size() << '\n'
                << "max_relative_error=" << num(r.max_relative_error) << '\n'
                << "tolerance=" << num(opt.tolerance) << '\n'
                << "result=" << (r.passed ? "pass" : "fail") << '\n';
      return r.passed ? 0 : 1;
    }
    if (sweep->parsed()) {
      ExperimentConfig base = config_from(config_path);
      apply_overrides(base, seed, out);
      const auto [key, values] = parse_grid(grid);
      std::vector<ExperimentConfig> cells;
      for (const auto& v : values) {
        ExperimentConfig cell = base;
        set_grid_value(cell, key, v);
        cell.out_dir = (fs::path(base.out_dir) / (key + "=" + v)).string();
        cells.push_back(cell);
      }
      if (print_config) {
        std::cout << format_config(base);
        return 0;
      }
      RunOptions opt;
      opt.threads = eval_threads();
      opt.quiet = true;
      std::cout << key << "\trecall_at_1\tmean_displacement\tout\n";
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const RunResult r = run_experiment(cells[i], opt);
        double disp = 0.0;
        for (const auto& p : r.state.projection_log) disp += p.displacement;
        if (!r.state.projection_log.empty()) disp /= static_cast<double>(r.state.projection_log.size());
        const auto& recall = r.final_report->recall_at;
        std::cout << values[i] << '\t' << (recall.count(1) ? num(recall.at(1)) : "-") << '\t' << num(disp)
                  << '\t' << r.out_dir << '\n';
      }
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace profs
