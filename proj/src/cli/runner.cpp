#include "lu/cli/runner.h"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lu/cli/csv.h"
#include "lu/cli/svg.h"

namespace lu::cli {

namespace {

using nlohmann::json;

struct CellFailure {
  bool numerical = false;
  std::string message;
};

// Runs job(i) for i in [0, n) on up to `workers` threads. Failures are kept
// per index; the caller assembles results in index order.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& job,
                  std::vector<std::optional<CellFailure>>& failures) {
  failures.assign(n, std::nullopt);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (const NumericalError& e) {
        failures[i] = CellFailure{true, e.what()};
      } catch (const std::exception& e) {
        failures[i] = CellFailure{false, e.what()};
      }
    }
  };
  const std::size_t t = std::max<std::size_t>(1, std::min(workers, n));
  if (t == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < t; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

std::string seed_dir(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

std::string snapshot_name(const eval::Snapshot& s) {
  return std::string(eval::method_name(s.method)) + "-" + s.label + ".csv";
}

std::string dataset_csv(const gmm::GmmDataset& d) {
  std::ostringstream os;
  os << "x,y,label,task\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    os << format_double(d.points[i].x) << ',' << format_double(d.points[i].y) << ',' << d.labels[i] << ','
       << gmm::task_name(d.task[i]) << '\n';
  }
  return os.str();
}

std::vector<double> slice_xs(std::size_t n) {
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = -60.0 + 120.0 * static_cast<double>(i) / static_cast<double>(n - 1);
  return xs;
}

std::vector<Series> logit_series(const std::vector<eval::Snapshot>& snaps, const eval::GmmProtocolConfig& c,
                                 std::size_t points) {
  const auto xs = slice_xs(points);
  std::vector<Series> out;
  for (const auto& s : snaps) {
    const gmm::RbfClassifier model(c.grid, s.params);
    out.push_back({std::string(eval::method_name(s.method)) + " " + s.label, xs, gmm::logit_slice(model, xs)});
  }
  return out;
}

std::string series_csv(const std::vector<Series>& series) {
  std::ostringstream os;
  os << "series,x,y\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) os << s.label << ',' << format_double(s.x[i]) << ',' << format_double(s.y[i]) << '\n';
  }
  return os.str();
}

std::string recovery_csv(const ExperimentConfig& config, const std::vector<eval::EvalReport>& reports) {
  const double floor = std::visit([](const auto& c) { return c.recovery_floor; }, config.protocol);
  const auto find = [&](std::uint64_t seed, eval::Method m, eval::Phase p, const std::string& subset)
      -> const eval::EvalReport* {
    for (const auto& r : reports) {
      if (r.seed == seed && r.method == m && r.phase == p && r.relearn_subset == subset) return &r;
    }
    return nullptr;
  };
  const auto targets = eval::resolve_targets(config.protocol, config.relearn_targets);
  std::vector<std::string> members;
  std::visit(
      [&](const auto& c) {
        for (const auto& fold : c.folds) {
          for (auto x : fold) {
            std::string name;
            if constexpr (std::is_same_v<std::decay_t<decltype(c)>, eval::GmmProtocolConfig>) {
              name = gmm::task_name(x);
            } else {
              name = bigram::token_name(x);
            }
            members.push_back(name);
          }
        }
      },
      config.protocol);

  std::ostringstream os;
  os << "task,relearn_subset,metric_name,seed,value\n";
  for (std::uint64_t seed : config.seeds) {
    const auto* pu = find(seed, eval::Method::LU, eval::Phase::unlearned, "none");
    const auto* qu = find(seed, eval::Method::U, eval::Phase::unlearned, "none");
    if (!pu || !qu) continue;
    for (const auto& target : targets) {
      const std::string label = eval::subset_label(target);
      const auto* pr = find(seed, eval::Method::LU, eval::Phase::relearned, label);
      const auto* qr = find(seed, eval::Method::U, eval::Phase::relearned, label);
      if (!pr || !qr) continue;
      for (const auto& m : members) {
        if (std::find(target.begin(), target.end(), m) != target.end()) continue;
        // Metric names are upper-case task letters for both testbeds.
        std::string metric = m;
        for (char& ch : metric) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        const auto rate = eval::recovery_rate(metric_value(pu->metrics, metric), metric_value(pr->metrics, metric),
                                              metric_value(qu->metrics, metric), metric_value(qr->metrics, metric),
                                              floor);
        os << eval::task_kind_name(pu->task) << ',' << label << ',' << metric << ',' << seed << ','
           << (rate ? format_double(*rate) : std::string("undefined")) << '\n';
      }
    }
  }
  return os.str();
}

json manifest_base(const ExperimentConfig& config, const std::string& kind) {
  json m;
  m["kind"] = kind;
  m["name"] = config.name;
  m["version"] = kVersion;
  m["config_hash"] = config_hash(config);
  m["config_fingerprint"] = eval::config_fingerprint(config.protocol);
  m["seeds"] = config.seeds;
  m["config"] = json::parse(config.canonical);
  return m;
}

void log(const RunOptions& o, const std::string& msg) {
  if (o.quiet) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << msg << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Finish {
  int exit_code = kExitOk;
  std::string error;
};

Finish summarize(const std::vector<std::optional<CellFailure>>& failures, const std::vector<std::uint64_t>& seeds,
                 json& manifest) {
  Finish f;
  json completed = json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!failures[i]) {
      completed.push_back(seeds[i]);
      continue;
    }
    if (f.error.empty()) {
      f.error = "seed " + std::to_string(seeds[i]) + ": " + failures[i]->message;
      f.exit_code = failures[i]->numerical ? kExitNumerical : kExitFailure;
    }
  }
  manifest["completed_seeds"] = completed;
  manifest["status"] = f.error.empty() ? "ok" : "error";
  if (!f.error.empty()) manifest["error"] = f.error;
  return f;
}

void write_manifest(const std::filesystem::path& dir, json manifest, std::vector<std::string> files) {
  std::sort(files.begin(), files.end());
  manifest["files"] = files;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

std::filesystem::path output_root() {
  const char* env = std::getenv("LU_OUTPUT_ROOT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const RunOptions& options) {
  if (options.output_dir) return *options.output_dir;
  const std::filesystem::path rel = config.output_dir.empty() ? config.name : config.output_dir;
  return rel.is_absolute() ? rel : output_root() / rel;
}

std::string weights_csv(eval::TaskKind task, const ParamVector& params, const gmm::RbfGrid& grid) {
  std::ostringstream os;
  os << "matrix,row,col,value\n";
  if (task == eval::TaskKind::gmm) {
    if (params.size() != grid.n_params()) throw ValidationError("GMM snapshot has the wrong parameter count");
    for (std::size_t r = 0; r < grid.per_axis; ++r) {
      for (std::size_t c = 0; c < grid.per_axis; ++c) {
        os << "W," << r << ',' << c << ',' << format_double(params[r * grid.per_axis + c]) << '\n';
      }
    }
    os << "bias,0,0," << format_double(params.back()) << '\n';
    return os.str();
  }
  const bigram::AttnTransformer model(params);
  for (bigram::Weight w : bigram::kAllWeights) {
    const auto shape = bigram::block_shape(w);
    for (std::size_t r = 0; r < shape.rows; ++r) {
      for (std::size_t c = 0; c < shape.cols; ++c) {
        os << bigram::weight_name(w) << ',' << r << ',' << c << ',' << format_double(model.at(w, r, c)) << '\n';
      }
    }
  }
  return os.str();
}

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  RunResult result;
  result.directory = resolve_output_dir(config, options);
  std::filesystem::create_directories(result.directory);
  const auto& dir = result.directory;
  const eval::TaskKind task = eval::task_of(config.protocol);
  const std::size_t workers = options.workers.value_or(config.workers);
  const auto* gmm_cfg = std::get_if<eval::GmmProtocolConfig>(&config.protocol);

  std::vector<std::optional<eval::ProtocolOutcome>> outcomes(config.seeds.size());
  std::vector<std::vector<std::string>> seed_files(config.seeds.size());
  std::vector<std::optional<CellFailure>> failures;
  const auto job = [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = config.seeds[i];
    auto outcome = eval::run_protocol(config.protocol, config.methods, config.relearn_targets, seed);
    auto& files = seed_files[i];
    const std::string sd = seed_dir(seed);
    for (const auto& s : outcome.snapshots) {
      const std::string rel = "snapshots/" + sd + "/" + snapshot_name(s);
      write_file(dir / rel, weights_csv(task, s.params, gmm_cfg ? gmm_cfg->grid : gmm::RbfGrid{}));
      files.push_back(rel);
    }
    if (gmm_cfg) {
      const auto problem = eval::build_gmm_problem(*gmm_cfg, seed);
      write_file(dir / sd / "dataset.csv", dataset_csv(problem->dataset));
      write_file(dir / sd / "logits.csv", series_csv(logit_series(outcome.snapshots, *gmm_cfg, config.slice_points)));
      files.push_back(sd + "/dataset.csv");
      files.push_back(sd + "/logits.csv");
    }
    outcomes[i] = std::move(outcome);
    log(options, "seed " + std::to_string(seed) + " done in " + std::to_string(seconds_since(t0)) + " s");
  };
  parallel_for(config.seeds.size(), workers, job, failures);

  std::vector<eval::EvalReport> reports;
  std::vector<std::string> files;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i]) continue;
    reports.insert(reports.end(), outcomes[i]->reports.begin(), outcomes[i]->reports.end());
    files.insert(files.end(), seed_files[i].begin(), seed_files[i].end());
  }

  std::ostringstream rep;
  eval::write_reports_csv(rep, reports);
  write_file(dir / "reports.csv", rep.str());
  files.push_back("reports.csv");
  if (!reports.empty()) {
    const auto agg = eval::aggregate(reports);
    std::ostringstream os;
    eval::write_aggregate_csv(os, agg);
    write_file(dir / "aggregate.csv", os.str());
    write_file(dir / "figures/aggregate.svg", barplot_from_csv(parse_csv(os.str(), "aggregate.csv"), std::nullopt));
    write_file(dir / "recovery.csv", recovery_csv(config, reports));
    files.insert(files.end(), {"aggregate.csv", "figures/aggregate.svg", "recovery.csv"});
  }

  // Figures for the first finished seed: weight heatmaps over the data and the logit slice.
  for (std::size_t i = 0; gmm_cfg && i < outcomes.size(); ++i) {
    if (!outcomes[i]) continue;
    const std::string sd = seed_dir(config.seeds[i]);
    const auto data = read_csv(dir / sd / "dataset.csv");
    for (const auto& s : outcomes[i]->snapshots) {
      const std::string stem = std::string(eval::method_name(s.method)) + "-" + s.label;
      const auto weights = parse_csv(weights_csv(task, s.params, gmm_cfg->grid), stem);
      const std::string rel = "figures/" + sd + "/heatmap-" + stem + ".svg";
      write_file(dir / rel, heatmap_from_csv(weights, &data));
      files.push_back(rel);
    }
    const std::string rel = "figures/" + sd + "/logits.svg";
    write_file(dir / rel, lineplot_from_csv(read_csv(dir / sd / "logits.csv")));
    files.push_back(rel);
    break;
  }

  json manifest = manifest_base(config, "run");
  const Finish f = summarize(failures, config.seeds, manifest);
  write_manifest(dir, manifest, files);
  result.exit_code = f.exit_code;
  result.error = f.error;
  return result;
}

RunResult run_ablation(const ExperimentConfig& config, const RunOptions& options) {
  const auto* cfg = std::get_if<eval::BigramProtocolConfig>(&config.protocol);
  if (!cfg) throw ConfigError("ablation needs a bigram config");
  const std::vector<std::vector<bigram::Token>> expected{{bigram::Token::a}, {bigram::Token::b}};
  if (cfg->folds != expected) throw ConfigError("ablation needs the fold plan [[\"a\"], [\"b\"]]");

  RunResult result;
  result.directory = resolve_output_dir(config, options);
  std::filesystem::create_directories(result.directory);
  const auto& dir = result.directory;

  std::vector<std::vector<bigram::AblationRow>> rows(config.seeds.size());
  std::vector<std::optional<CellFailure>> failures;
  const eval::Method both[] = {eval::Method::U, eval::Method::LU};
  const auto job = [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = config.seeds[i];
    const auto outcome = eval::run_protocol(config.protocol, both, {}, seed);
    const eval::Snapshot* u = nullptr;
    const eval::Snapshot* lu = nullptr;
    for (const auto& s : outcome.snapshots) {
      if (s.label == "original") continue;
      (s.method == eval::Method::U ? u : lu) = &s;  // the last stage of each method wins
    }
    const std::uint64_t one[] = {seed};
    rows[i] = bigram::ablation_sweep(bigram::AttnTransformer(u->params), bigram::AttnTransformer(lu->params),
                                     cfg->relearn, cfg->n_eval, one);
    log(options, "seed " + std::to_string(seed) + " done in " + std::to_string(seconds_since(t0)) + " s");
  };
  parallel_for(config.seeds.size(), options.workers.value_or(config.workers), job, failures);

  std::ostringstream raw;
  raw << "mask,seed,phase,relearn_subset,metric_name,value\n";
  // Per mask, per series: values over seeds.
  std::vector<Bar> unlearned_bars, relearned_bars;
  std::map<std::pair<std::string, std::string>, std::vector<double>> unl, rel;
  std::vector<std::string> mask_order;
  for (unsigned m = 0; m < 8; ++m) mask_order.push_back(bigram::ComponentMask::from_index(m).label());
  for (const auto& seed_rows : rows) {
    for (const auto& r : seed_rows) {
      const std::string mask = r.mask.label();
      const auto emit = [&](const char* phase, const char* subset, const bigram::BigramMetrics& m) {
        for (const auto& metric : m.to_metrics()) {
          raw << mask << ',' << r.seed << ',' << phase << ',' << subset << ',' << metric.name << ','
              << format_double(metric.value) << '\n';
        }
      };
      emit("unlearned", "none", r.unlearned);
      emit("relearned", "a", r.relearned_a);
      emit("relearned", "b", r.relearned_b);
      unl[{mask, "A"}].push_back(r.unlearned.acc_a);
      unl[{mask, "B"}].push_back(r.unlearned.acc_b);
      rel[{mask, "B after relearning a"}].push_back(r.relearned_a.acc_b);
      rel[{mask, "A after relearning b"}].push_back(r.relearned_b.acc_a);
    }
  }
  const auto summarize_bars = [&](const auto& cells, const std::vector<std::string>& series, std::vector<Bar>& bars) {
    std::ostringstream os;
    os << "group,series,mean,std,lo,hi,n\n";
    for (const auto& mask : mask_order) {
      for (const auto& s : series) {
        auto it = cells.find({mask, s});
        if (it == cells.end()) continue;
        const auto& v = it->second;
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        os << mask << ',' << s << ',' << format_double(mean) << ',' << format_double(sd) << ','
           << format_double(mean - 2 * sd) << ',' << format_double(mean + 2 * sd) << ',' << v.size() << '\n';
        bars.push_back({mask, s, mean, sd});
      }
    }
    return os.str();
  };
  std::vector<std::string> files{"ablation.csv"};
  write_file(dir / "ablation.csv", raw.str());
  if (!unl.empty()) {
    write_file(dir / "ablation_unlearned.csv", summarize_bars(unl, {"A", "B"}, unlearned_bars));
    write_file(dir / "ablation_relearned.csv",
               summarize_bars(rel, {"B after relearning a", "A after relearning b"}, relearned_bars));
    write_file(dir / "figures/ablation_unlearned.svg",
               barplot_svg(unlearned_bars, config.ideal, "Accuracy after unlearning"));
    write_file(dir / "figures/ablation_relearned.svg",
               barplot_svg(relearned_bars, config.ideal, "Cross-task accuracy after relearning"));
    files.insert(files.end(), {"ablation_unlearned.csv", "ablation_relearned.csv", "figures/ablation_unlearned.svg",
                               "figures/ablation_relearned.svg"});
  }

  json manifest = manifest_base(config, "ablation");
  const Finish f = summarize(failures, config.seeds, manifest);
  write_manifest(dir, manifest, files);
  result.exit_code = f.exit_code;
  result.error = f.error;
  return result;
}

namespace {

RunResult guarded(const std::filesystem::path& path, const RunOptions& options,
                  RunResult (*run)(const ExperimentConfig&, const RunOptions&)) {
  ExperimentConfig config;
  try {
    config = load_config(path);
  } catch (const ConfigError& e) {
    return {kExitConfig, {}, e.what()};
  } catch (const ValidationError& e) {
    return {kExitConfig, {}, e.what()};
  }
  try {
    return run(config, options);
  } catch (const ConfigError& e) {
    return {kExitConfig, {}, e.what()};
  } catch (const NumericalError& e) {
    return {kExitNumerical, resolve_output_dir(config, options), e.what()};
  } catch (const std::exception& e) {
    return {kExitFailure, resolve_output_dir(config, options), e.what()};
  }
}

}  // namespace

RunResult run_config(const std::filesystem::path& path, const RunOptions& options) {
  return guarded(path, options, &run_experiment);
}

RunResult run_ablation_config(const std::filesystem::path& path, const RunOptions& options) {
  return guarded(path, options, &run_ablation);
}

}  // namespace lu::cli
