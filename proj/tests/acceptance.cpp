// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Usage: lu_acceptance [work_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>

#include "lu/bigram.h"
#include "lu/cli/csv.h"
#include "lu/cli/runner.h"
#include "lu/eval.h"
#include "lu/gmm.h"
#include "lu/optim.h"

namespace {

namespace fs = std::filesystem;
using namespace lu;

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) ok = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (cond ? "" : " [x]");
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Seed means of reports.csv keyed by method|phase|subset|metric.
std::map<std::string, double> report_means(const fs::path& csv) {
  const auto t = cli::read_csv(csv);
  const auto cm = t.require("method"), cp = t.require("phase"), cs = t.require("relearn_subset"),
             cn = t.require("metric_name"), cv = t.require("value");
  std::map<std::string, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    auto& a = acc[r[cm] + "|" + r[cp] + "|" + r[cs] + "|" + r[cn]];
    a.first += t.number(i, cv);
    a.second += 1;
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : acc) out[k] = v.first / v.second;
  return out;
}

// Largest value of a metric over relearned rows of reports.csv.
double max_relearned(const fs::path& csv, const std::string& metric) {
  const auto t = cli::read_csv(csv);
  const auto cp = t.require("phase"), cn = t.require("metric_name"), cv = t.require("value");
  double m = 0.0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i][cp] == "relearned" && t.rows[i][cn] == metric) m = std::max(m, t.number(i, cv));
  }
  return m;
}

double rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / scale;
}

double tv(const bigram::Row& x, const bigram::Row& y) {
  return 0.5 * (std::abs(x[0] - y[0]) + std::abs(x[1] - y[1]) + std::abs(x[2] - y[2]));
}

cli::RunResult run(const fs::path& config, const fs::path& out, std::size_t workers, bool ablation) {
  cli::RunOptions o{.output_dir = out, .workers = workers, .quiet = true};
  return ablation ? cli::run_ablation_config(config, o) : cli::run_config(config, o);
}

void report(int id, const std::string& name, const Check& c) {
  std::printf("%s [%d] %s: %s\n", c.ok ? "PASS" : "FAIL", id, name.c_str(), c.detail.str().c_str());
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "lu-acceptance";
  const fs::path configs = fs::path(LU_SOURCE_DIR) / "configs";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  int failures = 0;
  const auto done = [&](int id, const std::string& name, const Check& c) {
    report(id, name, c);
    failures += c.ok ? 0 : 1;
  };

  const auto t0 = std::chrono::steady_clock::now();
  const auto r1 = run(configs / "table1.json", work / "table1", workers, false);
  const double gmm_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto t1 = std::chrono::steady_clock::now();
  const auto r2 = run(configs / "table2.json", work / "table2", workers, false);
  const double bigram_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  const auto r3 = run(configs / "ablation.json", work / "ablation", workers, true);

  // 1. GMM reproduction.
  {
    Check c;
    if (r1.exit_code != 0) {
      c.require(false, "table1 run failed: " + r1.error);
    } else {
      const auto m = report_means(work / "table1" / "reports.csv");
      const double oa = m.at("U|original|none|A"), ob = m.at("U|original|none|B"), orr = m.at("U|original|none|R");
      c.require(oa >= 0.97 && ob >= 0.97, "original A " + fmt(oa) + " B " + fmt(ob) + " >= 0.97");
      c.require(orr >= 0.82 && orr <= 0.94, "original R " + fmt(orr) + " in [0.82, 0.94]");
      for (const char* method : {"U", "LU"}) {
        const std::string k = std::string(method) + "|unlearned|none|";
        const double a = m.at(k + "A"), b = m.at(k + "B"), r = m.at(k + "R");
        c.require(a <= 0.06 && b <= 0.06, std::string(method) + " A " + fmt(a) + " B " + fmt(b) + " <= 0.06");
        c.require(r >= 0.92, std::string(method) + " R " + fmt(r) + " >= 0.92");
      }
      c.require(gmm_seconds < 300.0, "runtime " + fmt(gmm_seconds) + " s < 300 s");
    }
    done(1, "GMM reproduction", c);
  }

  // 2. GMM directional claim.
  {
    Check c;
    if (r1.exit_code != 0) {
      c.require(false, "table1 run failed");
    } else {
      const auto m = report_means(work / "table1" / "reports.csv");
      const double u = m.at("U|relearned|B|A"), lu = m.at("LU|relearned|B|A");
      c.require(lu <= u - 0.30, "A after relearning B: LU " + fmt(lu) + " vs U " + fmt(u) + " (gap >= 0.30)");
      c.require(lu <= 0.55, "LU " + fmt(lu) + " <= 0.55");
      c.detail << "; B after relearning A: LU " << fmt(m.at("LU|relearned|A|B")) << " (unconstrained)";
    }
    done(2, "GMM directional gap", c);
  }

  // 3. Bigram reproduction.
  {
    Check c;
    if (r2.exit_code != 0) {
      c.require(false, "table2 run failed: " + r2.error);
    } else {
      const auto m = report_means(work / "table2" / "reports.csv");
      const double a = m.at("U|original|none|A"), b = m.at("U|original|none|B"), r = m.at("U|original|none|R");
      c.require(a >= 0.87 && a <= 0.95 && b >= 0.87 && b <= 0.95,
                "original A " + fmt(a) + " B " + fmt(b) + " in [0.87, 0.95]");
      c.require(r <= 0.05, "original tv " + fmt(r) + " <= 0.05");
      for (const char* method : {"U", "LU"}) {
        const std::string k = std::string(method) + "|unlearned|none|";
        const double ua = m.at(k + "A"), ub = m.at(k + "B"), ur = m.at(k + "R");
        c.require(ua >= 0.28 && ua <= 0.40 && ub >= 0.28 && ub <= 0.40,
                  std::string(method) + " A " + fmt(ua) + " B " + fmt(ub) + " in [0.28, 0.40]");
        c.require(ur <= 0.05, std::string(method) + " tv " + fmt(ur) + " <= 0.05");
      }
      c.require(bigram_seconds < 1800.0, "runtime " + fmt(bigram_seconds) + " s < 1800 s");
    }
    done(3, "Bigram reproduction", c);
  }

  // 4. Bigram directional claim.
  {
    Check c;
    if (r2.exit_code != 0) {
      c.require(false, "table2 run failed");
    } else {
      const auto m = report_means(work / "table2" / "reports.csv");
      const double ub = m.at("U|relearned|a|B"), lub = m.at("LU|relearned|a|B");
      const double ua = m.at("U|relearned|b|A"), lua = m.at("LU|relearned|b|A");
      c.require(lub <= ub - 0.15, "B after relearning a: LU " + fmt(lub) + " vs U " + fmt(ub));
      c.require(lua <= ua - 0.15, "A after relearning b: LU " + fmt(lua) + " vs U " + fmt(ua));
      const double worst = max_relearned(work / "table2" / "reports.csv", "R");
      c.require(worst <= 0.06, "max retain tv over relearn runs " + fmt(worst) + " <= 0.06");
      double worst_mean = 0.0;
      for (const auto& [k, v] : m) {
        if (k.find("|relearned|") != std::string::npos && k.ends_with("|R")) worst_mean = std::max(worst_mean, v);
      }
      c.detail << "; max seed-mean retain tv " << fmt(worst_mean) << " (informational)";
    }
    done(4, "Bigram directional gap", c);
  }

  // 5 and 6. Ablation.
  {
    Check c5, c6;
    if (r3.exit_code != 0) {
      c5.require(false, "ablation run failed: " + r3.error);
      c6.require(false, "ablation run failed");
    } else {
      const auto rel = cli::read_csv(work / "ablation" / "ablation_relearned.csv");
      const auto unl = cli::read_csv(work / "ablation" / "ablation_unlearned.csv");
      const auto lookup = [](const cli::CsvTable& t) {
        std::map<std::string, double> out;
        const auto g = t.require("group"), s = t.require("series"), mean = t.require("mean");
        for (std::size_t i = 0; i < t.rows.size(); ++i) out[t.rows[i][g] + "|" + t.rows[i][s]] = t.number(i, mean);
        return out;
      };
      const auto r = lookup(rel);
      const auto u = lookup(unl);
      const std::string ba = "B after relearning a", ab = "A after relearning b";
      for (const auto& s : {ba, ab}) {
        const double m0 = r.at("000|" + s), m7 = r.at("111|" + s), m6 = r.at("110|" + s), m1 = r.at("001|" + s);
        c5.require(m7 <= m0 - 0.15, s + ": 111 " + fmt(m7) + " vs 000 " + fmt(m0));
        c5.require(m6 <= m1 - 0.10, s + ": 110 " + fmt(m6) + " vs 001 " + fmt(m1));
      }
      double worst = 0.0;
      for (unsigned i = 1; i < 8; ++i) {
        const std::string mask = bigram::ComponentMask::from_index(i).label();
        for (const char* s : {"A", "B"}) worst = std::max(worst, std::abs(u.at(mask + "|" + s) - u.at(std::string("000|") + s)));
      }
      c6.require(worst <= 0.07, "max |mask - 000| unlearned accuracy " + fmt(worst) + " <= 0.07");
    }
    done(5, "Ablation trend", c5);
    done(6, "Pre-relearn mask independence", c6);
  }

  // 7. Gradient oracle.
  {
    Check c;
    const auto t = std::chrono::steady_clock::now();
    Rng rng(20240607);
    double worst_gmm = 0.0, worst_bigram = 0.0;
    std::size_t n_gmm = 0, n_bigram = 0;
    for (std::uint64_t inst = 0; inst < 5; ++inst) {
      const auto spec = gmm::sample_spec(15, inst);
      const auto data = gmm::sample_dataset(spec, gmm::assign_random(spec, inst), 20, 200, inst);
      const auto feats = gmm::feature_matrix(data.points, gmm::RbfGrid{});
      gmm::BceTerm forget{.weight = 1.0}, retain{.weight = 1.0};
      for (std::size_t i = 0; i < data.size(); ++i) {
        auto& term = data.task[i] == gmm::Task::A ? forget : retain;
        term.rows.push_back(i);
        term.targets.push_back(data.task[i] == gmm::Task::A ? 0.0 : data.labels[i]);
      }
      const std::vector<gmm::BceTerm> terms{forget, retain};
      ParamVector theta(145);
      for (double& x : theta) x = 0.5 * standard_normal(rng);
      ParamVector grad;
      gmm::bce_objective(feats, terms, theta, &grad);
      std::vector<std::size_t> coords{144};  // bias
      for (int i = 0; i < 10; ++i) coords.push_back(uniform_index(rng, 144));
      const auto fd = optim::finite_difference_gradient(
          [&](const ParamVector& p) { return gmm::bce_objective(feats, terms, p, nullptr); }, theta, 1e-5, coords);
      for (auto k : coords) worst_gmm = std::max(worst_gmm, rel_error(grad[k], fd[k]));
      n_gmm += coords.size();

      const auto model = bigram::init_transformer(0.25, 1000 + inst);
      const auto batch = bigram::sample_sequences(bigram::base_transition(), 8, inst);
      const auto mask = bigram::mask_all(batch);
      const auto lg = bigram::lm_loss_and_grad(model, batch, mask);
      std::vector<std::size_t> bc;
      for (auto w : bigram::kAllWeights) {
        const auto s = bigram::block_shape(w);
        for (int i = 0; i < 10; ++i) bc.push_back(s.offset + uniform_index(rng, s.rows * s.cols));
      }
      const auto bfd = optim::finite_difference_gradient(
          [&](const ParamVector& p) { return bigram::lm_loss(bigram::AttnTransformer(p), batch, mask); },
          model.params, 1e-5, bc);
      for (auto k : bc) worst_bigram = std::max(worst_bigram, rel_error(lg.grad[k], bfd[k]));
      n_bigram += bc.size();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
    c.require(worst_gmm <= 1e-4, "GMM max rel error " + std::to_string(worst_gmm) + " over " + std::to_string(n_gmm));
    c.require(worst_bigram <= 1e-4,
              "bigram max rel error " + std::to_string(worst_bigram) + " over " + std::to_string(n_bigram));
    c.require(secs < 60.0, "runtime " + fmt(secs) + " s < 60 s");
    done(7, "Gradient oracle", c);
  }

  // 8. Sampler fidelity.
  {
    Check c;
    using bigram::Token;
    const auto base = bigram::base_transition();
    const std::pair<std::string, bigram::TransitionMatrix> mats[] = {
        {"base", base},
        {"flatten{a,b}", bigram::flatten_rows(base, {Token::a, Token::b}, {Token::r})},
        {"flatten{a}", bigram::flatten_rows(base, {Token::a}, {Token::b, Token::r})},
        {"relearn{a}", bigram::relearn_matrix(0.05, {Token::a})},
        {"relearn{b}", bigram::relearn_matrix(0.05, {Token::b})}};
    std::uint64_t seed = 500;
    for (const auto& [name, m] : mats) {
      const auto batch = bigram::sample_sequences(m, 100000 / (bigram::kSeqLen - 1) + 1, ++seed);
      std::array<bigram::Row, bigram::kVocab> counts{};
      for (const auto& s : batch.sequences) {
        for (std::size_t t = 0; t + 1 < bigram::kSeqLen; ++t) counts[bigram::index(s[t])][bigram::index(s[t + 1])] += 1;
      }
      double worst = 0.0;
      for (std::size_t r = 0; r < bigram::kVocab; ++r) {
        const double n = counts[r][0] + counts[r][1] + counts[r][2];
        for (auto& v : counts[r]) v /= n;
        worst = std::max(worst, tv(counts[r], m.rows[r]));
      }
      c.require(worst <= 0.01, name + " tv " + fmt(worst));
    }
    done(8, "Sampler fidelity", c);
  }

  // 9. Recovery rate.
  {
    Check c;
    const auto rr = [](double pu, double pr, double qu, double qr, double f) {
      return eval::recovery_rate(pu, pr, qu, qr, f);
    };
    c.require(rr(0.2, 0.7, 0.2, 0.7, 0.0) == 1.0, "identity = 1");
    const auto below = rr(0.1, 0.5, 0.3, 0.8, 0.25);
    const auto above = rr(0.3, 0.5, 0.3, 0.8, 0.25);
    c.require(below && std::abs(*below - 0.25 / 0.5) < 1e-12, "clamp below floor 0.25");
    c.require(above && std::abs(*above - 0.2 / 0.5) < 1e-12, "no clamp above floor");
    c.require(!rr(0.1, 0.5, 0.4, 0.4, 0.0).has_value(), "zero denominator is undefined");
    c.require(!rr(0.1, 0.5, 0.1, 0.25, 0.25).has_value(), "clamped zero denominator is undefined");
    done(9, "Recovery-rate unit suite", c);
  }

  // 10. Determinism.
  {
    Check c;
    const auto again1 = run(configs / "table1.json", work / "table1-again", 1, false);
    const auto again2 = run(configs / "table2.json", work / "table2-again", 1, false);
    const auto again3 = run(configs / "ablation.json", work / "ablation-again", 1, true);
    c.require(again1.exit_code == 0 && r1.exit_code == 0 &&
                  slurp(work / "table1" / "reports.csv") == slurp(work / "table1-again" / "reports.csv"),
              "table1 reports.csv identical");
    c.require(again2.exit_code == 0 && r2.exit_code == 0 &&
                  slurp(work / "table2" / "reports.csv") == slurp(work / "table2-again" / "reports.csv"),
              "table2 reports.csv identical");
    c.require(again3.exit_code == 0 && r3.exit_code == 0 &&
                  slurp(work / "ablation" / "ablation.csv") == slurp(work / "ablation-again" / "ablation.csv"),
              "ablation.csv identical");

    // k = 1 layered unlearning against standard unlearning, both families.
    const auto same = [](const ParamVector& x, const ParamVector& y) {
      return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
    };
    core::UnlearnConfig h{.steps = 50, .learning_rate = 1e-3, .batch_size = 16, .seed = 7};
    const auto bmodel = bigram::init_transformer(0.25, 1);
    const auto bprim = bigram::bigram_unlearn_primitive();
    using bigram::Token;
    const core::FoldPlan<Token> bplan{{{Token::a, Token::b}}, {Token::r}};
    const auto btraj = core::layered_unlearn<Token>(bmodel.params, bplan, bprim, {h});
    const auto bdirect =
        core::standard_unlearn<Token>(bmodel.params, {Token::a, Token::b}, {Token::r}, bprim, h);
    c.require(same(btraj.final_params(), bdirect), "bigram k=1 bitwise");

    const auto problem = eval::build_gmm_problem(eval::GmmProtocolConfig{}, 1);
    const auto gprim = gmm::gmm_unlearn_primitive(problem);
    const auto ab = problem->dataset.indices_of(gmm::Task::A);
    auto retain = problem->dataset.indices_of(gmm::Task::R);
    const auto null = problem->dataset.indices_of(gmm::Task::Null);
    retain.insert(retain.end(), null.begin(), null.end());
    std::sort(retain.begin(), retain.end());
    ParamVector theta(145, 0.1);
    core::UnlearnConfig gh{.steps = 50, .learning_rate = 0.05, .batch_size = eval::kFullBatch, .seed = 3};
    const core::FoldPlan<std::size_t> gplan{{ab}, retain};
    const auto gtraj = core::layered_unlearn<std::size_t>(theta, gplan, gprim, {gh});
    c.require(same(gtraj.final_params(), core::standard_unlearn<std::size_t>(theta, ab, retain, gprim, gh)),
              "GMM k=1 bitwise");
    done(10, "Determinism", c);
  }

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
