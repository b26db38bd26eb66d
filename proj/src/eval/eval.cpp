#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <tuple>

#include "lu/eval.h"

namespace lu::eval {

std::string_view task_kind_name(TaskKind t) { return t == TaskKind::gmm ? "gmm" : "bigram"; }

std::string_view method_name(Method m) { return m == Method::U ? "U" : "LU"; }

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::original:
      return "original";
    case Phase::unlearned:
      return "unlearned";
    case Phase::relearned:
      return "relearned";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view s) {
  if (s == "gmm") return TaskKind::gmm;
  if (s == "bigram") return TaskKind::bigram;
  throw ValidationError("unknown task '" + std::string(s) + "' (expected gmm or bigram)");
}

Method parse_method(std::string_view s) {
  if (s == "U") return Method::U;
  if (s == "LU") return Method::LU;
  throw ValidationError("unknown method '" + std::string(s) + "' (expected U or LU)");
}

Phase parse_phase(std::string_view s) {
  if (s == "original") return Phase::original;
  if (s == "unlearned") return Phase::unlearned;
  if (s == "relearned") return Phase::relearned;
  throw ValidationError("unknown phase '" + std::string(s) + "'");
}

std::string subset_label(const RelearnTarget& target) {
  if (target.empty()) return "none";
  std::string out;
  for (const auto& t : target) {
    if (!out.empty()) out += '+';
    out += t;
  }
  return out;
}

std::optional<double> recovery_rate(double p_unlearn, double p_relearn, double q_unlearn, double q_relearn,
                                    double floor) {
  for (double v : {p_unlearn, p_relearn, q_unlearn, q_relearn, floor}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("recovery_rate inputs must lie in [0, 1]");
  }
  const double den = q_relearn - std::max(q_unlearn, floor);
  if (std::abs(den) < 1e-9) return std::nullopt;
  return (p_relearn - std::max(p_unlearn, floor)) / den;
}

AggregateReport aggregate(std::span<const EvalReport> reports) {
  if (reports.empty()) throw ValidationError("aggregate needs at least one report");
  AggregateReport out;
  out.config_id = reports.front().config_id;

  using Key = std::tuple<TaskKind, Method, Phase, std::string, std::string>;
  std::map<Key, std::size_t> index;
  // Welford accumulators per cell.
  std::vector<double> m2;
  std::set<std::uint64_t> seeds;
  for (const auto& r : reports) {
    if (r.config_id != out.config_id) {
      throw ValidationError("cannot aggregate reports from different configs (" + out.config_id + " vs " +
                            r.config_id + ")");
    }
    seeds.insert(r.seed);
    for (const auto& m : r.metrics) {
      const Key key{r.task, r.method, r.phase, r.relearn_subset, m.name};
      auto [it, inserted] = index.emplace(key, out.cells.size());
      if (inserted) {
        out.cells.push_back({r.task, r.method, r.phase, r.relearn_subset, m.name});
        m2.push_back(0.0);
      }
      AggregateCell& c = out.cells[it->second];
      ++c.n;
      const double delta = m.value - c.mean;
      c.mean += delta / static_cast<double>(c.n);
      m2[it->second] += delta * (m.value - c.mean);
    }
  }
  for (std::size_t i = 0; i < out.cells.size(); ++i) {
    AggregateCell& c = out.cells[i];
    c.std = c.n > 1 ? std::sqrt(std::max(0.0, m2[i] / static_cast<double>(c.n - 1))) : 0.0;
    c.lo = c.mean - 2.0 * c.std;
    c.hi = c.mean + 2.0 * c.std;
  }
  out.n_seeds = seeds.size();
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_reports_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "task,method,phase,relearn_subset,metric_name,value,seed\n";
  for (const auto& r : reports) {
    for (const auto& m : r.metrics) {
      out << task_kind_name(r.task) << ',' << method_name(r.method) << ',' << phase_name(r.phase) << ','
          << r.relearn_subset << ',' << m.name << ',' << fmt(m.value) << ',' << r.seed << '\n';
    }
  }
}

void write_aggregate_csv(std::ostream& out, const AggregateReport& report) {
  out << "task,method,phase,relearn_subset,metric_name,mean,std,lo,hi,n\n";
  for (const auto& c : report.cells) {
    out << task_kind_name(c.task) << ',' << method_name(c.method) << ',' << phase_name(c.phase) << ','
        << c.relearn_subset << ',' << c.metric << ',' << fmt(c.mean) << ',' << fmt(c.std) << ',' << fmt(c.lo)
        << ',' << fmt(c.hi) << ',' << c.n << '\n';
  }
}

}  // namespace lu::eval
