#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "lu/eval.h"

namespace lu::eval {

namespace {

void check_floor(double floor) {
  if (!(floor >= 0.0 && floor <= 1.0)) throw ValidationError("recovery_floor must lie in [0, 1]");
}

void check_stage(const core::UnlearnConfig& c, std::string_view what) {
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(what) + ": " + e.what());
  }
}

template <typename T, typename NameFn>
void check_folds(const std::vector<std::vector<T>>& folds, NameFn name) {
  if (folds.empty()) throw ValidationError("fold plan needs at least one fold");
  std::set<std::string> seen;
  for (const auto& fold : folds) {
    if (fold.empty()) throw ValidationError("folds must be non-empty");
    for (const T& t : fold) {
      if (!seen.insert(std::string(name(t))).second) {
        throw ValidationError("'" + std::string(name(t)) + "' appears in more than one fold");
      }
    }
  }
}

void validate_gmm(const GmmProtocolConfig& c) {
  if (c.assignment != AssignmentScheme::concentric) {
    if (c.n_gaussians < 3) throw ValidationError("n_gaussians must be >= 3");
    if (!(c.variance > 0.0)) throw ValidationError("variance must be positive");
    if (!(c.perturbation >= 0.0)) throw ValidationError("perturbation must be >= 0");
  }
  if (c.assignment == AssignmentScheme::kmeans) {
    if (c.n_clusters == 0 || c.n_clusters % 3 != 0) throw ValidationError("n_clusters must be a positive multiple of 3");
    if (c.n_clusters > c.n_gaussians) throw ValidationError("n_clusters cannot exceed n_gaussians");
  }
  if (c.n_per_gaussian == 0 || c.n_background == 0) throw ValidationError("sample counts must be >= 1");
  if (c.n_eval < 100) throw ValidationError("n_eval must be >= 100 for the GMM task");
  if (c.grid.per_axis == 0 || !(c.grid.bandwidth > 0.0) || !(c.grid.spacing > 0.0)) {
    throw ValidationError("RBF grid needs per_axis >= 1 and positive spacing and bandwidth");
  }
  check_stage(c.train, "train");
  check_stage(c.unlearn, "unlearn");
  check_stage(c.relearn, "relearn");
  check_folds(c.folds, gmm::task_name);
  for (const auto& fold : c.folds) {
    for (gmm::Task t : fold) {
      if (t != gmm::Task::A && t != gmm::Task::B) throw ValidationError("GMM folds may only contain tasks A and B");
    }
  }
  check_floor(c.recovery_floor);
}

void validate_bigram(const BigramProtocolConfig& c) {
  bigram::base_transition(c.train.epsilon);
  bigram::base_transition(c.relearn.epsilon);
  if (!(c.train.init_std > 0.0)) throw ValidationError("init_std must be positive");
  if (c.n_eval < 1000) throw ValidationError("n_eval must be >= 1000 for the bigram task");
  check_stage(c.train.stage, "train");
  check_stage(c.unlearn, "unlearn");
  check_stage(c.relearn.stage, "relearn");
  check_folds(c.folds, bigram::token_name);
  check_floor(c.recovery_floor);
}

void put(std::ostringstream& os, std::string_view key, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << key << '=' << buf << ';';
}

void put(std::ostringstream& os, std::string_view key, std::size_t v) { os << key << '=' << v << ';'; }

void put(std::ostringstream& os, std::string_view key, const core::UnlearnConfig& c) {
  os << key << "{";
  put(os, "steps", c.steps);
  put(os, "lr", c.learning_rate);
  put(os, "batch", c.batch_size);
  os << "seed=" << c.seed << ';';
  for (const auto& [name, w] : c.loss_weights) put(os, "w." + name, w);
  os << "};";
}

template <typename T, typename NameFn>
void put_folds(std::ostringstream& os, const std::vector<std::vector<T>>& folds, NameFn name) {
  os << "folds=";
  for (const auto& fold : folds) {
    os << '[';
    for (const T& t : fold) os << name(t) << ',';
    os << ']';
  }
  os << ';';
}

std::string describe(const GmmProtocolConfig& c) {
  std::ostringstream os;
  os << "gmm;";
  put(os, "n_gaussians", c.n_gaussians);
  put(os, "variance", c.variance);
  put(os, "perturbation", c.perturbation);
  put(os, "assignment", static_cast<std::size_t>(c.assignment));
  put(os, "n_clusters", c.n_clusters);
  put(os, "n_per_gaussian", c.n_per_gaussian);
  put(os, "n_background", c.n_background);
  put(os, "n_eval", c.n_eval);
  put(os, "grid.per_axis", c.grid.per_axis);
  put(os, "grid.first", c.grid.first);
  put(os, "grid.spacing", c.grid.spacing);
  put(os, "grid.bandwidth", c.grid.bandwidth);
  put(os, "train", c.train);
  put(os, "unlearn", c.unlearn);
  put(os, "relearn", c.relearn);
  put_folds(os, c.folds, gmm::task_name);
  put(os, "floor", c.recovery_floor);
  return os.str();
}

std::string describe(const BigramProtocolConfig& c) {
  std::ostringstream os;
  os << "bigram;";
  put(os, "train", c.train.stage);
  put(os, "init_std", c.train.init_std);
  put(os, "epsilon", c.train.epsilon);
  put(os, "unlearn", c.unlearn);
  put(os, "relearn", c.relearn.stage);
  put(os, "relearn.epsilon", c.relearn.epsilon);
  put(os, "relearn.masked", static_cast<std::size_t>(c.relearn.masked));
  put(os, "n_eval", c.n_eval);
  put_folds(os, c.folds, bigram::token_name);
  put(os, "floor", c.recovery_floor);
  return os.str();
}

// Canonical fold-member names of each target, in fold order.
template <typename T, typename ParseFn, typename NameFn>
std::vector<RelearnTarget> resolve_in(const std::vector<std::vector<T>>& folds,
                                      const std::vector<RelearnTarget>& targets, ParseFn parse, NameFn name) {
  std::vector<std::string> members;
  for (const auto& fold : folds) {
    for (const T& t : fold) members.emplace_back(name(t));
  }
  std::vector<RelearnTarget> out;
  for (const auto& target : targets) {
    if (target.empty()) throw ValidationError("relearn target must name at least one task");
    std::set<std::string> wanted;
    for (const auto& raw : target) {
      const std::string canon(name(parse(raw)));
      if (std::find(members.begin(), members.end(), canon) == members.end()) {
        throw ValidationError("relearn target '" + raw + "' is not part of any forget fold");
      }
      wanted.insert(canon);
    }
    if (wanted.size() == members.size()) {
      throw ValidationError("relearn target " + subset_label(target) +
                            " covers every forget fold; it must be a proper subset");
    }
    RelearnTarget canon;
    for (const auto& m : members) {
      if (wanted.count(m)) canon.push_back(m);
    }
    out.push_back(std::move(canon));
  }
  return out;
}

template <typename Example>
struct Session {
  ParamVector theta0;
  core::FoldPlan<Example> plan;
  core::UnlearnPrimitive<Example> primitive;
  core::UnlearnConfig unlearn;
  std::function<MetricList(const ParamVector&)> evaluate;
  std::function<ParamVector(const ParamVector&, const RelearnTarget&, std::uint64_t)> relearn;
};

template <typename Example>
ProtocolOutcome drive(const Session<Example>& s, TaskKind task, std::span<const Method> methods,
                      const std::vector<RelearnTarget>& targets, std::uint64_t seed, const std::string& config_id) {
  ProtocolOutcome out;
  const MetricList original = s.evaluate(s.theta0);
  const auto report = [&](Method m, Phase p, std::string subset, MetricList metrics) {
    out.reports.push_back({task, m, p, std::move(subset), std::move(metrics), seed, config_id});
  };

  core::UnlearnConfig base = s.unlearn;
  base.seed = derive_seed(seed, "unlearn");
  for (Method m : methods) {
    report(m, Phase::original, "none", original);
    out.snapshots.push_back({m, "original", s.theta0});

    ParamVector unlearned;
    if (m == Method::U) {
      typename core::ExampleSet<Example> forget;
      for (const auto& f : s.plan.folds) forget = core::detail::set_union(forget, core::detail::normalized(f));
      // Same total step budget as the k LU stages.
      core::UnlearnConfig single = base;
      single.steps = base.steps * s.plan.k();
      unlearned = core::standard_unlearn(s.theta0, forget, s.plan.retain, s.primitive, single);
      out.snapshots.push_back({m, "stage-1", unlearned});
    } else {
      auto traj = core::layered_unlearn(s.theta0, s.plan, s.primitive, core::replicate_config(base, s.plan.k()));
      for (std::size_t i = 1; i < traj.stage_params.size(); ++i) {
        out.snapshots.push_back({m, "stage-" + std::to_string(i), traj.stage_params[i]});
      }
      unlearned = traj.final_params();
    }
    report(m, Phase::unlearned, "none", s.evaluate(unlearned));

    for (const auto& target : targets) {
      const std::string label = subset_label(target);
      // Every attack restarts from the unlearned parameters with a seed that
      // depends only on the target, so attacks are independent of each other.
      ParamVector relearned = s.relearn(unlearned, target, derive_seed(seed, "relearn-" + label));
      report(m, Phase::relearned, label, s.evaluate(relearned));
      out.snapshots.push_back({m, "relearn-" + label, std::move(relearned)});
    }
  }
  return out;
}

ProtocolOutcome run_gmm(const GmmProtocolConfig& c, std::span<const Method> methods,
                        const std::vector<RelearnTarget>& targets, std::uint64_t seed, const std::string& id) {
  const auto problem = build_gmm_problem(c, seed);
  const auto& data = problem->dataset;

  core::UnlearnConfig train = c.train;
  train.seed = derive_seed(seed, "train");

  Session<std::size_t> s;
  s.theta0 = gmm::train_classifier(data, c.grid, train).params;
  for (const auto& fold : c.folds) {
    core::ExampleSet<std::size_t> points;
    for (gmm::Task t : fold) points = core::detail::set_union(points, data.indices_of(t));
    s.plan.folds.push_back(std::move(points));
  }
  s.plan.retain = core::detail::set_union(data.indices_of(gmm::Task::R), data.indices_of(gmm::Task::Null));
  s.primitive = gmm::gmm_unlearn_primitive(problem);
  s.unlearn = c.unlearn;
  const std::uint64_t eval_seed = derive_seed(seed, "eval");
  s.evaluate = [&](const ParamVector& p) {
    return gmm::eval_gmm(gmm::RbfClassifier(c.grid, p), problem->spec, problem->assignment, c.n_eval, eval_seed)
        .to_metrics();
  };
  s.relearn = [&](const ParamVector& theta, const RelearnTarget& target, std::uint64_t rseed) {
    std::vector<std::size_t> points;
    for (const auto& name : target) points = core::detail::set_union(points, data.indices_of(gmm::parse_task(name)));
    core::UnlearnConfig cfg = c.relearn;
    cfg.seed = rseed;
    return gmm::gmm_relearn(theta, points, *problem, cfg);
  };
  return drive(s, TaskKind::gmm, methods, targets, seed, id);
}

ProtocolOutcome run_bigram(const BigramProtocolConfig& c, std::span<const Method> methods,
                           const std::vector<RelearnTarget>& targets, std::uint64_t seed, const std::string& id) {
  using bigram::Token;
  Session<Token> s;
  s.theta0 = bigram::train_base(c.train, seed).params;
  bigram::TokenSet in_folds;
  for (const auto& fold : c.folds) {
    s.plan.folds.push_back(core::detail::normalized(fold));
    in_folds = core::detail::set_union(in_folds, s.plan.folds.back());
  }
  for (Token t : {Token::a, Token::b, Token::r}) {
    if (!std::binary_search(in_folds.begin(), in_folds.end(), t)) s.plan.retain.push_back(t);
  }
  s.primitive = bigram::bigram_unlearn_primitive(c.train.epsilon);
  s.unlearn = c.unlearn;
  const std::uint64_t eval_seed = derive_seed(seed, "eval");
  s.evaluate = [&](const ParamVector& p) {
    return bigram::eval_bigram(bigram::AttnTransformer(p), c.n_eval, eval_seed).to_metrics();
  };
  s.relearn = [&](const ParamVector& theta, const RelearnTarget& target, std::uint64_t rseed) {
    bigram::TokenSet tokens;
    for (const auto& name : target) tokens.push_back(bigram::parse_token(name));
    bigram::RelearnConfig cfg = c.relearn;
    cfg.stage.seed = rseed;
    return bigram::bigram_relearn(bigram::AttnTransformer(theta), core::detail::normalized(tokens), cfg).params;
  };
  return drive(s, TaskKind::bigram, methods, targets, seed, id);
}

}  // namespace

TaskKind task_of(const ProtocolConfig& config) {
  return std::holds_alternative<GmmProtocolConfig>(config) ? TaskKind::gmm : TaskKind::bigram;
}

void validate(const ProtocolConfig& config) {
  std::visit(
      [](const auto& c) {
        if constexpr (std::is_same_v<std::decay_t<decltype(c)>, GmmProtocolConfig>) {
          validate_gmm(c);
        } else {
          validate_bigram(c);
        }
      },
      config);
}

std::string config_fingerprint(const ProtocolConfig& config) {
  const std::string text = std::visit([](const auto& c) { return describe(c); }, config);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(text));
  return buf;
}

std::vector<RelearnTarget> resolve_targets(const ProtocolConfig& config, const std::vector<RelearnTarget>& targets) {
  if (const auto* g = std::get_if<GmmProtocolConfig>(&config)) {
    return resolve_in(g->folds, targets, gmm::parse_task, gmm::task_name);
  }
  return resolve_in(std::get<BigramProtocolConfig>(config).folds, targets, bigram::parse_token, bigram::token_name);
}

std::shared_ptr<const gmm::GmmProblem> build_gmm_problem(const GmmProtocolConfig& c, std::uint64_t seed) {
  gmm::GaussianMixtureSpec spec;
  gmm::TaskAssignment assignment;
  switch (c.assignment) {
    case AssignmentScheme::concentric:
      std::tie(spec, assignment) = gmm::concentric_layout();
      break;
    case AssignmentScheme::random:
      spec = gmm::sample_spec(c.n_gaussians, derive_seed(seed, "spec"), c.variance, c.perturbation);
      assignment = gmm::assign_random(spec, derive_seed(seed, "assign"));
      break;
    case AssignmentScheme::kmeans:
      spec = gmm::sample_spec(c.n_gaussians, derive_seed(seed, "spec"), c.variance, c.perturbation);
      assignment = gmm::assign_kmeans(spec, c.n_clusters, derive_seed(seed, "assign"));
      break;
  }
  auto data = gmm::sample_dataset(spec, assignment, c.n_per_gaussian, c.n_background, derive_seed(seed, "data"));
  return gmm::make_problem(std::move(spec), std::move(assignment), std::move(data), c.grid);
}

ProtocolOutcome run_protocol(const ProtocolConfig& config, std::span<const Method> methods,
                             const std::vector<RelearnTarget>& targets, std::uint64_t seed) {
  validate(config);
  const std::string id = config_fingerprint(config);
  const auto resolved = resolve_targets(config, targets);
  if (const auto* g = std::get_if<GmmProtocolConfig>(&config)) return run_gmm(*g, methods, resolved, seed, id);
  return run_bigram(std::get<BigramProtocolConfig>(config), methods, resolved, seed, id);
}

std::vector<EvalReport> run_protocol(const ProtocolConfig& config, Method method,
                                     const std::vector<RelearnTarget>& targets, std::uint64_t seed) {
  const Method one[] = {method};
  return run_protocol(config, one, targets, seed).reports;
}

}  // namespace lu::eval
