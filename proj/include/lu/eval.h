#pragma once

// Unlearn-then-relearn protocol, recovery rate and seed aggregation.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lu/bigram.h"
#include "lu/common.h"
#include "lu/core.h"
#include "lu/gmm.h"

namespace lu::eval {

enum class TaskKind { gmm, bigram };
enum class Method { U, LU };
enum class Phase { original, unlearned, relearned };

std::string_view task_kind_name(TaskKind t);
std::string_view method_name(Method m);
std::string_view phase_name(Phase p);
TaskKind parse_task_kind(std::string_view s);
Method parse_method(std::string_view s);
Phase parse_phase(std::string_view s);

inline constexpr std::size_t kFullBatch = std::numeric_limits<std::size_t>::max();

enum class AssignmentScheme { random, kmeans, concentric };

struct GmmProtocolConfig {
  std::size_t n_gaussians = 15;
  double variance = 4.0;
  double perturbation = 0.1;
  AssignmentScheme assignment = AssignmentScheme::random;
  std::size_t n_clusters = 6;  // kmeans only
  std::size_t n_per_gaussian = 200;
  std::size_t n_background = 2000;
  std::size_t n_eval = 500;
  gmm::RbfGrid grid;
  core::UnlearnConfig train{.steps = 500, .learning_rate = 0.05, .batch_size = kFullBatch};
  core::UnlearnConfig unlearn{.steps = 300, .learning_rate = 0.05, .batch_size = kFullBatch};
  core::UnlearnConfig relearn{.steps = 300, .learning_rate = 0.01, .batch_size = kFullBatch};
  /// LU folds in order; U forgets their union in one shot. Never contains R.
  std::vector<std::vector<gmm::Task>> folds{{gmm::Task::A}, {gmm::Task::B}};
  double recovery_floor = 0.0;
};

struct BigramProtocolConfig {
  bigram::TrainConfig train;
  core::UnlearnConfig unlearn{.steps = 1000, .learning_rate = 1e-3, .batch_size = 64};
  bigram::RelearnConfig relearn;
  std::size_t n_eval = 10000;
  /// LU folds in order; tokens outside every fold are retained.
  std::vector<std::vector<bigram::Token>> folds{{bigram::Token::a}, {bigram::Token::b}};
  double recovery_floor = 1.0 / 3.0;
};

using ProtocolConfig = std::variant<GmmProtocolConfig, BigramProtocolConfig>;

TaskKind task_of(const ProtocolConfig& config);
/// Throws ValidationError on an unusable config (empty or overlapping folds, bad sizes).
void validate(const ProtocolConfig& config);
/// Stable hex digest of every field; equal configs give equal ids.
std::string config_fingerprint(const ProtocolConfig& config);

/// A relearning attack: the fold tasks whose data is relearned, by name ("A", "b", ...).
using RelearnTarget = std::vector<std::string>;
/// "A", "A+B"; "none" for the empty target.
std::string subset_label(const RelearnTarget& target);

/// Canonical form of each target (fold-member names in fold order). Throws
/// ValidationError when a target is empty, names a task outside the folds, or
/// covers every fold task.
std::vector<RelearnTarget> resolve_targets(const ProtocolConfig& config, const std::vector<RelearnTarget>& targets);

struct EvalReport {
  TaskKind task = TaskKind::gmm;
  Method method = Method::U;
  Phase phase = Phase::original;
  std::string relearn_subset = "none";
  MetricList metrics;
  std::uint64_t seed = 0;
  std::string config_id;
};

struct Snapshot {
  Method method = Method::U;
  std::string label;  // "original", "stage-1", ..., "relearn-A"
  ParamVector params;
};

struct ProtocolOutcome {
  std::vector<EvalReport> reports;
  std::vector<Snapshot> snapshots;
};

/// Trains theta_0 once, then for each method: unlearn, and relearn each target
/// from the unlearned parameters. U runs k times the per-stage steps in one
/// stage so both methods spend the same total budget. Reports are ordered by
/// method, then original, unlearned, relearned in target order. Targets go
/// through resolve_targets first.
ProtocolOutcome run_protocol(const ProtocolConfig& config, std::span<const Method> methods,
                             const std::vector<RelearnTarget>& targets, std::uint64_t seed);

std::vector<EvalReport> run_protocol(const ProtocolConfig& config, Method method,
                                     const std::vector<RelearnTarget>& targets, std::uint64_t seed);

/// The GMM problem (mixture, assignment, training data) a protocol run uses for `seed`.
std::shared_ptr<const gmm::GmmProblem> build_gmm_problem(const GmmProtocolConfig& config, std::uint64_t seed);

/// (p_relearn - max(p_unlearn, floor)) / (q_relearn - max(q_unlearn, floor)).
/// nullopt when the denominator is within 1e-9 of zero. Throws ValidationError
/// for accuracies or floor outside [0, 1].
std::optional<double> recovery_rate(double p_unlearn, double p_relearn, double q_unlearn, double q_relearn,
                                    double floor);

struct AggregateCell {
  TaskKind task = TaskKind::gmm;
  Method method = Method::U;
  Phase phase = Phase::original;
  std::string relearn_subset;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  double lo = 0.0;   // mean - 2 std
  double hi = 0.0;   // mean + 2 std
  std::size_t n = 0;
};

struct AggregateReport {
  std::vector<AggregateCell> cells;  // in order of first appearance
  std::size_t n_seeds = 0;           // distinct seeds
  std::string config_id;
};

/// Throws ValidationError on an empty list or mixed config ids.
AggregateReport aggregate(std::span<const EvalReport> reports);

/// Columns task,method,phase,relearn_subset,metric_name,value,seed; values as %.17g.
void write_reports_csv(std::ostream& out, std::span<const EvalReport> reports);
/// Columns task,method,phase,relearn_subset,metric_name,mean,std,lo,hi,n.
void write_aggregate_csv(std::ostream& out, const AggregateReport& report);

}  // namespace lu::eval
