#include <cmath>
#include <iostream>

#include "internal.h"
#include "lu/optim.h"

namespace lu::gmm {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Point RbfGrid::center(std::size_t index) const {
  const std::size_t row = index / per_axis;
  const std::size_t col = index % per_axis;
  return {first + spacing * static_cast<double>(col), first + spacing * static_cast<double>(row)};
}

std::vector<double> rbf_features(Point x, const RbfGrid& grid) {
  std::vector<double> f(grid.n_params());
  const double denom = 2.0 * grid.bandwidth * grid.bandwidth;
  for (std::size_t j = 0; j < grid.n_centers(); ++j) f[j] = std::exp(-squared_distance(x, grid.center(j)) / denom);
  f.back() = 1.0;
  return f;
}

FeatureMatrix feature_matrix(std::span<const Point> points, const RbfGrid& grid) {
  FeatureMatrix m;
  m.rows = points.size();
  m.cols = grid.n_params();
  m.data.reserve(m.rows * m.cols);
  for (const Point& p : points) {
    const auto f = rbf_features(p, grid);
    m.data.insert(m.data.end(), f.begin(), f.end());
  }
  return m;
}

RbfClassifier::RbfClassifier(RbfGrid g, ParamVector p) : grid(g), params(std::move(p)) {
  if (params.size() != grid.n_params()) {
    throw ValidationError("RBF classifier expects " + std::to_string(grid.n_params()) + " parameters, got " +
                          std::to_string(params.size()));
  }
}

double RbfClassifier::logit(Point x) const { return dot(rbf_features(x, grid), params); }

double RbfClassifier::probability(Point x) const { return sigmoid(logit(x)); }

double bce_objective(const FeatureMatrix& features, std::span<const BceTerm> terms, const ParamVector& params,
                     ParamVector* grad) {
  if (params.size() != features.cols) throw ValidationError("parameter/feature dimension mismatch");
  if (grad) grad->assign(features.cols, 0.0);
  double loss = 0.0;
  for (const BceTerm& term : terms) {
    if (term.rows.empty()) continue;
    const double scale = term.weight / static_cast<double>(term.rows.size());
    for (std::size_t k = 0; k < term.rows.size(); ++k) {
      const auto f = features.row(term.rows[k]);
      const double z = dot(f, params);
      const double t = term.targets[k];
      loss += scale * (softplus(z) - t * z);
      if (grad) {
        const double dz = scale * (sigmoid(z) - t);
        for (std::size_t j = 0; j < f.size(); ++j) (*grad)[j] += dz * f[j];
      }
    }
  }
  return loss;
}

ParamVector optimize_bce(const FeatureMatrix& features, std::span<const BceTerm> terms, ParamVector init,
                         const core::UnlearnConfig& config, std::vector<double>* trace) {
  config.validate(/*allow_zero_steps=*/true);
  if (config.steps == 0) return init;

  bool full_batch = true;
  for (const auto& t : terms) full_batch = full_batch && config.batch_size >= t.rows.size();

  auto state = optim::AdamState::fresh(init.size(), config.learning_rate);
  Rng rng(config.seed);
  ParamVector grad;
  std::vector<BceTerm> batch;
  for (std::size_t step = 0; step < config.steps; ++step) {
    double loss = 0.0;
    if (full_batch) {
      loss = bce_objective(features, terms, init, &grad);
    } else {
      batch.assign(terms.size(), {});
      for (std::size_t i = 0; i < terms.size(); ++i) {
        const auto& t = terms[i];
        batch[i].weight = t.weight;
        const std::size_t n = std::min(config.batch_size, t.rows.size());
        for (std::size_t k = 0; k < n && !t.rows.empty(); ++k) {
          const std::size_t pick = uniform_index(rng, t.rows.size());
          batch[i].rows.push_back(t.rows[pick]);
          batch[i].targets.push_back(t.targets[pick]);
        }
      }
      loss = bce_objective(features, batch, init, &grad);
    }
    if (!std::isfinite(loss)) throw NumericalError("non-finite BCE loss at step " + std::to_string(step));
    if (trace) trace->push_back(loss);
    optim::adam_update(state, init, grad);
  }
  return init;
}

RbfClassifier train_classifier(const GmmDataset& dataset, const RbfGrid& grid, const core::UnlearnConfig& config,
                               std::vector<double>* trace) {
  bool has0 = false;
  bool has1 = false;
  for (int l : dataset.labels) {
    has0 = has0 || l == 0;
    has1 = has1 || l == 1;
  }
  if (!has0 || !has1) throw ValidationError("training data must contain both classes");
  const FeatureMatrix features = feature_matrix(dataset.points, grid);
  BceTerm all;
  all.rows.resize(dataset.size());
  all.targets.resize(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    all.rows[i] = i;
    all.targets[i] = dataset.labels[i];
  }
  const std::vector<BceTerm> terms{std::move(all)};
  return RbfClassifier(grid, optimize_bce(features, terms, ParamVector(grid.n_params(), 0.0), config, trace));
}

std::shared_ptr<const GmmProblem> make_problem(GaussianMixtureSpec spec, TaskAssignment assignment,
                                               GmmDataset dataset, RbfGrid grid) {
  auto p = std::make_shared<GmmProblem>();
  p->features = feature_matrix(dataset.points, grid);
  p->spec = std::move(spec);
  p->assignment = std::move(assignment);
  p->dataset = std::move(dataset);
  p->grid = grid;
  return p;
}

core::UnlearnPrimitive<std::size_t> gmm_unlearn_primitive(std::shared_ptr<const GmmProblem> problem) {
  return [problem](const ParamVector& theta, const core::ExampleSet<std::size_t>& forget,
                   const core::ExampleSet<std::size_t>& retain, const core::UnlearnConfig& hyper) {
    if (hyper.steps == 0) return theta;
    if (forget.empty()) std::clog << "gmm unlearn: empty forget set, running retain-only polish\n";
    std::vector<BceTerm> terms(2);
    terms[0].weight = hyper.weight("forget");
    terms[0].rows = forget;
    terms[0].targets.assign(forget.size(), 0.0);
    terms[1].weight = hyper.weight("retain");
    terms[1].rows = retain;
    for (std::size_t i : retain) terms[1].targets.push_back(problem->dataset.labels.at(i));
    return optimize_bce(problem->features, terms, theta, hyper);
  };
}

ParamVector gmm_relearn(const ParamVector& theta, const std::vector<std::size_t>& relearn_points,
                        const GmmProblem& problem, const core::UnlearnConfig& config) {
  if (relearn_points.empty() || config.steps == 0) return theta;
  BceTerm term;
  term.rows = relearn_points;
  for (std::size_t i : relearn_points) term.targets.push_back(problem.dataset.labels.at(i));
  const std::vector<BceTerm> terms{std::move(term)};
  return optimize_bce(problem.features, terms, theta, config);
}

MetricList GmmAccuracy::to_metrics() const { return {{"A", a}, {"B", b}, {"R", retain}}; }

GmmAccuracy eval_gmm(const RbfClassifier& model, const GaussianMixtureSpec& spec, const TaskAssignment& assignment,
                     std::size_t n_eval, std::uint64_t seed) {
  if (n_eval < 100) throw ValidationError("eval_gmm needs n_eval >= 100");
  const auto hit_rate = [&](Task t) {
    const auto members = assignment.gaussians_in(t);
    if (members.empty()) throw ValidationError("task " + std::string(task_name(t)) + " has no Gaussians");
    Rng rng(derive_seed(seed, task_name(t)));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_eval; ++i) {
      const Point p = detail::sample_from(rng, spec, members[uniform_index(rng, members.size())]);
      hits += model.probability(p) > 0.5 ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(n_eval);
  };
  GmmAccuracy acc;
  acc.a = hit_rate(Task::A);
  acc.b = hit_rate(Task::B);
  const double r_hits = hit_rate(Task::R);
  Rng rng(derive_seed(seed, "background"));
  std::size_t rejected = 0;
  for (std::size_t i = 0; i < n_eval; ++i) {
    const Point p{uniform(rng, spec.background.lo, spec.background.hi),
                  uniform(rng, spec.background.lo, spec.background.hi)};
    rejected += model.probability(p) > 0.5 ? 0 : 1;
  }
  acc.retain = 0.5 * (r_hits + static_cast<double>(rejected) / static_cast<double>(n_eval));
  return acc;
}

std::vector<std::vector<double>> weight_heatmap(const RbfClassifier& model) {
  const std::size_t n = model.grid.per_axis;
  std::vector<std::vector<double>> grid(n, std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) grid[r][c] = model.params[r * n + c];
  }
  return grid;
}

std::vector<double> logit_slice(const RbfClassifier& model, std::span<const double> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(model.logit({x, 0.0}));
  return out;
}

}  // namespace lu::gmm
