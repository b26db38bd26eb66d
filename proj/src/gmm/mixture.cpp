#include <algorithm>
#include <cmath>
#include <numeric>

#include "internal.h"

namespace lu::gmm {

std::array<double, 2> Cov2::eigenvalues() const {
  const double mean = 0.5 * (xx + yy);
  const double half_diff = 0.5 * (xx - yy);
  const double radius = std::sqrt(half_diff * half_diff + xy * xy);
  return {mean - radius, mean + radius};
}

std::string_view task_name(Task task) {
  switch (task) {
    case Task::A:
      return "A";
    case Task::B:
      return "B";
    case Task::R:
      return "R";
    case Task::Null:
      return "Null";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "A") return Task::A;
  if (name == "B") return Task::B;
  if (name == "R") return Task::R;
  if (name == "Null") return Task::Null;
  throw ValidationError("unknown task '" + std::string(name) + "'");
}

GaussianMixtureSpec sample_spec(std::size_t n_gaussians, std::uint64_t seed, double variance,
                                double perturbation) {
  if (n_gaussians < 3) throw ValidationError("need at least 3 Gaussians (one per task)");
  if (!(variance > 0.0)) throw ValidationError("variance must be positive");

  constexpr int kMaxRetries = 16;
  GaussianMixtureSpec spec;
  spec.variance = variance;
  spec.perturbation = perturbation;
  Rng rng(seed);
  for (std::size_t i = 0; i < n_gaussians; ++i) {
    spec.means.push_back({uniform(rng, spec.mean_bounds.lo, spec.mean_bounds.hi),
                          uniform(rng, spec.mean_bounds.lo, spec.mean_bounds.hi)});
  }
  for (std::size_t i = 0; i < n_gaussians; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
      Cov2 c;
      c.xx = variance + uniform(rng, -perturbation, perturbation);
      c.yy = variance + uniform(rng, -perturbation, perturbation);
      c.xy = uniform(rng, -perturbation, perturbation);
      if (c.eigenvalues()[0] > 0.0) {
        spec.covariances.push_back(c);
        ok = true;
      }
    }
    if (!ok) {
      throw ValidationError("covariance of Gaussian " + std::to_string(i) +
                            " not positive-definite after perturbation");
    }
  }
  return spec;
}

std::vector<std::size_t> TaskAssignment::gaussians_in(Task task) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < task_of_gaussian.size(); ++i) {
    if (task_of_gaussian[i] == task) out.push_back(i);
  }
  return out;
}

TaskAssignment assign_random(const GaussianMixtureSpec& spec, std::uint64_t seed) {
  const std::size_t n = spec.size();
  if (n < 3) throw ValidationError("need at least 3 Gaussians to assign three tasks");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  TaskAssignment out;
  out.task_of_gaussian.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.task_of_gaussian[order[i]] = static_cast<Task>(i % 3);
  return out;
}

std::pair<GaussianMixtureSpec, TaskAssignment> concentric_layout() {
  constexpr double kPi = 3.14159265358979323846;
  GaussianMixtureSpec spec;
  TaskAssignment assignment;
  const auto add = [&](Point p, Task t) {
    spec.means.push_back(p);
    spec.covariances.push_back({spec.variance, 0.0, spec.variance});
    assignment.task_of_gaussian.push_back(t);
  };
  add({0.0, 0.0}, Task::A);
  for (int i = 0; i < 6; ++i) {
    const double a = 2.0 * kPi * i / 6.0;
    add({20.0 * std::cos(a), 20.0 * std::sin(a)}, Task::B);
  }
  for (int i = 0; i < 10; ++i) {
    const double a = 2.0 * kPi * (i + 0.5) / 10.0;
    add({40.0 * std::cos(a), 40.0 * std::sin(a)}, Task::R);
  }
  return {spec, assignment};
}

std::vector<std::size_t> GmmDataset::indices_of(Task t) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < task.size(); ++i) {
    if (task[i] == t) out.push_back(i);
  }
  return out;
}

namespace {

Point sample_gaussian(Rng& rng, Point mean, const Cov2& c) {
  // Cholesky factor of [[xx, xy], [xy, yy]].
  const double l11 = std::sqrt(c.xx);
  const double l21 = c.xy / l11;
  const double l22 = std::sqrt(c.yy - l21 * l21);
  const double z1 = standard_normal(rng);
  const double z2 = standard_normal(rng);
  return {mean.x + l11 * z1, mean.y + l21 * z1 + l22 * z2};
}

}  // namespace

GmmDataset sample_dataset(const GaussianMixtureSpec& spec, const TaskAssignment& assignment,
                          std::size_t n_per_gaussian, std::size_t n_background, std::uint64_t seed) {
  if (n_per_gaussian == 0 || n_background == 0) throw ValidationError("sample counts must be >= 1");
  if (assignment.task_of_gaussian.size() != spec.size()) {
    throw ValidationError("task assignment does not cover every Gaussian");
  }
  GmmDataset d;
  const std::size_t total = spec.size() * n_per_gaussian + n_background;
  d.points.reserve(total);
  d.labels.reserve(total);
  d.source.reserve(total);
  d.task.reserve(total);
  Rng rng(seed);
  for (std::size_t g = 0; g < spec.size(); ++g) {
    for (std::size_t i = 0; i < n_per_gaussian; ++i) {
      d.points.push_back(sample_gaussian(rng, spec.means[g], spec.covariances[g]));
      d.labels.push_back(1);
      d.source.push_back(g);
      d.task.push_back(assignment.task_of_gaussian[g]);
    }
  }
  for (std::size_t i = 0; i < n_background; ++i) {
    d.points.push_back({uniform(rng, spec.background.lo, spec.background.hi),
                        uniform(rng, spec.background.lo, spec.background.hi)});
    d.labels.push_back(0);
    d.source.push_back(kBackgroundSource);
    d.task.push_back(Task::Null);
  }
  return d;
}

namespace detail {
Point sample_from(Rng& rng, const GaussianMixtureSpec& spec, std::size_t g) {
  return sample_gaussian(rng, spec.means[g], spec.covariances[g]);
}
}  // namespace detail

}  // namespace lu::gmm
