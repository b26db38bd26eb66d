#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "lu/gmm.h"

namespace lu::gmm {

namespace {

constexpr std::size_t kMaxLloydIterations = 100;
constexpr double kCentroidTolerance = 1e-6;
constexpr std::size_t kMaxExactGrouping = 9;

std::size_t nearest(Point p, const std::vector<Point>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<Point> plus_plus_init(std::span<const Point> points, std::size_t k, Rng& rng) {
  std::vector<Point> centroids;
  centroids.reserve(k);
  centroids.push_back(points[uniform_index(rng, points.size())]);
  std::vector<double> d2(points.size());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = squared_distance(points[i], centroids[nearest(points[i], centroids)]);
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = uniform_index(rng, points.size());
    } else {
      const double u = uniform01(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        acc += d2[i];
        if (u < acc) break;
      }
    }
    centroids.push_back(points[pick]);
  }
  return centroids;
}

double grouping_cost(std::span<const Point> centroids, const std::vector<std::size_t>& group,
                     std::size_t groups) {
  std::vector<Point> mean(groups);
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    mean[group[i]].x += centroids[i].x;
    mean[group[i]].y += centroids[i].y;
    ++count[group[i]];
  }
  for (std::size_t g = 0; g < groups; ++g) {
    if (count[g] > 0) {
      mean[g].x /= static_cast<double>(count[g]);
      mean[g].y /= static_cast<double>(count[g]);
    }
  }
  double cost = 0.0;
  for (std::size_t i = 0; i < centroids.size(); ++i) cost += squared_distance(centroids[i], mean[group[i]]);
  return cost;
}

std::vector<std::size_t> exact_grouping(std::span<const Point> centroids, std::size_t groups) {
  const std::size_t n = centroids.size();
  const std::size_t per_group = n / groups;
  std::vector<std::size_t> current(n), best;
  std::vector<std::size_t> used(groups, 0);
  double best_cost = std::numeric_limits<double>::infinity();

  // Lexicographic enumeration; strict improvement keeps the first optimum.
  std::function<void(std::size_t)> recurse = [&](std::size_t i) {
    if (i == n) {
      const double c = grouping_cost(centroids, current, groups);
      if (c < best_cost - 1e-12) {
        best_cost = c;
        best = current;
      }
      return;
    }
    for (std::size_t g = 0; g < groups; ++g) {
      if (used[g] == per_group) continue;
      current[i] = g;
      ++used[g];
      recurse(i + 1);
      --used[g];
    }
  };
  recurse(0);
  return best;
}

std::vector<std::size_t> iterative_grouping(std::span<const Point> centroids, std::size_t groups) {
  const std::size_t n = centroids.size();
  const std::size_t per_group = n / groups;

  // Farthest-point seeds, starting from the leftmost centroid.
  std::vector<Point> seeds;
  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (centroids[i].x < centroids[first].x) first = i;
  }
  seeds.push_back(centroids[first]);
  while (seeds.size() < groups) {
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_distance(centroids[i], seeds[nearest(centroids[i], seeds)]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    seeds.push_back(centroids[far]);
  }

  std::vector<std::size_t> group(n, 0), previous;
  for (std::size_t iter = 0; iter < kMaxLloydIterations && group != previous; ++iter) {
    previous = group;
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t slot = 0; slot < n; ++slot) cost[i][slot] = squared_distance(centroids[i], seeds[slot / per_group]);
    }
    const auto slot_of = solve_assignment(cost);
    for (std::size_t i = 0; i < n; ++i) group[i] = slot_of[i] / per_group;
    for (std::size_t g = 0; g < groups; ++g) {
      Point m;
      for (std::size_t i = 0; i < n; ++i) {
        if (group[i] == g) {
          m.x += centroids[i].x;
          m.y += centroids[i].y;
        }
      }
      seeds[g] = {m.x / static_cast<double>(per_group), m.y / static_cast<double>(per_group)};
    }
  }
  return group;
}

}  // namespace

KMeansResult kmeans(std::span<const Point> points, std::size_t n_clusters, std::uint64_t seed) {
  if (n_clusters == 0 || n_clusters > points.size()) {
    throw ValidationError("kmeans needs 1 <= n_clusters <= number of points");
  }
  Rng rng(seed);
  KMeansResult r;
  r.centroids = plus_plus_init(points, n_clusters, rng);
  r.labels.assign(points.size(), 0);

  for (r.iterations = 1; r.iterations <= kMaxLloydIterations; ++r.iterations) {
    for (std::size_t i = 0; i < points.size(); ++i) r.labels[i] = nearest(points[i], r.centroids);

    std::vector<std::size_t> count(n_clusters, 0);
    for (std::size_t l : r.labels) ++count[l];
    for (std::size_t c = 0; c < n_clusters; ++c) {
      if (count[c] > 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (count[r.labels[i]] <= 1) continue;
        const double d = squared_distance(points[i], r.centroids[r.labels[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --count[r.labels[far]];
      r.labels[far] = c;
      count[c] = 1;
    }

    std::vector<Point> next(n_clusters);
    for (std::size_t i = 0; i < points.size(); ++i) {
      next[r.labels[i]].x += points[i].x;
      next[r.labels[i]].y += points[i].y;
    }
    double moved = 0.0;
    for (std::size_t c = 0; c < n_clusters; ++c) {
      next[c].x /= static_cast<double>(count[c]);
      next[c].y /= static_cast<double>(count[c]);
      moved = std::max(moved, std::sqrt(squared_distance(next[c], r.centroids[c])));
    }
    r.centroids = std::move(next);
    if (moved < kCentroidTolerance) break;
  }
  r.iterations = std::min(r.iterations, kMaxLloydIterations);

  r.inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) r.inertia += squared_distance(points[i], r.centroids[r.labels[i]]);
  return r;
}

std::vector<std::size_t> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return {};
  const std::size_t m = cost.front().size();
  for (const auto& row : cost) {
    if (row.size() != m) throw ValidationError("assignment cost matrix is ragged");
  }
  if (n > m) throw ValidationError("assignment needs rows <= columns");

  // Potentials method, 1-based with a sentinel column 0.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> row_of(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = row_of[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> col_of(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (row_of[j] != 0) col_of[row_of[j] - 1] = j - 1;
  }
  return col_of;
}

std::vector<std::size_t> balanced_grouping(std::span<const Point> centroids, std::size_t groups) {
  if (groups == 0 || centroids.size() % groups != 0 || centroids.empty()) {
    throw ValidationError("cannot split " + std::to_string(centroids.size()) + " clusters evenly into " +
                          std::to_string(groups) + " tasks");
  }
  if (centroids.size() <= kMaxExactGrouping) return exact_grouping(centroids, groups);
  return iterative_grouping(centroids, groups);
}

TaskAssignment assign_kmeans(const GaussianMixtureSpec& spec, std::size_t n_clusters, std::uint64_t seed) {
  if (n_clusters == 0 || n_clusters % 3 != 0) {
    throw ValidationError("n_clusters must be a positive multiple of 3, got " + std::to_string(n_clusters));
  }
  const KMeansResult clusters = kmeans(spec.means, n_clusters, seed);
  const auto group = balanced_grouping(clusters.centroids, 3);
  TaskAssignment out;
  out.task_of_gaussian.resize(spec.size());
  for (std::size_t g = 0; g < spec.size(); ++g) out.task_of_gaussian[g] = static_cast<Task>(group[clusters.labels[g]]);
  return out;
}

}  // namespace lu::gmm
