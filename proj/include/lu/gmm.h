#pragma once

// 2D mixture-of-Gaussians classification testbed: Gaussians (class 1) against
// a uniform background (class 0), classified by logistic regression on a
// 12x12 grid of radial basis functions.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lu/common.h"
#include "lu/core.h"

namespace lu::gmm {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double squared_distance(Point a, Point b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

/// Symmetric 2x2 covariance.
struct Cov2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  std::array<double, 2> eigenvalues() const;
};

/// Task label of a Gaussian; Null marks background points.
enum class Task : std::uint8_t { A = 0, B = 1, R = 2, Null = 3 };

std::string_view task_name(Task task);
/// Accepts "A", "B", "R", "Null"; throws ValidationError otherwise.
Task parse_task(std::string_view name);

struct Square {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(Point p) const { return p.x >= lo && p.x <= hi && p.y >= lo && p.y <= hi; }
};

struct GaussianMixtureSpec {
  std::vector<Point> means;
  std::vector<Cov2> covariances;
  double variance = 4.0;
  double perturbation = 0.1;
  Square background{-60.0, 60.0};
  Square mean_bounds{-50.0, 50.0};

  std::size_t size() const { return means.size(); }
};

/// Means i.i.d. uniform over the mean bounds; covariance = variance * I plus a
/// symmetric perturbation whose entries are uniform in [-perturbation, perturbation].
GaussianMixtureSpec sample_spec(std::size_t n_gaussians, std::uint64_t seed, double variance = 4.0,
                                double perturbation = 0.1);

struct TaskAssignment {
  std::vector<Task> task_of_gaussian;

  std::vector<std::size_t> gaussians_in(Task task) const;
};

/// Uniformly random balanced split of the Gaussians into A, B, R.
TaskAssignment assign_random(const GaussianMixtureSpec& spec, std::uint64_t seed);

struct KMeansResult {
  std::vector<std::size_t> labels;
  std::vector<Point> centroids;
  double inertia = 0.0;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm from a k-means++ start. Stops when no centroid moves by
/// more than 1e-6 or after 100 iterations. Empty clusters are re-seeded from
/// the point farthest from its centroid.
KMeansResult kmeans(std::span<const Point> points, std::size_t n_clusters, std::uint64_t seed);

/// Minimum-cost assignment of rows to distinct columns (rows <= cols), Hungarian method.
/// Returns the column chosen for each row.
std::vector<std::size_t> solve_assignment(const std::vector<std::vector<double>>& cost);

/// Partitions `centroids` into `groups` groups of equal size minimizing the total
/// within-group sum of squared distances to the group mean. Exact enumeration
/// for up to 9 centroids; above that, alternating slot assignment (Hungarian)
/// and group-mean updates. Returns the group of each centroid.
std::vector<std::size_t> balanced_grouping(std::span<const Point> centroids, std::size_t groups);

/// Clusters the Gaussian means into `n_clusters` clusters and assigns whole
/// clusters to tasks, n_clusters / 3 per task, via balanced_grouping.
TaskAssignment assign_kmeans(const GaussianMixtureSpec& spec, std::size_t n_clusters,
                             std::uint64_t seed);

/// Scripted layout for weight-trajectory figures: A at the origin, B on an
/// inner ring, R on an outer ring.
std::pair<GaussianMixtureSpec, TaskAssignment> concentric_layout();

inline constexpr std::size_t kBackgroundSource = static_cast<std::size_t>(-1);

struct GmmDataset {
  std::vector<Point> points;
  std::vector<int> labels;           // 1 for Gaussian samples, 0 for background
  std::vector<std::size_t> source;   // Gaussian index or kBackgroundSource
  std::vector<Task> task;            // task of the source Gaussian; Null for background

  std::size_t size() const { return points.size(); }
  /// Sorted indices of points whose task is `t`.
  std::vector<std::size_t> indices_of(Task t) const;
};

GmmDataset sample_dataset(const GaussianMixtureSpec& spec, const TaskAssignment& assignment,
                          std::size_t n_per_gaussian, std::size_t n_background, std::uint64_t seed);

/// Regular grid of RBF centers. Center index = row * per_axis + col with
/// x = first + col * spacing and y = first + row * spacing.
struct RbfGrid {
  std::size_t per_axis = 12;
  double first = -55.0;
  double spacing = 10.0;
  double bandwidth = 10.0;

  std::size_t n_centers() const { return per_axis * per_axis; }
  std::size_t n_params() const { return n_centers() + 1; }
  Point center(std::size_t index) const;
};

/// exp(-|x - c_j|^2 / (2 bandwidth^2)) for every center, then a constant 1 for the bias.
std::vector<double> rbf_features(Point x, const RbfGrid& grid);

/// Row-major feature matrix of a point set.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

FeatureMatrix feature_matrix(std::span<const Point> points, const RbfGrid& grid);

struct RbfClassifier {
  RbfGrid grid;
  ParamVector params;  // n_centers weights followed by the bias

  RbfClassifier() = default;
  RbfClassifier(RbfGrid g, ParamVector p);

  std::span<const double> weights() const { return {params.data(), grid.n_centers()}; }
  double bias() const { return params.back(); }
  double logit(Point x) const;
  double probability(Point x) const;
};

/// One group of rows in a weighted binary cross-entropy objective:
/// weight * mean over rows of BCE(sigmoid(f . theta), target).
struct BceTerm {
  std::vector<std::size_t> rows;
  std::vector<double> targets;  // same length as rows
  double weight = 1.0;
};

/// Objective value; fills `grad` (resized to cols) when non-null.
double bce_objective(const FeatureMatrix& features, std::span<const BceTerm> terms,
                     const ParamVector& params, ParamVector* grad);

/// Adam on the BCE objective. Full batch when batch_size covers a term,
/// otherwise batch_size rows per term drawn with replacement each step.
/// Appends the per-step loss to `trace` when non-null.
ParamVector optimize_bce(const FeatureMatrix& features, std::span<const BceTerm> terms,
                         ParamVector init, const core::UnlearnConfig& config,
                         std::vector<double>* trace = nullptr);

/// Base classifier: all points at their generation labels, starting from zero weights.
RbfClassifier train_classifier(const GmmDataset& dataset, const RbfGrid& grid,
                               const core::UnlearnConfig& config, std::vector<double>* trace = nullptr);

/// Training data plus its precomputed features, shared by every primitive of a run.
struct GmmProblem {
  GaussianMixtureSpec spec;
  TaskAssignment assignment;
  GmmDataset dataset;
  RbfGrid grid;
  FeatureMatrix features;
};

std::shared_ptr<const GmmProblem> make_problem(GaussianMixtureSpec spec, TaskAssignment assignment,
                                               GmmDataset dataset, RbfGrid grid);

/// Unlearning primitive over dataset indices: forget points are pushed to
/// class 0, retain points keep their generation labels. Loss weights
/// "forget" and "retain" scale the two mean-BCE terms.
core::UnlearnPrimitive<std::size_t> gmm_unlearn_primitive(std::shared_ptr<const GmmProblem> problem);

/// Relearning attack: BCE toward the original labels of `relearn_points` only.
ParamVector gmm_relearn(const ParamVector& theta, const std::vector<std::size_t>& relearn_points,
                        const GmmProblem& problem, const core::UnlearnConfig& config);

struct GmmAccuracy {
  double a = 0.0;
  double b = 0.0;
  double retain = 0.0;

  MetricList to_metrics() const;
};

/// Fresh samples: n_eval from each of A, B, R (Gaussian chosen uniformly within
/// the task) and n_eval background points. Retain accuracy averages the R hit
/// rate and the background rejection rate.
GmmAccuracy eval_gmm(const RbfClassifier& model, const GaussianMixtureSpec& spec,
                     const TaskAssignment& assignment, std::size_t n_eval, std::uint64_t seed);

/// Weights as a grid: entry [row][col] is the weight of center row * per_axis + col.
std::vector<std::vector<double>> weight_heatmap(const RbfClassifier& model);

/// Logits along the line y = 0.
std::vector<double> logit_slice(const RbfClassifier& model, std::span<const double> xs);

}  // namespace lu::gmm
