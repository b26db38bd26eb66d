#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "lu/eval.h"
#include "lu/gmm.h"
#include "lu/optim.h"

namespace {

using namespace lu;
using namespace lu::gmm;

// Closed-form eigenvalues of a symmetric 2x2 matrix.
std::array<double, 2> eig2(const Cov2& c) {
  const double mid = 0.5 * (c.xx + c.yy);
  const double rad = std::sqrt(0.25 * (c.xx - c.yy) * (c.xx - c.yy) + c.xy * c.xy);
  return {mid - rad, mid + rad};
}

double inertia_of(const std::vector<Point>& pts, const std::vector<std::size_t>& labels, std::size_t k) {
  std::vector<Point> sum(k);
  std::vector<double> n(k, 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    sum[labels[i]].x += pts[i].x;
    sum[labels[i]].y += pts[i].y;
    n[labels[i]] += 1.0;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::size_t c = labels[i];
    total += squared_distance(pts[i], {sum[c].x / n[c], sum[c].y / n[c]});
  }
  return total;
}

core::UnlearnConfig full_batch(std::size_t steps, double lr) {
  return {.steps = steps, .learning_rate = lr, .batch_size = eval::kFullBatch};
}

TEST(SampleSpec, BoundsAndDeterminism) {
  const auto spec = sample_spec(15, 42);
  ASSERT_EQ(spec.size(), 15u);
  for (const auto& m : spec.means) {
    EXPECT_GE(m.x, -50.0);
    EXPECT_LE(m.x, 50.0);
    EXPECT_GE(m.y, -50.0);
    EXPECT_LE(m.y, 50.0);
  }
  const auto again = sample_spec(15, 42);
  EXPECT_EQ(spec.means, again.means);
  EXPECT_NE(spec.means, sample_spec(15, 43).means);
  EXPECT_THROW(sample_spec(2, 0), ValidationError);
}

TEST(SampleSpec, CovarianceEigenvaluesNearVariance) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto spec = sample_spec(15, seed);
    for (const auto& c : spec.covariances) {
      const auto ev = eig2(c);
      EXPECT_GE(ev[0], 4.0 - 0.3);
      EXPECT_LE(ev[1], 4.0 + 0.3);
      const auto lib = c.eigenvalues();
      EXPECT_NEAR(std::min(lib[0], lib[1]), ev[0], 1e-12);
      EXPECT_NEAR(std::max(lib[0], lib[1]), ev[1], 1e-12);
    }
  }
}

TEST(AssignRandom, FivePerTaskForFifteen) {
  const auto spec = sample_spec(15, 1);
  const auto a = assign_random(spec, 1);
  EXPECT_EQ(a.gaussians_in(Task::A).size(), 5u);
  EXPECT_EQ(a.gaussians_in(Task::B).size(), 5u);
  EXPECT_EQ(a.gaussians_in(Task::R).size(), 5u);

  const auto small = assign_random(sample_spec(3, 1), 1);
  for (Task t : {Task::A, Task::B, Task::R}) EXPECT_EQ(small.gaussians_in(t).size(), 1u);
}

TEST(AssignRandom, UniformOverSeeds) {
  const auto spec = sample_spec(15, 5);
  std::vector<std::array<int, 3>> hist(15, {0, 0, 0});
  const int n = 1000;
  for (int s = 0; s < n; ++s) {
    const auto a = assign_random(spec, static_cast<std::uint64_t>(s));
    for (std::size_t g = 0; g < 15; ++g) ++hist[g][static_cast<std::size_t>(a.task_of_gaussian[g])];
  }
  for (const auto& h : hist) {
    for (int c : h) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 3.0, 0.05);
  }
}

TEST(KMeans, RecoversSeparatedBlobs) {
  std::vector<Point> pts;
  const Point centers[] = {{-30, -30}, {30, -30}, {0, 40}};
  Rng rng(3);
  for (const auto& c : centers) {
    for (int i = 0; i < 10; ++i) pts.push_back({c.x + uniform(rng, -1, 1), c.y + uniform(rng, -1, 1)});
  }
  const auto res = kmeans(pts, 3, 7);
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t i = 1; i < 10; ++i) EXPECT_EQ(res.labels[b * 10 + i], res.labels[b * 10]);
  }
  EXPECT_NE(res.labels[0], res.labels[10]);
  EXPECT_NE(res.labels[0], res.labels[20]);
  EXPECT_NE(res.labels[10], res.labels[20]);
  EXPECT_EQ(res.labels, kmeans(pts, 3, 7).labels);
}

TEST(KMeans, OneClusterPerPointHasZeroInertia) {
  const std::vector<Point> pts{{0, 0}, {5, 1}, {-3, 7}, {10, -10}};
  const auto res = kmeans(pts, 4, 1);
  EXPECT_NEAR(res.inertia, 0.0, 1e-12);
  std::vector<std::size_t> sorted = res.labels;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(KMeans, BeatsRandomBalancedPartitions) {
  Rng rng(11);
  std::vector<Point> pts(30);
  for (auto& p : pts) p = {uniform(rng, -50, 50), uniform(rng, -50, 50)};
  const auto res = kmeans(pts, 3, 2);
  EXPECT_NEAR(res.inertia, inertia_of(pts, res.labels, 3), 1e-9);
  std::vector<std::size_t> labels(30);
  for (std::size_t i = 0; i < 30; ++i) labels[i] = i % 3;
  for (int trial = 0; trial < 50; ++trial) {
    std::shuffle(labels.begin(), labels.end(), rng);
    EXPECT_LE(res.inertia, inertia_of(pts, labels, 3) + 1e-9);
  }
}

TEST(SolveAssignment, MatchesBruteForce) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5;
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (auto& row : cost) {
      for (double& c : row) c = uniform(rng, 0, 10);
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += cost[i][perm[i]];
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto sol = solve_assignment(cost);
    double got = 0;
    for (std::size_t i = 0; i < n; ++i) got += cost[i][sol[i]];
    EXPECT_NEAR(got, best, 1e-9);
  }
}

// Total within-group squared distance to the group mean.
double grouping_cost(const std::vector<Point>& c, const std::vector<std::size_t>& g, std::size_t groups) {
  return inertia_of(c, g, groups);
}

TEST(BalancedGrouping, SixClustersMatchesEnumeration) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Point> c(6);
    for (auto& p : c) p = {uniform(rng, -50, 50), uniform(rng, -50, 50)};
    const auto got = balanced_grouping(c, 3);
    std::map<std::size_t, int> sizes;
    for (auto g : got) ++sizes[g];
    for (const auto& [g, n] : sizes) EXPECT_EQ(n, 2);

    std::vector<std::size_t> labels{0, 0, 1, 1, 2, 2};
    double best = 1e300;
    do {
      best = std::min(best, grouping_cost(c, labels, 3));
    } while (std::next_permutation(labels.begin(), labels.end()));
    EXPECT_NEAR(grouping_cost(c, got, 3), best, 1e-9);
  }
}

TEST(AssignKMeans, PairsOfNearbyClustersShareATask) {
  // Three well-separated pairs of Gaussians, two per pair member.
  GaussianMixtureSpec spec;
  const Point pairs[3][2] = {{{-40, -40}, {-36, -40}}, {{40, -40}, {40, -36}}, {{0, 40}, {4, 40}}};
  for (const auto& pr : pairs) {
    for (const auto& p : pr) {
      for (int j = 0; j < 2; ++j) {
        spec.means.push_back({p.x + 0.1 * j, p.y});
        spec.covariances.push_back({4, 0, 4});
      }
    }
  }
  const auto a = assign_kmeans(spec, 6, 3);
  for (std::size_t pr = 0; pr < 3; ++pr) {
    const Task t = a.task_of_gaussian[pr * 4];
    for (std::size_t j = 1; j < 4; ++j) EXPECT_EQ(a.task_of_gaussian[pr * 4 + j], t);
  }
  EXPECT_EQ(a.task_of_gaussian, assign_kmeans(spec, 6, 3).task_of_gaussian);
  EXPECT_THROW(assign_kmeans(spec, 4, 3), ValidationError);
}

TEST(SampleDataset, SizesLabelsAndMeans) {
  const auto spec = sample_spec(15, 2);
  const auto asg = assign_random(spec, 2);
  const std::size_t per = 400;
  const auto data = sample_dataset(spec, asg, per, 1000, 9);
  ASSERT_EQ(data.size(), 15 * per + 1000);
  std::vector<Point> sum(15);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.source[i] == kBackgroundSource) {
      EXPECT_EQ(data.labels[i], 0);
      EXPECT_EQ(data.task[i], Task::Null);
      EXPECT_TRUE(spec.background.contains(data.points[i]));
    } else {
      EXPECT_EQ(data.labels[i], 1);
      EXPECT_EQ(data.task[i], asg.task_of_gaussian[data.source[i]]);
      sum[data.source[i]].x += data.points[i].x;
      sum[data.source[i]].y += data.points[i].y;
    }
  }
  for (std::size_t g = 0; g < 15; ++g) {
    const double se_x = 3.0 * std::sqrt(spec.covariances[g].xx / per);
    const double se_y = 3.0 * std::sqrt(spec.covariances[g].yy / per);
    EXPECT_NEAR(sum[g].x / per, spec.means[g].x, se_x);
    EXPECT_NEAR(sum[g].y / per, spec.means[g].y, se_y);
  }
}

TEST(RbfFeatures, ClosedForms) {
  const RbfGrid grid;
  EXPECT_EQ(grid.n_params(), 145u);
  EXPECT_EQ(grid.center(0), (Point{-55, -55}));
  EXPECT_EQ(grid.center(13), (Point{-45, -45}));
  EXPECT_EQ(grid.center(143), (Point{55, 55}));

  const auto at = rbf_features(grid.center(20), grid);
  ASSERT_EQ(at.size(), 145u);
  EXPECT_DOUBLE_EQ(at[20], 1.0);
  EXPECT_DOUBLE_EQ(at[144], 1.0);

  const auto far = rbf_features({500, 500}, grid);
  for (std::size_t j = 0; j < 144; ++j) EXPECT_LT(far[j], 1e-10);
  EXPECT_EQ(far[144], 1.0);

  const Point c = grid.center(50);
  const auto one_bw = rbf_features({c.x + 10.0, c.y}, grid);
  EXPECT_NEAR(one_bw[50], std::exp(-0.5), 1e-15);
}

TEST(Heatmap, IndexingContract) {
  RbfClassifier zero(RbfGrid{}, ParamVector(145, 0.0));
  for (const auto& row : weight_heatmap(zero)) {
    for (double v : row) EXPECT_EQ(v, 0.0);
  }
  ParamVector p(145);
  std::iota(p.begin(), p.end(), 0.0);
  const RbfClassifier m(RbfGrid{}, p);
  const auto h = weight_heatmap(m);
  ASSERT_EQ(h.size(), 12u);
  for (std::size_t r = 0; r < 12; ++r) {
    for (std::size_t c = 0; c < 12; ++c) {
      const Point ctr = m.grid.center(r * 12 + c);
      EXPECT_EQ(ctr.x, -55.0 + 10.0 * c);
      EXPECT_EQ(ctr.y, -55.0 + 10.0 * r);
      EXPECT_EQ(h[r][c], p[r * 12 + c]);
    }
  }
}

TEST(LogitSlice, MatchesDirectForwardAndSymmetry) {
  const RbfClassifier zero(RbfGrid{}, ParamVector(145, 0.0));
  const std::vector<double> xs{-60, -10, 0, 33};
  for (double v : logit_slice(zero, xs)) EXPECT_EQ(v, 0.0);

  Rng rng(6);
  ParamVector p(145);
  for (double& x : p) x = standard_normal(rng);
  const RbfClassifier m(RbfGrid{}, p);
  std::vector<double> pts(20);
  for (double& x : pts) x = uniform(rng, -60, 60);
  const auto slice = logit_slice(m, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto f = rbf_features({pts[i], 0.0}, m.grid);
    double z = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) z += f[j] * p[j];
    EXPECT_EQ(slice[i], z);
  }

  // Mirror weights about x = 0 (col -> 11 - col) give an even slice.
  ParamVector sym(145);
  for (std::size_t r = 0; r < 12; ++r) {
    for (std::size_t c = 0; c < 6; ++c) {
      sym[r * 12 + c] = sym[r * 12 + 11 - c] = standard_normal(rng);
    }
  }
  sym[144] = 0.3;
  const RbfClassifier s(RbfGrid{}, sym);
  for (double x : {1.0, 7.5, 22.0, 49.0}) {
    const std::vector<double> pm{x, -x};
    const auto v = logit_slice(s, pm);
    EXPECT_NEAR(v[0], v[1], 1e-12);
  }
}

TEST(BceObjective, GradientMatchesFiniteDifferences) {
  Rng rng(12);
  for (int instance = 0; instance < 5; ++instance) {
    const auto spec = sample_spec(6, 100 + instance);
    const auto data = sample_dataset(spec, assign_random(spec, instance), 10, 40, instance);
    const auto feats = feature_matrix(data.points, RbfGrid{});
    BceTerm forget, retain;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (i % 3 == 0) {
        forget.rows.push_back(i);
        forget.targets.push_back(0.0);
      } else {
        retain.rows.push_back(i);
        retain.targets.push_back(data.labels[i]);
      }
    }
    forget.weight = 0.7;
    retain.weight = 1.3;
    const std::vector<BceTerm> terms{forget, retain};
    ParamVector theta(145);
    for (double& x : theta) x = 0.5 * standard_normal(rng);
    ParamVector grad;
    bce_objective(feats, terms, theta, &grad);
    std::vector<std::size_t> coords(10);
    for (auto& c : coords) c = uniform_index(rng, 145);
    const auto fd = optim::finite_difference_gradient(
        [&](const ParamVector& p) { return bce_objective(feats, terms, p, nullptr); }, theta, 1e-5, coords);
    for (auto c : coords) {
      const double scale = std::max(std::abs(grad[c]), 1e-6);
      EXPECT_LE(std::abs(grad[c] - fd[c]) / scale, 1e-4) << "coordinate " << c;
    }
  }
}

TEST(TrainClassifier, SeparableCaseAndLossWindows) {
  GaussianMixtureSpec spec;
  spec.means = {{0, 0}};
  spec.covariances = {{4, 0, 4}};
  TaskAssignment asg{{Task::A}};
  // Background far from the single Gaussian.
  auto data = sample_dataset(spec, asg, 200, 400, 1);
  GmmDataset kept;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == 0 && std::hypot(data.points[i].x, data.points[i].y) < 25) continue;
    kept.points.push_back(data.points[i]);
    kept.labels.push_back(data.labels[i]);
    kept.source.push_back(data.source[i]);
    kept.task.push_back(data.task[i]);
  }
  std::vector<double> trace;
  const auto model = train_classifier(kept, RbfGrid{}, full_batch(500, 0.05), &trace);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    correct += (model.probability(kept.points[i]) > 0.5) == (kept.labels[i] == 1);
  }
  EXPECT_EQ(correct, kept.size());

  ASSERT_EQ(trace.size(), 500u);
  double prev = 1e300;
  for (std::size_t w = 0; w < 10; ++w) {
    const double mean = std::accumulate(trace.begin() + w * 50, trace.begin() + (w + 1) * 50, 0.0) / 50;
    EXPECT_LT(mean, prev) << "window " << w;
    prev = mean;
  }
}

TEST(Primitives, ZeroStepsAndEmptyRelearn) {
  const auto problem = eval::build_gmm_problem(eval::GmmProtocolConfig{}, 3);
  ParamVector theta(145);
  Rng rng(1);
  for (double& x : theta) x = standard_normal(rng);
  const auto prim = gmm_unlearn_primitive(problem);
  core::UnlearnConfig zero = full_batch(0, 0.05);
  const auto a = problem->dataset.indices_of(Task::A);
  const auto r = problem->dataset.indices_of(Task::R);
  EXPECT_EQ(prim(theta, a, r, zero), theta);
  EXPECT_EQ(gmm_relearn(theta, {}, *problem, full_batch(300, 0.01)), theta);
}

TEST(EvalGmm, ConstantZeroClassifier) {
  const auto spec = sample_spec(15, 4);
  const auto asg = assign_random(spec, 4);
  ParamVector p(145, 0.0);
  p[144] = -5.0;
  const auto acc = eval_gmm(RbfClassifier(RbfGrid{}, p), spec, asg, 500, 1);
  EXPECT_EQ(acc.a, 0.0);
  EXPECT_EQ(acc.b, 0.0);
  EXPECT_EQ(acc.retain, 0.5);
}

TEST(EvalGmm, StableAcrossEvalSeeds) {
  const eval::GmmProtocolConfig cfg;
  const auto problem = eval::build_gmm_problem(cfg, 0);
  const auto model = train_classifier(problem->dataset, problem->grid, cfg.train);
  const std::size_t n = 2000;
  const auto x = eval_gmm(model, problem->spec, problem->assignment, n, 1);
  const auto y = eval_gmm(model, problem->spec, problem->assignment, n, 2);
  const double tol = 3.0 / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(x.a, y.a, tol);
  EXPECT_NEAR(x.b, y.b, tol);
  EXPECT_NEAR(x.retain, y.retain, tol);
}

// Bayes classifier for the training distribution: predict class 1 where the
// weighted Gaussian density exceeds the uniform background density.
TEST(EvalGmm, BayesOracleBoundsTrainedClassifier) {
  const eval::GmmProtocolConfig cfg;
  double oracle_sum = 0.0, trained_sum = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    const auto problem = eval::build_gmm_problem(cfg, static_cast<std::uint64_t>(s));
    const auto& spec = problem->spec;
    const auto density1 = [&](Point p) {
      double d = 0.0;
      for (std::size_t g = 0; g < spec.size(); ++g) {
        const Cov2& c = spec.covariances[g];
        const double det = c.xx * c.yy - c.xy * c.xy;
        const double dx = p.x - spec.means[g].x, dy = p.y - spec.means[g].y;
        const double q = (c.yy * dx * dx - 2 * c.xy * dx * dy + c.xx * dy * dy) / det;
        d += cfg.n_per_gaussian * std::exp(-0.5 * q) / (2 * M_PI * std::sqrt(det));
      }
      return d;
    };
    const double density0 = cfg.n_background / (120.0 * 120.0);
    Rng rng(derive_seed(static_cast<std::uint64_t>(s), "oracle"));
    const auto r_ids = problem->assignment.gaussians_in(Task::R);
    const int n = 4000;
    int hits = 0, rejects = 0;
    for (int i = 0; i < n; ++i) {
      const std::size_t g = r_ids[uniform_index(rng, r_ids.size())];
      const Cov2& c = spec.covariances[g];
      const double l11 = std::sqrt(c.xx), l21 = c.xy / l11, l22 = std::sqrt(c.yy - l21 * l21);
      const double z1 = standard_normal(rng), z2 = standard_normal(rng);
      const Point p{spec.means[g].x + l11 * z1, spec.means[g].y + l21 * z1 + l22 * z2};
      hits += density1(p) > density0;
      const Point bg{uniform(rng, -60, 60), uniform(rng, -60, 60)};
      rejects += density1(bg) <= density0;
    }
    const double oracle = 0.5 * (static_cast<double>(hits) / n + static_cast<double>(rejects) / n);
    const auto model = train_classifier(problem->dataset, problem->grid, cfg.train);
    const auto acc = eval_gmm(model, spec, problem->assignment, 2000, 99);
    oracle_sum += oracle;
    trained_sum += acc.retain;
  }
  const double oracle = oracle_sum / seeds, trained = trained_sum / seeds;
  // No classifier of this data can beat the oracle by more than sampling noise.
  EXPECT_GE(oracle, 0.88);
  EXPECT_LE(trained, oracle + 0.02);
}

TEST(LayeredVsStandard, LuRelearnBLowerOnAInMostSeeds) {
  const eval::ProtocolConfig cfg = eval::GmmProtocolConfig{};
  const std::vector<eval::Method> methods{eval::Method::U, eval::Method::LU};
  int lower = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = eval::run_protocol(cfg, methods, {{"B"}}, seed);
    double u = -1, lu = -1;
    for (const auto& r : out.reports) {
      if (r.phase != eval::Phase::relearned) continue;
      (r.method == eval::Method::U ? u : lu) = metric_value(r.metrics, "A");
    }
    lower += lu < u;
  }
  EXPECT_GE(lower, 8);
}

}  // namespace
