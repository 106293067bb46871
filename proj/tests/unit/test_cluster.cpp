#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bwflow/barycenter.hpp"
#include "bwflow/cluster.hpp"
#include "bwflow/error.hpp"
#include "bwflow/simgen.hpp"
#include "bwflow/tangent_pca.hpp"
#include "helpers.hpp"

using namespace bwflow;

namespace {

// Populations around constant templates 0.5 I + 20 e_p e_p^T, pairwise equidistant by symmetry.
std::pair<FlowSet, std::vector<int>> populations(std::size_t count, std::size_t per, std::uint64_t seed) {
  std::vector<Flow> flows;
  std::vector<int> truth;
  for (std::size_t p = 0; p < count; ++p) {
    SimConfig cfg;
    cfg.dim = 5;
    cfg.n_times = 4;
    cfg.n_flows = per;
    cfg.nu = 200;
    cfg.law.sigma_w = 0.1;
    cfg.seed = seed * 100 + p;
    RealMatrix m = 0.5 * RealMatrix::Identity(5, 5);
    m(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)) += 20.0;
    cfg.template_kind = TemplateKind::kExplicit;
    cfg.explicit_template = testing::constant_flow<double>(uniform_grid(4), m);
    const FlowSet sampled = sample_flows(cfg);
    for (const auto& f : sampled.flows()) {
      flows.push_back(f);
      truth.push_back(static_cast<int>(p));
    }
  }
  return {FlowSet(flows), truth};
}

// Largest distance from a flow to its population's template, against the template separation.
double separation_ratio(const FlowSet& set, const std::vector<int>& truth) {
  std::vector<Flow> tmpl;
  for (int p = 0; p <= *std::max_element(truth.begin(), truth.end()); ++p) {
    RealMatrix m = 0.5 * RealMatrix::Identity(5, 5);
    m(p, p) += 20.0;
    tmpl.push_back(testing::constant_flow<double>(uniform_grid(4), m));
  }
  double spread = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) spread = std::max(spread, flow_distance(set[i], tmpl[static_cast<std::size_t>(truth[i])]));
  return flow_distance(tmpl[0], tmpl[1]) / spread;
}

double inertia_to(const FlowSet& set, const Flow& c) {
  double s = 0.0;
  for (const auto& f : set.flows()) s += std::pow(flow_distance(f, c), 2);
  return s;
}

}  // namespace

TEST_CASE("label agreement and elbow helpers") {
  CHECK(label_agreement({0, 0, 1, 1}, {1, 1, 0, 0}) == 1.0);
  CHECK(label_agreement({0, 1, 2, 2}, {2, 1, 0, 1}) == doctest::Approx(0.75));
  std::vector<ElbowRow> rows{{1, 10.0, 0, NAN, false}, {2, 4.0, 0, 4.0, false}, {3, 2.0, 0, 1.5, false}, {4, 1.5, 0, NAN, false}};
  CHECK(elbow_k(rows) == 2);
  CHECK(parse_cluster_mode(cluster_mode_name(ClusterMode::kScores)) == ClusterMode::kScores);
  CHECK_THROWS_CODE(parse_cluster_mode("spectral"), ErrorCode::kInvalidArgument);
}

TEST_CASE("k-means edge cases") {
  const auto [set, truth] = populations(2, 4, 1);
  KMeansConfig<double> cfg;
  cfg.restarts = 3;
  cfg.seed = 5;

  const auto one = kmeans_flows(set, 1, cfg);
  const Flow mean = frechet_mean_flow(set).mean;
  CHECK(flow_distance(one.centroids[0], mean) <= 1e-6);
  CHECK(one.inertia == doctest::Approx(inertia_to(set, mean)).epsilon(1e-8));
  CHECK(std::all_of(one.labels.begin(), one.labels.end(), [](int l) { return l == 0; }));

  const auto all = kmeans_flows(set, set.size(), cfg);
  CHECK(all.inertia <= 1e-12);
  std::vector<int> sorted = all.labels;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());

  CHECK_THROWS_CODE(kmeans_flows(set, 0, cfg), ErrorCode::kKOutOfRange);
  CHECK_THROWS_CODE(kmeans_flows(set, set.size() + 1, cfg), ErrorCode::kKOutOfRange);
  cfg.mode = ClusterMode::kScores;
  CHECK_THROWS_CODE(kmeans_flows(set, 2, cfg), ErrorCode::kInvalidArgument);
}

TEST_CASE("separated populations are recovered") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [set, truth] = populations(2, 6, seed + 10);
    REQUIRE(separation_ratio(set, truth) >= 3.0);
    KMeansConfig<double> cfg;
    cfg.restarts = 4;
    cfg.seed = seed;
    const auto r = kmeans_flows(set, 2, cfg);
    CHECK(label_agreement(r.labels, truth) == 1.0);
    for (std::size_t k = 1; k < r.per_iter_inertia.size(); ++k) {
      CHECK(r.per_iter_inertia[k] <= r.per_iter_inertia[k - 1] + 1e-9 * std::max(1.0, r.per_iter_inertia[k - 1]));
    }
  }
}

TEST_CASE("score-space clustering agrees with raw clustering") {
  const auto [set, truth] = populations(2, 8, 3);
  const Flow mean = frechet_mean_flow(set).mean;
  const auto model = fit_pca(log_field(set, mean), mean, 3);
  KMeansConfig<double> raw;
  raw.restarts = 4;
  KMeansConfig<double> scores = raw;
  scores.mode = ClusterMode::kScores;
  scores.scores = model.scores;
  const auto a = kmeans_flows(set, 2, raw);
  const auto b = kmeans_flows(set, 2, scores);
  CHECK(b.score_centroids.rows() == 2);
  CHECK(label_agreement(a.labels, b.labels) >= 0.95);
  CHECK(label_agreement(b.labels, truth) >= 0.95);
}

TEST_CASE("relabeling under permutation and determinism") {
  const auto [set, truth] = populations(2, 5, 4);
  KMeansConfig<double> cfg;
  cfg.restarts = 3;
  cfg.seed = 2;
  const auto first = kmeans_flows(set, 2, cfg);
  const auto again = kmeans_flows(set, 2, cfg);
  CHECK(first.labels == again.labels);
  CHECK(first.inertia == again.inertia);

  std::vector<Flow> reversed(set.flows().rbegin(), set.flows().rend());
  const auto flipped = kmeans_flows(FlowSet(reversed), 2, cfg);
  std::vector<int> back(flipped.labels.rbegin(), flipped.labels.rend());
  CHECK(label_agreement(first.labels, back) == 1.0);
  CHECK(flipped.inertia == doctest::Approx(first.inertia).epsilon(1e-8));
}

TEST_CASE("elbow on three populations") {
  const auto [set, truth] = populations(3, 5, 6);
  KMeansConfig<double> cfg;
  cfg.restarts = 4;
  const auto rows = elbow_scores(set, 1, 5, cfg);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].k == 1);
  const Flow mean = frechet_mean_flow(set).mean;
  CHECK(rows[0].inertia == doctest::Approx(inertia_to(set, mean)).epsilon(1e-6));
  CHECK(elbow_k(rows) == 3);
  CHECK(std::isnan(rows.front().second_difference));
  CHECK(std::isnan(rows.back().second_difference));

  const auto full = elbow_scores(set, set.size() - 1, set.size(), cfg);
  CHECK(full.back().inertia <= 1e-12);
}
