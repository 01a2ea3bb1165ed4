#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aid/error.hpp"
#include "aid/rerank.hpp"
#include "aid/synthetic.hpp"

using namespace aid;

namespace {

FeatureStore store_from(const std::vector<std::vector<double>> &rows) {
  RowMatrixF m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<float>(rows[i][j]);
  return FeatureStore(std::move(m));
}

ClusterSet clusters_from(const Eigen::MatrixXd &centroids) {
  ClusterSet cs;
  cs.centroids = centroids;
  for (Eigen::Index c = 0; c < centroids.rows(); ++c)
    cs.assignments.push_back(static_cast<std::size_t>(c));
  return cs;
}

// Oracle: per-item cosine loop and direct formula, no shared helpers.
struct NaiveScores {
  std::vector<double> delta, sigma, delta_tilde;
  double beta = 0.0;
};

NaiveScores naive_scores(const FeatureStore &s, const Eigen::VectorXd &q,
                         const std::vector<Eigen::VectorXd> &centroids, double gamma,
                         std::optional<std::size_t> excluded) {
  NaiveScores out;
  for (std::size_t i = 0; i < s.n(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s.d(); ++j) {
      const double diff = s.vectors()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                          q(static_cast<Eigen::Index>(j));
      acc += diff * diff;
    }
    out.delta.push_back(std::sqrt(acc));
    if (excluded != i)
      out.beta = std::max(out.beta, out.delta.back());
  }
  for (std::size_t i = 0; i < s.n(); ++i) {
    double best = -2.0;
    for (const auto &c : centroids) {
      double dot = 0.0, nc = 0.0;
      for (std::size_t j = 0; j < s.d(); ++j) {
        const double off = s.vectors()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                           q(static_cast<Eigen::Index>(j));
        dot += off * c(static_cast<Eigen::Index>(j));
        nc += c(static_cast<Eigen::Index>(j)) * c(static_cast<Eigen::Index>(j));
      }
      best = std::max(best, dot / (std::sqrt(nc) * out.delta[i]));
    }
    out.sigma.push_back(out.delta[i] == 0.0 ? 1.0 : best);
    const double sg = out.sigma[i] > 0 ? 1.0 : (out.sigma[i] < 0 ? -1.0 : 0.0);
    out.delta_tilde.push_back(out.delta[i] - sg * std::pow(std::abs(out.sigma[i]), gamma) * out.beta);
  }
  return out;
}

bool is_permutation_of_eligible(const std::vector<std::size_t> &order, std::size_t n,
                                std::optional<std::size_t> excluded) {
  std::vector<std::size_t> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> expect;
  for (std::size_t i = 0; i < n; ++i)
    if (excluded != i)
      expect.push_back(i);
  return sorted == expect;
}

struct Instance {
  FeatureStore store;
  Query query;
  ClusterSet clusters;
  FeedbackSelection selection;
};

Instance random_instance(std::uint64_t seed) {
  synthetic::Rng rng(seed);
  const std::size_t n = 20 + rng.below(200);
  const std::size_t d = 2 + rng.below(10);
  RowMatrixF m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<float>(rng.normal());
  FeatureStore store(std::move(m));
  Query q = rng.uniform() < 0.5 ? query_from_item(store, rng.below(n))
                                : Query{rng.normal_vector(d), std::nullopt};
  const std::size_t k = 1 + rng.below(6);
  Eigen::MatrixXd c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < k; ++i)
    c.row(static_cast<Eigen::Index>(i)) = rng.normal_vector(d).transpose();
  std::vector<std::size_t> sel;
  for (std::size_t i = 0; i < k; ++i)
    if (rng.uniform() < 0.5)
      sel.push_back(i);
  if (sel.empty())
    sel.push_back(rng.below(k));
  return {std::move(store), q, clusters_from(c), FeedbackSelection(sel)};
}

} // namespace

TEST_CASE("sigma examples") {
  Eigen::MatrixXd c(1, 2);
  c << 2, 0;
  CHECK(sigma(Eigen::Vector2d(3, 0), c) == 1.0);
  CHECK(sigma(Eigen::Vector2d(0, 3), c) == 0.0);

  // Cosines -0.3 and 0.8 against the offset (1, 0).
  Eigen::MatrixXd two(2, 2);
  two << -0.3, std::sqrt(1 - 0.09), 0.8, 0.6;
  CHECK(sigma(Eigen::Vector2d(1, 0), two) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("sigma conventions") {
  Eigen::MatrixXd c(2, 2);
  c << 0, 0, 1, 1;
  CHECK(sigma(Eigen::Vector2d(0, 0), c) == 1.0);
  CHECK(sigma(Eigen::Vector2d(-1, -1), c) == doctest::Approx(-1.0));
  CHECK(sigma(Eigen::Vector2d(1, 0), Eigen::MatrixXd::Zero(1, 2)) == 0.0);
  const Query q{Eigen::Vector2d(1, 1), std::nullopt};
  CHECK(sigma(Eigen::VectorXd(Eigen::Vector2d(2, 2)), q, c) == doctest::Approx(1.0));
}

TEST_CASE("adjusted distance examples") {
  CHECK(adjusted_distance(2, 1, 1, 5) == -3.0);
  CHECK(adjusted_distance(2, 0, 0.0, 5) == 2.0);
  CHECK(adjusted_distance(2, 0, 3.0, 5) == 2.0);
  CHECK(adjusted_distance(2, -0.5, 2, 5) == 3.25);
}

TEST_CASE("a vanishing negative push still exceeds delta") {
  CHECK(adjusted_distance(5.0, -1e-7, 3.0, 1.0) > 5.0);
  CHECK(adjusted_distance(5.0, -1e-200, 2.0, 1.0) > 5.0);
  CHECK(adjusted_distance(5.0, 1e-200, 2.0, 1.0) == 5.0);
}

TEST_CASE("property: sign and monotonicity of the adjusted distance") {
  synthetic::Rng rng(1);
  for (int t = 0; t < 10000; ++t) {
    const double delta = 10.0 * rng.uniform();
    const double s = 2.0 * rng.uniform() - 1.0;
    const double gamma = 3.0 * rng.uniform();
    const double beta = 0.01 + 10.0 * rng.uniform();
    const double adj = adjusted_distance(delta, s, gamma, beta);
    CHECK((adj <= delta) == (s >= 0.0));
    const double s2 = std::min(1.0, s + 0.1 * rng.uniform());
    CHECK(adjusted_distance(delta, s2, gamma, beta) <= adj);
  }
}

TEST_CASE("gamma = 0 moves every item by exactly beta") {
  const auto s = store_from({{1, 0}, {-1, 0}, {0, 1}, {2, 1}, {-3, -1}});
  Eigen::MatrixXd c(1, 2);
  c << 1, 0;
  const auto list = rerank(s, Query{Eigen::Vector2d(0, 0), std::nullopt}, clusters_from(c),
                           FeedbackSelection({0}), RerankParams{0.0, std::nullopt});
  for (std::size_t i = 0; i < s.n(); ++i) {
    if (list.sigma[i] > 0)
      CHECK(list.delta_tilde[i] == list.delta[i] - list.beta);
    else if (list.sigma[i] < 0)
      CHECK(list.delta_tilde[i] == list.delta[i] + list.beta);
    else
      CHECK(list.delta_tilde[i] == list.delta[i]);
  }
  CHECK(list.sigma[2] == 0.0);
}

TEST_CASE("empty selection returns the baseline ranking") {
  const auto s = store_from({{3, 0}, {1, 0}, {0, 2}, {1, 0}});
  const Query q{Eigen::Vector2d(0, 0), std::nullopt};
  const auto scan = all_distances(s, q);
  const auto list = rerank(s, q, clusters_from(Eigen::MatrixXd::Ones(2, 2)), {}, {});
  CHECK_FALSE(list.refined);
  CHECK(list.order == baseline_order(scan));
  CHECK(list.order == std::vector<std::size_t>{1, 3, 2, 0});
  CHECK(list.delta_tilde == list.delta);
}

TEST_CASE("item on the centroid ray at the farthest distance moves to zero") {
  const auto s = store_from({{4, 0}, {0, 1}, {0, -2}, {1, 1}});
  Eigen::MatrixXd c(1, 2);
  c << 0.5, 0;
  const auto list = rerank(s, Query{Eigen::Vector2d(0, 0), std::nullopt}, clusters_from(c),
                           FeedbackSelection({0}), {});
  CHECK(list.beta == 4.0);
  CHECK(list.delta_tilde[0] == 0.0);
  CHECK(list.order.front() == 3); // 1.414 - 0.707 * 4 < 0
  CHECK(list.order[1] == 0);
}

TEST_CASE("explicit beta and excluded query item") {
  const auto s = store_from({{0, 0}, {10, 0}, {0, 1}});
  Eigen::MatrixXd c(1, 2);
  c << 1, 0;
  const auto q = query_from_item(s, 2);
  const auto list = rerank(s, q, clusters_from(c), FeedbackSelection({0}), RerankParams{1.0, 2.0});
  CHECK(list.beta == 2.0);
  CHECK(list.order.size() == 2);
  CHECK(std::isnan(list.delta_tilde[2]));
  CHECK(std::isnan(list.sigma[2]));
  const auto auto_beta = rerank(s, q, clusters_from(c), FeedbackSelection({0}), {});
  CHECK(auto_beta.beta == doctest::Approx(std::sqrt(101.0)));
}

TEST_CASE("two-sense dataset: the selected sense wins at equal distance") {
  // Two bundles along +x and +y, same set of radii, plus a query at the origin.
  std::vector<std::vector<double>> rows;
  for (int r = 1; r <= 10; ++r) {
    rows.push_back({static_cast<double>(r), 0.0});
    rows.push_back({0.0, static_cast<double>(r)});
  }
  const auto s = store_from(rows);
  Eigen::MatrixXd c(2, 2);
  c << 1, 0, 0, 1;
  const Query q{Eigen::Vector2d(0, 0), std::nullopt};
  const auto list = rerank(s, q, clusters_from(c), FeedbackSelection({0}), {});
  std::vector<std::size_t> rank(s.n());
  for (std::size_t p = 0; p < list.order.size(); ++p)
    rank[list.order[p]] = p;
  for (std::size_t i = 0; i < s.n(); i += 2)
    CHECK(rank[i] < rank[i + 1]);
  const auto oracle = naive_scores(s, q.vector, {Eigen::Vector2d(1, 0)}, 1.0, std::nullopt);
  for (std::size_t i = 0; i < s.n(); ++i)
    CHECK(std::abs(list.delta_tilde[i] - oracle.delta_tilde[i]) < 1e-9);
}

TEST_CASE("property: rerank matches a naive recomputation") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = random_instance(seed);
    const double gamma = 0.25 * static_cast<double>(seed % 9);
    const auto list = rerank(inst.store, inst.query, inst.clusters, inst.selection,
                             RerankParams{gamma, std::nullopt});
    std::vector<Eigen::VectorXd> chosen;
    for (auto c : inst.selection.selected)
      chosen.push_back(inst.clusters.centroids.row(static_cast<Eigen::Index>(c)).transpose());
    const auto oracle = naive_scores(inst.store, inst.query.vector, chosen, gamma, inst.query.exclude_index);
    REQUIRE(is_permutation_of_eligible(list.order, inst.store.n(), inst.query.exclude_index));
    CHECK(std::abs(list.beta - oracle.beta) < 1e-9);
    for (auto i : list.order) {
      CHECK(std::abs(list.delta[i] - oracle.delta[i]) < 1e-9);
      CHECK(std::abs(list.sigma[i] - oracle.sigma[i]) < 1e-9);
      CHECK(std::abs(list.delta_tilde[i] - oracle.delta_tilde[i]) < 1e-9);
    }
    for (std::size_t p = 1; p < list.order.size(); ++p)
      CHECK(list.delta_tilde[list.order[p - 1]] <= list.delta_tilde[list.order[p]]);
  }
}

TEST_CASE("property: scale and translation leave the permutation unchanged") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    synthetic::Rng rng(seed + 50);
    const std::size_t n = 60, d = 4;
    // Dyadic coordinates keep the shifted and scaled copies exact.
    RowMatrixF base(n, d), moved(n, d);
    Eigen::VectorXd q(d), t(d);
    for (std::size_t j = 0; j < d; ++j) {
      q(static_cast<Eigen::Index>(j)) = static_cast<double>(static_cast<int>(rng.below(32)) - 16) / 8.0;
      t(static_cast<Eigen::Index>(j)) = static_cast<double>(static_cast<int>(rng.below(32)) - 16) / 4.0;
    }
    const double alpha = seed % 2 == 0 ? 2.0 : 0.5;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double v = static_cast<double>(static_cast<int>(rng.below(256)) - 128) / 32.0;
        const auto jj = static_cast<Eigen::Index>(j);
        base(static_cast<Eigen::Index>(i), jj) = static_cast<float>(v);
        moved(static_cast<Eigen::Index>(i), jj) = static_cast<float>(q(jj) + alpha * (v - q(jj)) + t(jj));
      }
    Eigen::MatrixXd c(2, static_cast<Eigen::Index>(d));
    c.row(0) = rng.normal_vector(d).transpose();
    c.row(1) = rng.normal_vector(d).transpose();
    const FeatureStore a(base), b(moved);
    const auto la = rerank(a, Query{q, std::nullopt}, clusters_from(c), FeedbackSelection({0, 1}), {});
    const auto lb = rerank(b, Query{q + t, std::nullopt}, clusters_from(c), FeedbackSelection({0, 1}), {});
    CHECK(la.order == lb.order);
  }
}

TEST_CASE("rerank errors") {
  const auto s = store_from({{1, 0}, {0, 1}});
  const Query q{Eigen::Vector2d(0, 0), std::nullopt};
  const auto cs = clusters_from(Eigen::MatrixXd::Identity(2, 2));
  CHECK_THROWS_AS(rerank(s, q, cs, FeedbackSelection({2}), {}), IndexError);
  CHECK_THROWS_AS(rerank(s, q, cs, FeedbackSelection({0}), RerankParams{-1.0, std::nullopt}),
                  InvalidArgument);
  CHECK_THROWS_AS(rerank(s, q, cs, FeedbackSelection({0}), RerankParams{1.0, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(rerank(s, q, cs, FeedbackSelection({0}),
                         RerankParams{std::numeric_limits<double>::infinity(), std::nullopt}),
                  InvalidArgument);
  CHECK_THROWS_AS(rerank(s, q, clusters_from(Eigen::MatrixXd::Identity(3, 3)), FeedbackSelection({0}), {}),
                  DimensionMismatch);
}
