#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>

#include "aid/disambiguation.hpp"
#include "aid/error.hpp"
#include "aid/log.hpp"
#include "aid/synthetic.hpp"

using namespace aid;

namespace {

Eigen::MatrixXd random_directions(std::size_t m, std::size_t d, std::uint64_t seed) {
  synthetic::Rng rng(seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    x.row(i) = rng.unit_vector(d).transpose();
  return x;
}

// Oracle: QZ on the pencil (L, D), independent of the symmetric reduction.
std::vector<double> qz_spectrum(const Eigen::MatrixXd &a) {
  const Eigen::VectorXd s = a.rowwise().sum();
  const Eigen::MatrixXd d = s.asDiagonal();
  const Eigen::MatrixXd l = d - a;
  Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> ges(l, d, false);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    out.push_back(ges.alphas()(i).real() / ges.betas()(i));
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t argmax_gap(const std::vector<double> &ev) {
  std::size_t best = 1;
  for (std::size_t k = 2; k < ev.size(); ++k)
    if (ev[k] - ev[k - 1] > ev[best] - ev[best - 1])
      best = k;
  return best;
}

NeighborSet neighbors_from_directions(const Eigen::MatrixXd &dirs, const std::vector<double> &delta) {
  NeighborSet nb;
  for (Eigen::Index i = 0; i < dirs.rows(); ++i) {
    nb.indices.push_back(static_cast<std::size_t>(100 + i));
    nb.distances.push_back(delta[static_cast<std::size_t>(i)]);
    nb.zero_distance.push_back(false);
    nb.direction_source.push_back(static_cast<std::size_t>(i));
  }
  nb.directions = dirs;
  return nb;
}

double sse(const Eigen::MatrixXd &x, const std::vector<std::size_t> &labels, std::size_t k) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), x.cols());
  std::vector<double> counts(k, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sums.row(static_cast<Eigen::Index>(labels[i])) += x.row(static_cast<Eigen::Index>(i));
    counts[labels[i]] += 1.0;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Eigen::RowVectorXd c = sums.row(static_cast<Eigen::Index>(labels[i])) / counts[labels[i]];
    total += (x.row(static_cast<Eigen::Index>(i)) - c).squaredNorm();
  }
  return total;
}

} // namespace

TEST_CASE("affinity of identical directions is all ones") {
  Eigen::MatrixXd x(4, 3);
  x.rowwise() = Eigen::RowVector3d(0, 1, 0);
  const auto a = affinity(x, 5.0);
  CHECK((a.array() == 1.0).all());
}

TEST_CASE("affinity of antipodal directions") {
  Eigen::MatrixXd x(2, 2);
  x << 1, 0, -1, 0;
  const auto a = affinity(x, 1.0);
  CHECK(a(0, 1) == doctest::Approx(std::exp(-4.0)));
  CHECK(a(0, 1) == doctest::Approx(0.0183).epsilon(0.01));
  CHECK(a(1, 0) == a(0, 1));
  CHECK(a(0, 0) == 1.0);
}

TEST_CASE("affinity matches an element-wise loop") {
  const auto x = random_directions(6, 5, 4);
  const double eta = 2.5;
  const auto a = affinity(x, eta);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      double sq = 0.0;
      for (int c = 0; c < 5; ++c)
        sq += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      CHECK(std::abs(a(i, j) - std::exp(-eta * sq)) < 1e-12);
    }
}

TEST_CASE("affinity errors") {
  CHECK_THROWS_AS(affinity(Eigen::MatrixXd::Ones(1, 3), 1.0), InvalidArgument);
  CHECK_THROWS_AS(affinity(random_directions(3, 2, 0), 0.0), InvalidArgument);
}

TEST_CASE("choose_k on the all-ones affinity") {
  const std::size_t m = 12;
  const auto diag = choose_k(Eigen::MatrixXd::Ones(m, m), 10);
  // L = mI - J, D = mI: spectrum {0, 1 x (m-1)}.
  REQUIRE(diag.eigenvalues.size() == m);
  CHECK(std::abs(diag.eigenvalues[0]) < 1e-12);
  for (std::size_t i = 1; i < m; ++i)
    CHECK(diag.eigenvalues[i] == doctest::Approx(1.0).epsilon(1e-12));
  const auto oracle = qz_spectrum(Eigen::MatrixXd::Ones(m, m));
  for (std::size_t i = 0; i < m; ++i)
    CHECK(std::abs(diag.eigenvalues[i] - oracle[i]) < 1e-8);
  CHECK(diag.chosen_k == 1);
}

TEST_CASE("choose_k separates two antipodal groups") {
  synthetic::Rng rng(3);
  Eigen::MatrixXd x(16, 4);
  Eigen::Vector4d axis(1, 0, 0, 0);
  for (int i = 0; i < 16; ++i) {
    Eigen::Vector4d v = (i < 8 ? 1.0 : -1.0) * axis + 0.1 * rng.normal_vector(4);
    x.row(i) = v.normalized().transpose();
  }
  const auto a = affinity(x, 8.0);
  const auto diag = choose_k(a, 10);
  const auto oracle = qz_spectrum(a);
  for (std::size_t i = 0; i < oracle.size(); ++i)
    CHECK(std::abs(diag.eigenvalues[i] - oracle[i]) < 1e-8);
  CHECK(argmax_gap(oracle) == 2);
  CHECK(diag.chosen_k == 2);
}

TEST_CASE("cluster cap") {
  // 15 mutually orthogonal groups: the largest gap sits after eigenvalue 15.
  Eigen::MatrixXd x(45, 15);
  x.setZero();
  for (int i = 0; i < 45; ++i)
    x(i, i / 3) = 1.0;
  const auto a = affinity(x, 8.0);
  const auto clamp = choose_k(a, 10, CapMode::kClamp);
  CHECK(clamp.argmax_k == 15);
  CHECK(clamp.chosen_k == 10);
  const auto restrict = choose_k(a, 10, CapMode::kRestrictArgmax);
  CHECK(restrict.argmax_k == 15);
  CHECK(restrict.chosen_k >= 1);
  CHECK(restrict.chosen_k <= 10);
  CHECK(choose_k(a, 20).chosen_k == 15);
  CHECK_THROWS_AS(choose_k(a, 0), InvalidArgument);
}

TEST_CASE("choose_k rejects asymmetric input") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Ones(3, 3);
  a(0, 1) = 0.5;
  CHECK_THROWS_AS(choose_k(a, 10), InvalidArgument);
}

TEST_CASE("property: spectrum bounds, oracle agreement and permutation invariance") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    synthetic::Rng rng(seed + 1000);
    const std::size_t m = 2 + rng.below(38);
    const std::size_t d = 2 + rng.below(6);
    const double eta = 0.2 + 10.0 * rng.uniform();
    const auto x = random_directions(m, d, seed);
    const auto diag = choose_k(affinity(x, eta), 10);
    CHECK(std::abs(diag.eigenvalues.front()) < 1e-8);
    CHECK(std::is_sorted(diag.eigenvalues.begin(), diag.eigenvalues.end()));
    for (double v : diag.eigenvalues) {
      CHECK(v >= 0.0);
      CHECK(v <= 2.0 + 1e-8);
    }
    const auto oracle = qz_spectrum(affinity(x, eta));
    for (std::size_t i = 0; i < m; ++i)
      CHECK(std::abs(diag.eigenvalues[i] - oracle[i]) < 1e-8);

    std::vector<Eigen::Index> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = m - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.below(i + 1)]);
    Eigen::MatrixXd shuffled(x.rows(), x.cols());
    for (std::size_t i = 0; i < m; ++i)
      shuffled.row(static_cast<Eigen::Index>(i)) = x.row(perm[i]);
    CHECK(choose_k(affinity(shuffled, eta), 10).chosen_k == diag.chosen_k);
  }
}

TEST_CASE("cluster with k = 1 gives the mean direction") {
  const auto x = random_directions(10, 3, 2);
  const auto cs = cluster(x, 1, 0);
  CHECK(cs.k() == 1);
  CHECK((cs.centroids.row(0) - x.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::all_of(cs.assignments.begin(), cs.assignments.end(), [](auto a) { return a == 0; }));
}

TEST_CASE("cluster splits perfectly separated data by sign") {
  Eigen::MatrixXd x(10, 2);
  for (int i = 0; i < 10; ++i)
    x.row(i) << (i % 2 == 0 ? 1.0 : -1.0), 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto cs = cluster(x, 2, seed);
    REQUIRE(cs.k() == 2);
    for (int i = 0; i < 10; ++i)
      CHECK(cs.assignments[i] == cs.assignments[i % 2]);
    CHECK(cs.assignments[0] != cs.assignments[1]);
    CHECK(cs.centroids(cs.assignments[0], 0) == 1.0);
    CHECK(cs.centroids(cs.assignments[1], 0) == -1.0);
    CHECK(cs.centroids.col(1).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("cluster result is locally optimal") {
  const auto x = random_directions(40, 4, 8);
  const auto cs = cluster(x, 3, 1);
  REQUIRE(cs.converged);
  for (int i = 0; i < 40; ++i) {
    const double own = (x.row(i) - cs.centroids.row(cs.assignments[i])).squaredNorm();
    for (int c = 0; c < 3; ++c)
      CHECK(own <= (x.row(i) - cs.centroids.row(c)).squaredNorm() + 1e-12);
  }
  // No single-point move lowers the within-cluster sum of squares.
  const double base = sse(x, cs.assignments, 3);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      if (c == cs.assignments[i])
        continue;
      auto moved = cs.assignments;
      moved[i] = c;
      if (std::count(moved.begin(), moved.end(), cs.assignments[i]) == 0)
        continue;
      CHECK(sse(x, moved, 3) >= base - 1e-12);
    }
}

TEST_CASE("property: cluster partition, centroids and reproducibility") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    synthetic::Rng rng(seed + 7);
    const std::size_t m = 2 + rng.below(60);
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(m, 10));
    const auto x = random_directions(m, 2 + rng.below(5), seed);
    const auto a = cluster(x, k, seed);
    const auto b = cluster(x, k, seed);
    CHECK(a.assignments == b.assignments);
    CHECK((a.centroids.array() == b.centroids.array()).all());
    REQUIRE(a.assignments.size() == m);
    for (std::size_t c = 0; c < k; ++c) {
      const auto members = a.members(c);
      REQUIRE_FALSE(members.empty());
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
      for (auto i : members)
        mean += x.row(static_cast<Eigen::Index>(i));
      mean /= static_cast<double>(members.size());
      CHECK((a.centroids.row(static_cast<Eigen::Index>(c)) - mean).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(a.centroids.row(static_cast<Eigen::Index>(c)).norm() <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("cluster handles coincident points and bad k") {
  Eigen::MatrixXd x(5, 2);
  x.rowwise() = Eigen::RowVector2d(0, 1);
  const auto cs = cluster(x, 3, 0);
  for (std::size_t c = 0; c < 3; ++c)
    CHECK_FALSE(cs.members(c).empty());
  CHECK_THROWS_AS(cluster(x, 6, 0), InvalidArgument);
  CHECK_THROWS_AS(cluster(x, 0, 0), InvalidArgument);
}

TEST_CASE("previews sort by distance and truncate") {
  Eigen::MatrixXd x(3, 2);
  x << 1, 0, 1, 0, 1, 0;
  const auto nb = neighbors_from_directions(x, {0.5, 0.2, 0.9});
  ClusterSet cs;
  cs.assignments = {0, 0, 0};
  cs.centroids = Eigen::MatrixXd::Zero(1, 2);
  const auto all = previews(cs, nb, 10);
  CHECK(all.previews[0].size() == 3);
  const auto two = previews(cs, nb, 2);
  REQUIRE(two.previews[0].size() == 2);
  CHECK(two.previews[0][0].index == 101);
  CHECK(two.previews[0][0].delta == 0.2);
  CHECK(two.previews[0][1].index == 100);
}

TEST_CASE("previews match a filter-sort-truncate oracle") {
  synthetic::Rng rng(12);
  const auto x = random_directions(50, 3, 12);
  std::vector<double> delta;
  for (int i = 0; i < 50; ++i)
    delta.push_back(std::floor(rng.uniform() * 20.0) / 4.0); // with ties
  const auto nb = neighbors_from_directions(x, delta);
  const auto cs = previews(cluster(x, 4, 3), nb, 5);
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<std::pair<double, std::size_t>> oracle;
    for (std::size_t i = 0; i < 50; ++i)
      if (cs.assignments[i] == c)
        oracle.emplace_back(delta[i], nb.indices[i]);
    std::sort(oracle.begin(), oracle.end());
    oracle.resize(std::min<std::size_t>(5, oracle.size()));
    REQUIRE(cs.previews[c].size() == oracle.size());
    for (std::size_t j = 0; j < oracle.size(); ++j) {
      CHECK(cs.previews[c][j].index == oracle[j].second);
      CHECK(cs.previews[c][j].delta == oracle[j].first);
    }
  }
}

TEST_CASE("selection validation") {
  const FeedbackSelection sel({2, 0, 2});
  CHECK(sel.selected == std::vector<std::size_t>{0, 2});
  CHECK(sel.contains(2));
  CHECK_NOTHROW(validate_selection(sel, 3));
  CHECK_THROWS_AS(validate_selection(sel, 2), IndexError);
  CHECK(FeedbackSelection().empty());
}

TEST_CASE("default eta is sqrt(d)") {
  CHECK(default_eta(512) == doctest::Approx(22.627417));
  Eigen::MatrixXd x = random_directions(5, 512, 1);
  const auto nb = neighbors_from_directions(x, {1, 2, 3, 4, 5});
  const auto res = disambiguate(nb, {});
  CHECK(res.diagnostics.eta == doctest::Approx(std::sqrt(512.0)));
}

TEST_CASE("disambiguate identical directions gives one cluster") {
  Eigen::MatrixXd x(20, 3);
  x.rowwise() = Eigen::RowVector3d(0, 0, 1);
  std::vector<double> delta(20);
  std::iota(delta.begin(), delta.end(), 1.0);
  const auto res = disambiguate(neighbors_from_directions(x, delta), {});
  CHECK(res.clusters.k() == 1);
  CHECK(res.clusters.members(0).size() == 20);
  CHECK(res.clusters.previews[0].size() == 10);
}

TEST_CASE("disambiguate recovers three bundles") {
  synthetic::BundleConfig cfg;
  const auto data = synthetic::make_bundle_neighborhood(cfg);
  const Query q{data.query, std::nullopt};
  const auto nb = knn(data.store, q, 200);
  const auto res = disambiguate(nb, {});
  REQUIRE(res.clusters.k() == 3);
  // Each cluster maps onto exactly one generating bundle.
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t r = 0; r < nb.direction_count(); ++r)
    pairs.emplace(res.clusters.assignments[r], data.truth[nb.direction_item(r)]);
  CHECK(pairs.size() == 3);
}

TEST_CASE("disambiguate falls back with fewer than two directions") {
  ScopedWarningCapture capture;
  Eigen::MatrixXd one(1, 2);
  one << 0, 1;
  const auto res = disambiguate(neighbors_from_directions(one, {3.0}), {});
  CHECK(res.clusters.k() == 1);
  CHECK(res.clusters.previews[0].size() == 1);
  CHECK(capture.count() == 1);

  NeighborSet dup;
  dup.indices = {4};
  dup.distances = {0.0};
  dup.zero_distance = {true};
  dup.directions.resize(0, 2);
  const auto empty = disambiguate(dup, {});
  CHECK(empty.clusters.k() == 0);
  CHECK(capture.count() == 2);
}

TEST_CASE("diagnostics serialise to JSON") {
  const auto x = random_directions(6, 3, 1);
  const auto res = disambiguate(neighbors_from_directions(x, {1, 2, 3, 4, 5, 6}), {});
  const auto j = diagnostics_to_json(res.diagnostics, true);
  CHECK(j["eigenvalues"].size() == 6);
  CHECK(j["affinity"].size() == 6);
  CHECK(j["chosen_k"].get<std::size_t>() == res.clusters.k());
  CHECK(j["cap_mode"] == "clamp");
}
