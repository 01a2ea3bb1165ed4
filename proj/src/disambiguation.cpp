#include "aid/disambiguation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "aid/error.hpp"
#include "aid/log.hpp"

namespace aid {

Eigen::MatrixXd affinity(const Eigen::MatrixXd &directions, double eta) {
  const auto m = directions.rows();
  if (m < 2)
    throw InvalidArgument("affinity needs at least 2 directions, got " + std::to_string(m));
  if (!(eta > 0.0) || !std::isfinite(eta))
    throw InvalidArgument("eta must be a positive finite number");
  Eigen::MatrixXd a(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    a(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double sq = (directions.row(i) - directions.row(j)).squaredNorm();
      a(i, j) = a(j, i) = std::exp(-eta * sq);
    }
  }
  return a;
}

std::vector<double> generalized_laplacian_spectrum(const Eigen::MatrixXd &a) {
  const auto m = a.rows();
  if (m < 1 || a.cols() != m)
    throw InvalidArgument("affinity must be a non-empty square matrix");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidArgument("affinity matrix is not symmetric");

  const Eigen::VectorXd s = a.rowwise().sum();
  if ((s.array() <= 0.0).any())
    throw InvalidArgument("affinity has a non-positive row sum");
  const Eigen::VectorXd inv_sqrt = s.array().rsqrt();

  Eigen::MatrixXd normalized = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
  normalized.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(normalized, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw Error("eigensolver failed to converge");

  std::vector<double> values(solver.eigenvalues().begin(), solver.eigenvalues().end());
  std::sort(values.begin(), values.end());
  for (auto &v : values)
    v = std::max(v, 0.0);
  return values;
}

EigengapDiagnostics choose_k(const Eigen::MatrixXd &a, std::size_t cap, CapMode mode) {
  if (cap < 1)
    throw InvalidArgument("cluster cap must be >= 1");
  EigengapDiagnostics diag;
  diag.affinity = a;
  diag.cap = cap;
  diag.cap_mode = mode;
  diag.eigenvalues = generalized_laplacian_spectrum(a);

  const std::size_t m = diag.eigenvalues.size();
  auto argmax_gap = [&](std::size_t last) {
    // k in [1, last]: gap between eigenvalue k and k+1 (1-based).
    std::size_t best = 1;
    double best_gap = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= last; ++k) {
      const double gap = diag.eigenvalues[k] - diag.eigenvalues[k - 1];
      if (gap > best_gap) {
        best_gap = gap;
        best = k;
      }
    }
    return best;
  };

  if (m < 2) {
    diag.argmax_k = diag.chosen_k = 1;
    return diag;
  }
  diag.argmax_k = argmax_gap(m - 1);
  diag.chosen_k = mode == CapMode::kClamp ? std::min(diag.argmax_k, cap)
                                          : argmax_gap(std::min(cap, m - 1));
  return diag;
}

// --- k-means --------------------------------------------------------------

std::vector<std::size_t> ClusterSet::members(std::size_t c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == c)
      out.push_back(i);
  return out;
}

namespace {

// Uniform double in [0, 1) from the raw engine output; std distributions are
// implementation-defined and would break cross-platform reproducibility.
double uniform01(std::mt19937_64 &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd &x, std::size_t k, std::mt19937_64 &rng) {
  const auto m = static_cast<std::size_t>(x.rows());
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), x.cols());
  std::vector<bool> taken(m, false);

  std::size_t first = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(m)), m - 1);
  centers.row(0) = x.row(static_cast<Eigen::Index>(first));
  taken[first] = true;

  std::vector<double> d2(m);
  for (std::size_t i = 0; i < m; ++i)
    d2[i] = (x.row(static_cast<Eigen::Index>(i)) - centers.row(0)).squaredNorm();

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (auto v : d2)
      total += v;
    std::size_t pick = m;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && target < acc) {
          pick = i;
          break;
        }
      }
      if (pick == m) // rounding at the tail
        for (std::size_t i = m; i-- > 0;)
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
    } else {
      // All remaining points coincide with a center: take the first unused.
      for (std::size_t i = 0; i < m; ++i)
        if (!taken[i]) {
          pick = i;
          break;
        }
    }
    taken[pick] = true;
    centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < m; ++i)
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) -
                               centers.row(static_cast<Eigen::Index>(c))).squaredNorm());
  }
  return centers;
}

// Nearest center per point (ties to the lower id), then repair empty clusters
// by moving in the point farthest from its center among clusters of size > 1.
std::vector<std::size_t> assign(const Eigen::MatrixXd &x, const Eigen::MatrixXd &centers) {
  const auto m = static_cast<std::size_t>(x.rows());
  const auto k = static_cast<std::size_t>(centers.rows());
  std::vector<std::size_t> labels(m);
  std::vector<double> dist(m);
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t i = 0; i < m; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double d = (x.row(static_cast<Eigen::Index>(i)) -
                        centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    labels[i] = arg;
    dist[i] = best;
    ++sizes[arg];
  }

  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] != 0)
      continue;
    std::size_t far = m;
    for (std::size_t i = 0; i < m; ++i)
      if (sizes[labels[i]] > 1 && (far == m || dist[i] > dist[far]))
        far = i;
    --sizes[labels[far]];
    labels[far] = c;
    dist[far] = 0.0;
    sizes[c] = 1;
  }
  return labels;
}

Eigen::MatrixXd means(const Eigen::MatrixXd &x, const std::vector<std::size_t> &labels,
                      std::size_t k) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), x.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sums.row(static_cast<Eigen::Index>(labels[i])) += x.row(static_cast<Eigen::Index>(i));
    ++counts[labels[i]];
  }
  for (std::size_t c = 0; c < k; ++c)
    sums.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
  return sums;
}

} // namespace

ClusterSet cluster(const Eigen::MatrixXd &directions, std::size_t k, std::uint64_t seed,
                   const KMeansOptions &options) {
  const auto m = static_cast<std::size_t>(directions.rows());
  if (k < 1)
    throw InvalidArgument("k must be >= 1");
  if (k > m)
    throw InvalidArgument("k = " + std::to_string(k) + " exceeds the " + std::to_string(m) +
                          " available directions");

  std::mt19937_64 rng(seed);
  ClusterSet cs;
  Eigen::MatrixXd centers = kmeanspp_init(directions, k, rng);
  cs.assignments = assign(directions, centers);
  cs.converged = false;
  for (cs.iterations = 1; cs.iterations <= options.max_iterations; ++cs.iterations) {
    centers = means(directions, cs.assignments, k);
    auto next = assign(directions, centers);
    if (next == cs.assignments) {
      cs.converged = true;
      break;
    }
    cs.assignments = std::move(next);
  }
  cs.iterations = std::min(cs.iterations, options.max_iterations);
  cs.centroids = means(directions, cs.assignments, k);
  return cs;
}

ClusterSet previews(ClusterSet clusters, const NeighborSet &neighbors, std::size_t r) {
  if (clusters.assignments.size() != neighbors.direction_count())
    throw InvalidArgument("cluster assignments do not match the neighbor directions");
  clusters.r = r;
  clusters.previews.assign(clusters.k(), {});
  for (std::size_t row = 0; row < clusters.assignments.size(); ++row)
    clusters.previews[clusters.assignments[row]].push_back(
        {neighbors.direction_item(row), neighbors.direction_delta(row)});
  for (auto &list : clusters.previews) {
    std::sort(list.begin(), list.end(), [](const PreviewItem &a, const PreviewItem &b) {
      if (a.delta != b.delta)
        return a.delta < b.delta;
      return a.index < b.index;
    });
    if (list.size() > r)
      list.resize(r);
  }
  return clusters;
}

// --- selection ------------------------------------------------------------

FeedbackSelection::FeedbackSelection(std::vector<std::size_t> ids) : selected(std::move(ids)) {
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
}

bool FeedbackSelection::contains(std::size_t id) const {
  return std::binary_search(selected.begin(), selected.end(), id);
}

void validate_selection(const FeedbackSelection &selection, std::size_t k) {
  for (auto id : selection.selected)
    if (id >= k)
      throw IndexError("cluster id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(k) + ")");
}

// --- pipeline -------------------------------------------------------------

double default_eta(std::size_t d) { return std::sqrt(static_cast<double>(d)); }

Disambiguation disambiguate(const NeighborSet &neighbors, const DisambiguationParams &params) {
  const auto usable = neighbors.direction_count();
  const double eta = params.eta.value_or(default_eta(static_cast<std::size_t>(neighbors.directions.cols())));
  Disambiguation out;

  if (usable < 2) {
    warn("disambiguation: only " + std::to_string(usable) +
         " usable direction(s); returning a trivial clustering");
    out.diagnostics.eta = eta;
    out.diagnostics.cap = params.cap;
    out.diagnostics.cap_mode = params.cap_mode;
    if (usable == 1) {
      out.diagnostics.affinity = Eigen::MatrixXd::Ones(1, 1);
      out.diagnostics.eigenvalues = {0.0};
      out.diagnostics.argmax_k = out.diagnostics.chosen_k = 1;
      out.clusters.assignments = {0};
      out.clusters.centroids = neighbors.directions;
    } else {
      out.clusters.centroids.resize(0, neighbors.directions.cols());
    }
    out.clusters = previews(std::move(out.clusters), neighbors, params.r);
    return out;
  }

  out.diagnostics = choose_k(affinity(neighbors.directions, eta), params.cap, params.cap_mode);
  out.diagnostics.eta = eta;
  out.clusters = previews(
      cluster(neighbors.directions, out.diagnostics.chosen_k, params.seed, params.kmeans),
      neighbors, params.r);
  return out;
}

const char *to_string(CapMode mode) {
  return mode == CapMode::kClamp ? "clamp" : "restrict";
}

CapMode cap_mode_from_string(const std::string &name) {
  if (name == "clamp")
    return CapMode::kClamp;
  if (name == "restrict")
    return CapMode::kRestrictArgmax;
  throw InvalidArgument("unknown cap mode '" + name + "' (expected clamp|restrict)");
}

nlohmann::json diagnostics_to_json(const EigengapDiagnostics &diag, bool include_affinity) {
  nlohmann::json j{{"eta", diag.eta},
                   {"eigenvalues", diag.eigenvalues},
                   {"argmax_k", diag.argmax_k},
                   {"chosen_k", diag.chosen_k},
                   {"cap", diag.cap},
                   {"cap_mode", to_string(diag.cap_mode)},
                   {"m", diag.eigenvalues.size()}};
  if (include_affinity) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < diag.affinity.rows(); ++i)
      rows.push_back(std::vector<double>(diag.affinity.row(i).begin(), diag.affinity.row(i).end()));
    j["affinity"] = std::move(rows);
  }
  return j;
}

} // namespace aid
