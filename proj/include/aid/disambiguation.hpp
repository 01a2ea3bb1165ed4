#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "aid/retrieval.hpp"

namespace aid {

/// How the cluster cap interacts with the eigengap argmax.
enum class CapMode {
  kClamp,          // k = min(argmax over all gaps, cap)
  kRestrictArgmax, // k = argmax over gaps with index <= cap
};

struct EigengapDiagnostics {
  Eigen::MatrixXd affinity;
  double eta = 0.0;
  std::vector<double> eigenvalues; // ascending
  std::size_t argmax_k = 0;        // before the cap
  std::size_t chosen_k = 0;
  std::size_t cap = 10;
  CapMode cap_mode = CapMode::kClamp;
};

/// A_ij = exp(-eta * |x_i - x_j|^2) over unit direction rows.
Eigen::MatrixXd affinity(const Eigen::MatrixXd &directions, double eta);

/// Ascending eigenvalues of L v = lambda D v with L = D - A, D = diag(rowsum A).
///
/// Solved through the symmetric form I - D^-1/2 A D^-1/2. Values are clamped
/// at 0 from below since L is positive semi-definite.
std::vector<double> generalized_laplacian_spectrum(const Eigen::MatrixXd &affinity);

/// Picks k at the largest gap between consecutive eigenvalues (smallest index
/// on ties) and applies the cap. `eta` in the result is left for the caller.
EigengapDiagnostics choose_k(const Eigen::MatrixXd &affinity, std::size_t cap,
                             CapMode mode = CapMode::kClamp);

struct PreviewItem {
  std::size_t index; // database index
  double delta;
};

/// k clusters over the direction rows of a NeighborSet.
struct ClusterSet {
  std::vector<std::size_t> assignments; // per direction row, in [0, k)
  Eigen::MatrixXd centroids;            // k x d, mean of member directions, not renormalised
  std::vector<std::vector<PreviewItem>> previews;
  std::size_t r = 0;
  std::size_t iterations = 0;
  bool converged = true;

  std::size_t k() const { return static_cast<std::size_t>(centroids.rows()); }
  /// Direction rows belonging to cluster c, ascending.
  std::vector<std::size_t> members(std::size_t c) const;
};

struct KMeansOptions {
  std::size_t max_iterations = 300;
};

/// k-means++ seeding followed by Lloyd iterations. Deterministic for a seed.
ClusterSet cluster(const Eigen::MatrixXd &directions, std::size_t k, std::uint64_t seed,
                   const KMeansOptions &options = {});

/// Fills previews: each cluster's members by ascending distance to the query
/// (ties by database index), truncated to r.
ClusterSet previews(ClusterSet clusters, const NeighborSet &neighbors, std::size_t r);

/// Selected cluster ids, kept sorted and unique. Empty means no refinement.
struct FeedbackSelection {
  std::vector<std::size_t> selected;

  FeedbackSelection() = default;
  explicit FeedbackSelection(std::vector<std::size_t> ids);
  bool empty() const { return selected.empty(); }
  bool contains(std::size_t id) const;
};

/// Throws IndexError if an id is >= k.
void validate_selection(const FeedbackSelection &selection, std::size_t k);

struct DisambiguationParams {
  std::optional<double> eta; // default sqrt(d)
  std::size_t cap = 10;
  std::size_t r = 10;
  std::uint64_t seed = 0;
  CapMode cap_mode = CapMode::kClamp;
  KMeansOptions kmeans;
};

double default_eta(std::size_t d);

struct Disambiguation {
  ClusterSet clusters;
  EigengapDiagnostics diagnostics;
};

/// affinity -> choose_k -> cluster -> previews.
///
/// With fewer than two usable directions the eigengap step is skipped: one
/// direction gives a single cluster, none gives k = 0. Both cases warn.
Disambiguation disambiguate(const NeighborSet &neighbors, const DisambiguationParams &params);

nlohmann::json diagnostics_to_json(const EigengapDiagnostics &diag, bool include_affinity = false);
const char *to_string(CapMode mode);
CapMode cap_mode_from_string(const std::string &name);

} // namespace aid
