#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "aid/dataset.hpp"
#include "aid/disambiguation.hpp"
#include "aid/retrieval.hpp"

namespace aid {

struct RerankParams {
  double gamma = 1.0;
  std::optional<double> beta; // unset: beta = max distance over eligible items

  /// Throws InvalidArgument unless gamma >= 0 and an explicit beta is > 0.
  void validate() const;
};

/// Max cosine between (x - q) and the given centroid rows.
///
/// The offset x - q is passed directly. A zero offset yields 1; zero-norm
/// centroids carry no direction and are skipped (all skipped yields 0).
double sigma(const Eigen::VectorXd &offset, const Eigen::MatrixXd &centroids);

double sigma(const Eigen::VectorXd &item, const Query &query, const Eigen::MatrixXd &centroids);

/// delta - sign(sigma) * |sigma|^gamma * beta, with sign(0) = 0. A negative
/// sigma always lands strictly above delta, even when the push rounds away.
double adjusted_distance(double delta, double sigma, double gamma, double beta);

/// A full ranking of the eligible database items with per-item scores.
///
/// Score vectors are indexed by database index (length n); the excluded item
/// holds NaN in each of them and does not appear in `order`.
struct RankedList {
  std::vector<std::size_t> order;
  std::vector<double> delta;
  std::vector<double> sigma;
  std::vector<double> delta_tilde;
  double beta = 0.0;
  bool refined = false;
};

/// Ascending distance, no feedback: sigma = 0 and delta_tilde = delta.
RankedList baseline_ranking(const DistanceScan &scan);

RankedList rerank(const FeatureStore &store, const Query &query, const ClusterSet &clusters,
                  const FeedbackSelection &selection, const RerankParams &params);

/// Same, reusing a distance scan already computed for the query.
RankedList rerank(const FeatureStore &store, const Query &query, const DistanceScan &scan,
                  const ClusterSet &clusters, const FeedbackSelection &selection,
                  const RerankParams &params);

} // namespace aid
