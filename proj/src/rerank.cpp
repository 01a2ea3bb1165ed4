#include "aid/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aid/error.hpp"

namespace aid {

void RerankParams::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma))
    throw InvalidArgument("gamma must be a finite value >= 0");
  if (beta && (!(*beta > 0.0) || !std::isfinite(*beta)))
    throw InvalidArgument("beta must be a finite value > 0");
}

double sigma(const Eigen::VectorXd &offset, const Eigen::MatrixXd &centroids) {
  const double offset_norm = offset.norm();
  if (offset_norm == 0.0)
    return 1.0;
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double cn = centroids.row(c).norm();
    if (cn == 0.0)
      continue;
    best = std::max(best, centroids.row(c).dot(offset) / (cn * offset_norm));
  }
  if (best == -std::numeric_limits<double>::infinity())
    return 0.0;
  return std::clamp(best, -1.0, 1.0);
}

double sigma(const Eigen::VectorXd &item, const Query &query, const Eigen::MatrixXd &centroids) {
  return sigma(Eigen::VectorXd(item - query.vector), centroids);
}

double adjusted_distance(double delta, double sigma, double gamma, double beta) {
  if (sigma == 0.0)
    return delta;
  const double sign = sigma > 0.0 ? 1.0 : -1.0;
  const double adjusted = delta - sign * std::pow(std::abs(sigma), gamma) * beta;
  // A push too small to survive rounding still has to move the item away.
  if (sigma < 0.0 && adjusted <= delta)
    return std::nextafter(delta, std::numeric_limits<double>::infinity());
  return adjusted;
}

namespace {

void sort_by_scores(RankedList &list) {
  std::sort(list.order.begin(), list.order.end(), [&list](std::size_t a, std::size_t b) {
    if (list.delta_tilde[a] != list.delta_tilde[b])
      return list.delta_tilde[a] < list.delta_tilde[b];
    if (list.delta[a] != list.delta[b])
      return list.delta[a] < list.delta[b];
    return a < b;
  });
}

} // namespace

RankedList baseline_ranking(const DistanceScan &scan) {
  RankedList list;
  list.order = baseline_order(scan);
  list.delta = scan.delta;
  list.delta_tilde = scan.delta;
  list.sigma.assign(scan.size(), 0.0);
  if (scan.excluded)
    list.sigma[*scan.excluded] = std::numeric_limits<double>::quiet_NaN();
  list.beta = scan.max_eligible();
  return list;
}

RankedList rerank(const FeatureStore &store, const Query &query, const ClusterSet &clusters,
                  const FeedbackSelection &selection, const RerankParams &params) {
  return rerank(store, query, all_distances(store, query), clusters, selection, params);
}

RankedList rerank(const FeatureStore &store, const Query &query, const DistanceScan &scan,
                  const ClusterSet &clusters, const FeedbackSelection &selection,
                  const RerankParams &params) {
  params.validate();
  validate_selection(selection, clusters.k());
  if (scan.size() != store.n())
    throw DimensionMismatch("distance scan does not match store size");
  if (selection.empty())
    return baseline_ranking(scan);

  Eigen::MatrixXd chosen(static_cast<Eigen::Index>(selection.selected.size()),
                         clusters.centroids.cols());
  for (std::size_t i = 0; i < selection.selected.size(); ++i)
    chosen.row(static_cast<Eigen::Index>(i)) =
        clusters.centroids.row(static_cast<Eigen::Index>(selection.selected[i]));
  if (static_cast<std::size_t>(chosen.cols()) != store.d())
    throw DimensionMismatch("centroid dimension does not match the store");

  RankedList list;
  list.refined = true;
  list.beta = params.beta.value_or(scan.max_eligible());
  list.order = baseline_order(scan);
  list.delta = scan.delta;
  list.sigma.assign(store.n(), std::numeric_limits<double>::quiet_NaN());
  list.delta_tilde.assign(store.n(), std::numeric_limits<double>::quiet_NaN());

  Eigen::VectorXd offset(static_cast<Eigen::Index>(store.d()));
  for (auto i : list.order) {
    offset = store.row_as_double(i) - query.vector;
    list.sigma[i] = sigma(offset, chosen);
    list.delta_tilde[i] = adjusted_distance(list.delta[i], list.sigma[i], params.gamma, list.beta);
  }
  sort_by_scores(list);
  return list;
}

} // namespace aid
