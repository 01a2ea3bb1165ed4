#include "aid/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aid/error.hpp"

namespace aid {

Query query_from_item(const FeatureStore &store, std::size_t index, bool exclude_self) {
  if (index >= store.n())
    throw IndexError("item index " + std::to_string(index) + " out of range [0, " +
                     std::to_string(store.n()) + ")");
  Query q{store.row_as_double(index), std::nullopt};
  if (exclude_self)
    q.exclude_index = index;
  return q;
}

void validate_query(const FeatureStore &store, const Query &query) {
  if (static_cast<std::size_t>(query.vector.size()) != store.d())
    throw DimensionMismatch("query has dimension " + std::to_string(query.vector.size()) +
                            ", store has d = " + std::to_string(store.d()));
  if (!query.vector.allFinite())
    throw ValidationError("query vector contains non-finite values");
  if (query.exclude_index && *query.exclude_index >= store.n())
    throw IndexError("exclude index " + std::to_string(*query.exclude_index) +
                     " out of range");
}

double DistanceScan::max_eligible() const {
  double best = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i)
    if (eligible(i))
      best = std::max(best, delta[i]);
  return best;
}

DistanceScan all_distances(const FeatureStore &store, const Query &query) {
  validate_query(store, query);
  DistanceScan scan;
  scan.excluded = query.exclude_index;
  scan.delta.resize(store.n());
  const auto &x = store.vectors();
  const auto d = static_cast<Eigen::Index>(store.d());
  for (std::size_t i = 0; i < store.n(); ++i) {
    if (!scan.eligible(i)) {
      scan.delta[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const auto row = static_cast<Eigen::Index>(i);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double diff = static_cast<double>(x(row, j)) - query.vector(j);
      acc += diff * diff;
    }
    scan.delta[i] = std::sqrt(acc);
  }
  return scan;
}

namespace {

std::vector<std::size_t> eligible_indices(const DistanceScan &scan) {
  std::vector<std::size_t> idx;
  idx.reserve(scan.eligible_count());
  for (std::size_t i = 0; i < scan.size(); ++i)
    if (scan.eligible(i))
      idx.push_back(i);
  return idx;
}

auto by_distance(const DistanceScan &scan) {
  return [&scan](std::size_t a, std::size_t b) {
    if (scan.delta[a] != scan.delta[b])
      return scan.delta[a] < scan.delta[b];
    return a < b;
  };
}

} // namespace

std::vector<std::size_t> baseline_order(const DistanceScan &scan) {
  auto idx = eligible_indices(scan);
  std::sort(idx.begin(), idx.end(), by_distance(scan));
  return idx;
}

NeighborSet knn(const FeatureStore &store, const Query &query, std::size_t m) {
  return knn(store, query, all_distances(store, query), m);
}

NeighborSet knn(const FeatureStore &store, const Query &query, const DistanceScan &scan,
                std::size_t m) {
  if (m < 1)
    throw InvalidArgument("neighborhood size m must be >= 1");
  if (scan.size() != store.n())
    throw DimensionMismatch("distance scan does not match store size");
  auto idx = eligible_indices(scan);
  if (idx.empty())
    throw InvalidArgument("no eligible database items for the query");

  const std::size_t take = std::min(m, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(),
                    by_distance(scan));
  idx.resize(take);

  NeighborSet nb;
  nb.indices = std::move(idx);
  nb.distances.reserve(take);
  nb.zero_distance.reserve(take);
  for (auto i : nb.indices) {
    nb.distances.push_back(scan.delta[i]);
    nb.zero_distance.push_back(scan.delta[i] == 0.0);
    if (scan.delta[i] != 0.0)
      nb.direction_source.push_back(nb.distances.size() - 1);
  }

  nb.directions.resize(static_cast<Eigen::Index>(nb.direction_source.size()),
                       static_cast<Eigen::Index>(store.d()));
  for (std::size_t r = 0; r < nb.direction_source.size(); ++r) {
    const auto pos = nb.direction_source[r];
    const Eigen::VectorXd diff = store.row_as_double(nb.indices[pos]) - query.vector;
    nb.directions.row(static_cast<Eigen::Index>(r)) = (diff / nb.distances[pos]).transpose();
  }
  return nb;
}

} // namespace aid
