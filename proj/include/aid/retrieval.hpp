#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "aid/dataset.hpp"

namespace aid {

struct Query {
  Eigen::VectorXd vector;
  std::optional<std::size_t> exclude_index; // self-query: omit this item
};

/// Query positioned at a database item. The item is excluded by default.
Query query_from_item(const FeatureStore &store, std::size_t index, bool exclude_self = true);

/// Throws DimensionMismatch / ValidationError / IndexError.
void validate_query(const FeatureStore &store, const Query &query);

/// Euclidean distance from the query to every database item.
struct DistanceScan {
  std::vector<double> delta;          // length n; excluded entry holds NaN
  std::optional<std::size_t> excluded;

  std::size_t size() const { return delta.size(); }
  bool eligible(std::size_t i) const { return !excluded || *excluded != i; }
  std::size_t eligible_count() const { return delta.size() - (excluded ? 1 : 0); }
  /// max over eligible items; 0 when nothing is eligible.
  double max_eligible() const;
};

DistanceScan all_distances(const FeatureStore &store, const Query &query);

/// Every eligible index sorted by ascending distance, ties by ascending index.
std::vector<std::size_t> baseline_order(const DistanceScan &scan);

/// The m nearest neighbors of a query and their unit directions from it.
///
/// Neighbors at distance 0 stay in `indices` but get no direction row;
/// `direction_source[r]` is the neighbor position of direction row r.
struct NeighborSet {
  std::vector<std::size_t> indices;
  std::vector<double> distances;
  std::vector<bool> zero_distance;
  Eigen::MatrixXd directions; // one unit row per non-zero-distance neighbor
  std::vector<std::size_t> direction_source;

  std::size_t m() const { return indices.size(); }
  std::size_t direction_count() const { return direction_source.size(); }
  /// Database index of direction row r.
  std::size_t direction_item(std::size_t r) const { return indices[direction_source[r]]; }
  double direction_delta(std::size_t r) const { return distances[direction_source[r]]; }
};

NeighborSet knn(const FeatureStore &store, const Query &query, std::size_t m);

/// knn over a precomputed scan (avoids a second pass over the store).
NeighborSet knn(const FeatureStore &store, const Query &query, const DistanceScan &scan,
                std::size_t m);

} // namespace aid
