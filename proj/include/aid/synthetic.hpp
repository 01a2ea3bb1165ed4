#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "aid/dataset.hpp"
#include "aid/eval.hpp"

namespace aid::synthetic {

/// Gaussian noise from the raw engine bits (Box-Muller), identical on every
/// standard library.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(); // [0, 1)
  double normal();
  std::size_t below(std::size_t bound);
  Eigen::VectorXd normal_vector(std::size_t d);
  Eigen::VectorXd unit_vector(std::size_t d);

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct TopicMixtureConfig {
  std::size_t d = 32;
  std::size_t topics = 5;
  std::size_t items_per_topic = 400;
  double noise = 0.15;          // per-coordinate standard deviation
  double min_angle_deg = 60.0;  // between any two topic means
  std::size_t queries = 100;
  std::uint64_t seed = 0;
};

/// Topic Gaussians around unit-norm means plus queries placed around the
/// midpoint of two topic means. Every query is issued once for each of its
/// two topics.
struct TopicMixture {
  FeatureStore store;
  TopicLabels labels;
  Eigen::MatrixXd means; // topics x d
  std::vector<EvalQuery> queries;
};

TopicMixture make_topic_mixture(const TopicMixtureConfig &config);

struct BundleConfig {
  std::size_t d = 8;
  std::size_t bundles = 3;
  std::size_t per_bundle = 20;
  double angular_noise = 0.05; // per-coordinate noise added to a bundle axis
  double min_radius = 0.5;
  double max_radius = 2.0;
  std::uint64_t seed = 0;
};

/// Directions from a query that fall into tight bundles spread evenly over a
/// plane (120 degrees apart for three bundles). `truth[i]` is the bundle of
/// database item i; the query sits at the origin and is not in the store.
struct BundleNeighborhood {
  FeatureStore store;
  Eigen::VectorXd query;
  std::vector<std::size_t> truth;
};

BundleNeighborhood make_bundle_neighborhood(const BundleConfig &config);

} // namespace aid::synthetic
