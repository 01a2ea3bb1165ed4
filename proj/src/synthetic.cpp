#include "aid/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "aid/error.hpp"

namespace aid::synthetic {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0)
    u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::below(std::size_t bound) {
  return std::min(static_cast<std::size_t>(uniform() * static_cast<double>(bound)), bound - 1);
}

Eigen::VectorXd Rng::normal_vector(std::size_t d) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v(i) = normal();
  return v;
}

Eigen::VectorXd Rng::unit_vector(std::size_t d) {
  Eigen::VectorXd v = normal_vector(d);
  while (v.norm() == 0.0)
    v = normal_vector(d);
  return v / v.norm();
}

TopicMixture make_topic_mixture(const TopicMixtureConfig &config) {
  if (config.topics < 2 || config.d < 2 || config.items_per_topic < 1)
    throw InvalidArgument("topic mixture needs >= 2 topics, d >= 2 and items per topic");
  Rng rng(config.seed);
  const auto t = static_cast<Eigen::Index>(config.topics);
  const auto d = static_cast<Eigen::Index>(config.d);
  const double max_cos = std::cos(config.min_angle_deg * std::numbers::pi / 180.0);

  Eigen::MatrixXd means(t, d);
  for (Eigen::Index i = 0; i < t; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000)
        throw InvalidArgument("cannot place topic means with the requested separation");
      const Eigen::VectorXd candidate = rng.unit_vector(config.d);
      bool ok = true;
      for (Eigen::Index j = 0; j < i && ok; ++j)
        ok = means.row(j).dot(candidate) <= max_cos;
      if (ok) {
        means.row(i) = candidate.transpose();
        break;
      }
    }
  }

  const std::size_t n = config.topics * config.items_per_topic;
  RowMatrixF vectors(static_cast<Eigen::Index>(n), d);
  TopicLabels labels;
  for (std::size_t i = 0; i < config.topics; ++i)
    labels.topics.push_back("topic" + std::to_string(i));
  labels.assignments.resize(n);
  for (std::size_t topic = 0, row = 0; topic < config.topics; ++topic)
    for (std::size_t j = 0; j < config.items_per_topic; ++j, ++row) {
      const Eigen::VectorXd x = means.row(static_cast<Eigen::Index>(topic)).transpose() +
                                config.noise * rng.normal_vector(config.d);
      vectors.row(static_cast<Eigen::Index>(row)) = x.transpose().cast<float>();
      labels.assignments[row] = {topic};
    }

  std::vector<EvalQuery> queries;
  for (std::size_t q = 0; q < config.queries; ++q) {
    const std::size_t a = rng.below(config.topics);
    std::size_t b = rng.below(config.topics - 1);
    if (b >= a)
      ++b;
    const Eigen::VectorXd mid = 0.5 * (means.row(static_cast<Eigen::Index>(a)) +
                                       means.row(static_cast<Eigen::Index>(b))).transpose();
    const Eigen::VectorXd v = mid + config.noise * rng.normal_vector(config.d);
    // Round through f32 so the query lives on the same grid as the store.
    const Eigen::VectorXd qv = v.cast<float>().cast<double>();
    queries.push_back({Query{qv, std::nullopt}, std::min(a, b)});
    queries.push_back({Query{qv, std::nullopt}, std::max(a, b)});
  }

  return TopicMixture{FeatureStore(std::move(vectors)), std::move(labels), std::move(means),
                      std::move(queries)};
}

BundleNeighborhood make_bundle_neighborhood(const BundleConfig &config) {
  if (config.d < 2 || config.bundles < 1 || config.per_bundle < 1)
    throw InvalidArgument("bundle neighborhood needs d >= 2 and non-empty bundles");
  Rng rng(config.seed);

  // Random plane spanned by two orthonormal vectors.
  const Eigen::VectorXd u = rng.unit_vector(config.d);
  Eigen::VectorXd v = rng.unit_vector(config.d);
  v -= v.dot(u) * u;
  v.normalize();
  const double phase = 2.0 * std::numbers::pi * rng.uniform();

  const std::size_t n = config.bundles * config.per_bundle;
  RowMatrixF vectors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config.d));
  std::vector<std::size_t> truth(n);
  // Interleave bundles so membership is not a contiguous block.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bundle = i % config.bundles;
    const double angle =
        phase + 2.0 * std::numbers::pi * static_cast<double>(bundle) / static_cast<double>(config.bundles);
    Eigen::VectorXd dir = std::cos(angle) * u + std::sin(angle) * v +
                          config.angular_noise * rng.normal_vector(config.d);
    dir.normalize();
    const double radius = config.min_radius + (config.max_radius - config.min_radius) * rng.uniform();
    vectors.row(static_cast<Eigen::Index>(i)) = (radius * dir).transpose().cast<float>();
    truth[i] = bundle;
  }
  return BundleNeighborhood{FeatureStore(std::move(vectors)),
                            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config.d)),
                            std::move(truth)};
}

} // namespace aid::synthetic
