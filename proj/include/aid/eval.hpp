#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aid/dataset.hpp"
#include "aid/disambiguation.hpp"
#include "aid/rerank.hpp"
#include "aid/retrieval.hpp"

namespace aid {

inline constexpr std::size_t kMaxKappa = 100;
using PrecisionCurve = std::array<double, kMaxKappa>;

struct TestCase {
  std::size_t query_index;
  std::size_t target_topic;
};

/// One case per (item, assigned topic) pair. Throws if no item is labelled.
std::vector<TestCase> make_test_cases(const TopicLabels &labels);

/// Membership mask over database indices with a cached size.
class RelevanceSet {
public:
  RelevanceSet(std::size_t universe, std::span<const std::size_t> members);

  bool contains(std::size_t i) const { return i < mask_.size() && mask_[i] != 0; }
  std::size_t size() const { return count_; }

private:
  std::vector<char> mask_;
  std::size_t count_ = 0;
};

/// Fraction of preview items carrying `topic`; 0 for an empty preview.
double preview_precision(std::span<const PreviewItem> preview, std::size_t topic,
                         const TopicLabels &labels);
double preview_precision(std::span<const std::size_t> preview, std::size_t topic,
                         const TopicLabels &labels);

/// Exactly one cluster: highest preview precision, then nearest preview to
/// the query, then lowest id.
FeedbackSelection simulate_single(const ClusterSet &clusters, std::size_t topic,
                                  const TopicLabels &labels);

/// Every cluster whose preview precision is >= threshold. May be empty.
FeedbackSelection simulate_multi(const ClusterSet &clusters, std::size_t topic,
                                 const TopicLabels &labels, double threshold = 0.5);

/// Selected clusters' members first, then the rest of the neighborhood, then
/// the rest of the database; baseline relative order inside each group.
std::vector<std::size_t> hard_selection_rerank(std::span<const std::size_t> baseline,
                                               const NeighborSet &neighbors,
                                               const ClusterSet &clusters,
                                               const FeedbackSelection &selection);

/// Mean of precision at each relevant item's rank, divided by the total
/// relevant count (relevant items missing from `order` contribute 0).
double average_precision(std::span<const std::size_t> order, const RelevanceSet &relevant);

/// |top-kappa intersect relevant| / kappa. A kappa past the end of the list is
/// evaluated over the available prefix and warns.
double precision_at(std::span<const std::size_t> order, const RelevanceSet &relevant,
                    std::size_t kappa);

/// P@1..P@100 in one pass; warns once if the list is shorter than 100.
PrecisionCurve precision_curve(std::span<const std::size_t> order, const RelevanceSet &relevant);

enum class FeedbackMode { kSingle, kMulti };
enum class Method { kBaseline, kAid, kHardSelection };

const char *to_string(FeedbackMode mode);
const char *to_string(Method method);
FeedbackMode feedback_mode_from_string(const std::string &name);
Method method_from_string(const std::string &name);

struct EvalConfig {
  std::size_t m = 200;
  std::optional<double> eta; // default sqrt(d)
  std::size_t cap = 10;
  CapMode cap_mode = CapMode::kClamp;
  std::size_t r = 10;
  double gamma = 1.0;
  std::optional<double> beta;
  std::size_t repetitions = 5;
  std::vector<Method> methods{Method::kBaseline, Method::kAid, Method::kHardSelection};
  FeedbackMode feedback = FeedbackMode::kSingle;
  double multi_threshold = 0.5;
  std::uint64_t seed = 0;
  bool exclude_query = true;
  std::size_t threads = 1; // 0 = hardware concurrency

  void validate() const;
};

/// A query with the topic the simulated user is after.
struct EvalQuery {
  Query query;
  std::size_t target_topic;
};

std::vector<EvalQuery> queries_from_cases(const FeatureStore &store,
                                          std::span<const TestCase> cases, bool exclude_query);

struct MethodResult {
  std::vector<double> map_per_rep;
  std::vector<PrecisionCurve> p_at_per_rep;
  double map_mean = 0.0;
  double map_std = 0.0; // sample standard deviation across repetitions
  PrecisionCurve p_at_mean{};
};

struct EvalReport {
  std::map<std::string, MethodResult> methods;
  std::size_t repetitions = 0;
  std::size_t test_cases = 0;
  std::size_t skipped_cases = 0; // no relevant item left after exclusion
  double mean_k = 0.0;           // average cluster count over cases and reps
  double mean_selected = 0.0;    // average selection size
  std::size_t empty_selections = 0;
  EvalConfig config;
};

/// Per-repetition seed for one case, derived from (seed, repetition, case).
std::uint64_t case_seed(std::uint64_t seed, std::size_t repetition, std::size_t case_index);

/// Evaluates every (item, topic) case from the labels.
EvalReport run_experiment(const FeatureStore &store, const TopicLabels &labels,
                          const EvalConfig &config);

/// Evaluates an explicit query list; relevance is the target topic's members.
EvalReport run_experiment(const FeatureStore &store, const TopicLabels &labels,
                          std::span<const EvalQuery> queries, const EvalConfig &config);

nlohmann::json report_to_json(const EvalReport &report);
std::string report_to_csv(const EvalReport &report);

} // namespace aid
