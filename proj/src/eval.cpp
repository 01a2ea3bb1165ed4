#include "aid/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "aid/error.hpp"
#include "aid/log.hpp"

namespace aid {

std::vector<TestCase> make_test_cases(const TopicLabels &labels) {
  std::vector<TestCase> cases;
  for (std::size_t i = 0; i < labels.assignments.size(); ++i) {
    auto topics = labels.assignments[i];
    std::sort(topics.begin(), topics.end());
    for (auto t : topics)
      cases.push_back({i, t});
  }
  if (cases.empty())
    throw InvalidArgument("no labelled items to build test cases from");
  return cases;
}

RelevanceSet::RelevanceSet(std::size_t universe, std::span<const std::size_t> members)
    : mask_(universe, 0) {
  for (auto i : members) {
    if (i >= universe)
      throw IndexError("relevant index " + std::to_string(i) + " out of range");
    if (!mask_[i]) {
      mask_[i] = 1;
      ++count_;
    }
  }
}

double preview_precision(std::span<const PreviewItem> preview, std::size_t topic,
                         const TopicLabels &labels) {
  if (preview.empty())
    return 0.0;
  std::size_t hits = 0;
  for (const auto &p : preview)
    hits += labels.has_topic(p.index, topic) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preview.size());
}

double preview_precision(std::span<const std::size_t> preview, std::size_t topic,
                         const TopicLabels &labels) {
  if (preview.empty())
    return 0.0;
  std::size_t hits = 0;
  for (auto i : preview)
    hits += labels.has_topic(i, topic) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preview.size());
}

FeedbackSelection simulate_single(const ClusterSet &clusters, std::size_t topic,
                                  const TopicLabels &labels) {
  if (clusters.k() == 0)
    return {};
  if (clusters.previews.size() != clusters.k())
    throw InvalidArgument("clusters have no previews");
  std::size_t best = 0;
  double best_precision = -1.0;
  double best_nearest = 0.0;
  for (std::size_t c = 0; c < clusters.k(); ++c) {
    const double p = preview_precision(clusters.previews[c], topic, labels);
    const double nearest = clusters.previews[c].empty()
                               ? std::numeric_limits<double>::infinity()
                               : clusters.previews[c].front().delta;
    if (p > best_precision || (p == best_precision && nearest < best_nearest)) {
      best = c;
      best_precision = p;
      best_nearest = nearest;
    }
  }
  return FeedbackSelection({best});
}

FeedbackSelection simulate_multi(const ClusterSet &clusters, std::size_t topic,
                                 const TopicLabels &labels, double threshold) {
  if (clusters.previews.size() != clusters.k())
    throw InvalidArgument("clusters have no previews");
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < clusters.k(); ++c)
    if (preview_precision(clusters.previews[c], topic, labels) >= threshold)
      chosen.push_back(c);
  return FeedbackSelection(std::move(chosen));
}

std::vector<std::size_t> hard_selection_rerank(std::span<const std::size_t> baseline,
                                               const NeighborSet &neighbors,
                                               const ClusterSet &clusters,
                                               const FeedbackSelection &selection) {
  validate_selection(selection, clusters.k());
  if (clusters.assignments.size() != neighbors.direction_count())
    throw InvalidArgument("cluster assignments do not match the neighbor directions");

  // 0 = selected cluster member, 1 = other neighbor, 2 = rest of database.
  const std::size_t universe =
      baseline.empty() ? 0 : *std::max_element(baseline.begin(), baseline.end()) + 1;
  std::vector<unsigned char> group(universe, 2);
  for (auto i : neighbors.indices)
    if (i < universe)
      group[i] = 1;
  for (std::size_t row = 0; row < clusters.assignments.size(); ++row)
    if (selection.contains(clusters.assignments[row])) {
      const auto item = neighbors.direction_item(row);
      if (item < universe)
        group[item] = 0;
    }

  std::vector<std::size_t> out;
  out.reserve(baseline.size());
  for (unsigned char g = 0; g < 3; ++g)
    for (auto i : baseline)
      if (group[i] == g)
        out.push_back(i);
  return out;
}

double average_precision(std::span<const std::size_t> order, const RelevanceSet &relevant) {
  if (relevant.size() == 0)
    throw InvalidArgument("average precision needs at least one relevant item");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank)
    if (relevant.contains(order[rank])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  return sum / static_cast<double>(relevant.size());
}

double precision_at(std::span<const std::size_t> order, const RelevanceSet &relevant,
                    std::size_t kappa) {
  if (kappa < 1)
    throw InvalidArgument("kappa must be >= 1");
  std::size_t depth = kappa;
  if (kappa > order.size()) {
    warn("P@" + std::to_string(kappa) + " requested on a ranking of " +
         std::to_string(order.size()) + " items; using the available prefix");
    depth = order.size();
  }
  if (depth == 0)
    return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < depth; ++i)
    hits += relevant.contains(order[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(depth);
}

namespace {

PrecisionCurve curve_over_prefix(std::span<const std::size_t> order, const RelevanceSet &relevant) {
  PrecisionCurve curve{};
  std::size_t hits = 0;
  for (std::size_t k = 1; k <= kMaxKappa; ++k) {
    if (k <= order.size())
      hits += relevant.contains(order[k - 1]) ? 1 : 0;
    const std::size_t depth = std::min(k, order.size());
    curve[k - 1] = depth == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(depth);
  }
  return curve;
}

} // namespace

PrecisionCurve precision_curve(std::span<const std::size_t> order, const RelevanceSet &relevant) {
  if (order.size() < kMaxKappa)
    warn("precision curve on a ranking of " + std::to_string(order.size()) +
         " items; P@kappa past the end uses the available prefix");
  return curve_over_prefix(order, relevant);
}

const char *to_string(FeedbackMode mode) {
  return mode == FeedbackMode::kSingle ? "single" : "multi";
}

const char *to_string(Method method) {
  switch (method) {
  case Method::kBaseline:
    return "baseline";
  case Method::kAid:
    return "aid";
  case Method::kHardSelection:
    return "hard_selection";
  }
  return "?";
}

FeedbackMode feedback_mode_from_string(const std::string &name) {
  if (name == "single")
    return FeedbackMode::kSingle;
  if (name == "multi")
    return FeedbackMode::kMulti;
  throw InvalidArgument("unknown feedback mode '" + name + "' (expected single|multi)");
}

Method method_from_string(const std::string &name) {
  for (auto m : {Method::kBaseline, Method::kAid, Method::kHardSelection})
    if (name == to_string(m))
      return m;
  throw InvalidArgument("unknown method '" + name + "' (expected baseline|aid|hard_selection)");
}

void EvalConfig::validate() const {
  if (m < 1)
    throw InvalidArgument("m must be >= 1");
  if (cap < 1)
    throw InvalidArgument("cap must be >= 1");
  if (r < 1)
    throw InvalidArgument("r must be >= 1");
  if (repetitions < 1)
    throw InvalidArgument("repetitions must be >= 1");
  if (methods.empty())
    throw InvalidArgument("at least one method is required");
  if (eta && !(*eta > 0.0))
    throw InvalidArgument("eta must be > 0");
  RerankParams{gamma, beta}.validate();
}

std::vector<EvalQuery> queries_from_cases(const FeatureStore &store,
                                          std::span<const TestCase> cases, bool exclude_query) {
  std::vector<EvalQuery> out;
  out.reserve(cases.size());
  for (const auto &c : cases)
    out.push_back({query_from_item(store, c.query_index, exclude_query), c.target_topic});
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::size_t kMethodSlots = 3;

struct RepOutcome {
  std::array<double, kMethodSlots> ap{};
  std::array<PrecisionCurve, kMethodSlots> curve{};
  std::size_t k = 0;
  std::size_t selected = 0;
};

struct CaseOutcome {
  bool skipped = false;
  std::vector<RepOutcome> reps;
};

std::size_t slot(Method m) { return static_cast<std::size_t>(m); }

CaseOutcome evaluate_case(const FeatureStore &store, const TopicLabels &labels,
                          const EvalQuery &eq, std::size_t case_index,
                          const EvalConfig &config, const std::array<bool, kMethodSlots> &wanted) {
  CaseOutcome out;
  auto members = labels.members(eq.target_topic);
  if (eq.query.exclude_index)
    std::erase(members, *eq.query.exclude_index);
  if (members.empty()) {
    out.skipped = true;
    return out;
  }
  const RelevanceSet relevant(store.n(), members);

  const DistanceScan scan = all_distances(store, eq.query);
  const std::vector<std::size_t> baseline = baseline_order(scan);
  const double baseline_ap = average_precision(baseline, relevant);
  const PrecisionCurve baseline_curve = curve_over_prefix(baseline, relevant);

  const bool need_clusters = wanted[slot(Method::kAid)] || wanted[slot(Method::kHardSelection)];
  NeighborSet neighbors;
  EigengapDiagnostics diag;
  const double eta = config.eta.value_or(default_eta(store.d()));
  if (need_clusters) {
    neighbors = knn(store, eq.query, scan, config.m);
    if (neighbors.direction_count() >= 2) {
      diag = choose_k(affinity(neighbors.directions, eta), config.cap, config.cap_mode);
      diag.affinity.resize(0, 0);
    }
  }

  out.reps.resize(config.repetitions);
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    RepOutcome &ro = out.reps[rep];
    ro.ap[slot(Method::kBaseline)] = baseline_ap;
    ro.curve[slot(Method::kBaseline)] = baseline_curve;
    if (!need_clusters)
      continue;

    ClusterSet clusters;
    if (neighbors.direction_count() >= 2) {
      clusters = previews(cluster(neighbors.directions, diag.chosen_k,
                                  case_seed(config.seed, rep, case_index)),
                          neighbors, config.r);
    } else {
      DisambiguationParams p;
      p.eta = eta;
      p.cap = config.cap;
      p.r = config.r;
      clusters = disambiguate(neighbors, p).clusters;
    }
    ro.k = clusters.k();

    const FeedbackSelection selection =
        config.feedback == FeedbackMode::kSingle
            ? simulate_single(clusters, eq.target_topic, labels)
            : simulate_multi(clusters, eq.target_topic, labels, config.multi_threshold);
    ro.selected = selection.selected.size();

    if (wanted[slot(Method::kAid)]) {
      if (selection.empty()) {
        ro.ap[slot(Method::kAid)] = baseline_ap;
        ro.curve[slot(Method::kAid)] = baseline_curve;
      } else {
        const RankedList ranked = rerank(store, eq.query, scan, clusters, selection,
                                         RerankParams{config.gamma, config.beta});
        ro.ap[slot(Method::kAid)] = average_precision(ranked.order, relevant);
        ro.curve[slot(Method::kAid)] = curve_over_prefix(ranked.order, relevant);
      }
    }
    if (wanted[slot(Method::kHardSelection)]) {
      if (selection.empty()) {
        ro.ap[slot(Method::kHardSelection)] = baseline_ap;
        ro.curve[slot(Method::kHardSelection)] = baseline_curve;
      } else {
        const auto order = hard_selection_rerank(baseline, neighbors, clusters, selection);
        ro.ap[slot(Method::kHardSelection)] = average_precision(order, relevant);
        ro.curve[slot(Method::kHardSelection)] = curve_over_prefix(order, relevant);
      }
    }
  }
  return out;
}

} // namespace

std::uint64_t case_seed(std::uint64_t seed, std::size_t repetition, std::size_t case_index) {
  return splitmix64(splitmix64(seed + repetition) ^ splitmix64(0xA1D0000000000000ULL + case_index));
}

EvalReport run_experiment(const FeatureStore &store, const TopicLabels &labels,
                          const EvalConfig &config) {
  const auto cases = make_test_cases(labels);
  const auto queries = queries_from_cases(store, cases, config.exclude_query);
  return run_experiment(store, labels, queries, config);
}

EvalReport run_experiment(const FeatureStore &store, const TopicLabels &labels,
                          std::span<const EvalQuery> queries, const EvalConfig &config) {
  config.validate();
  labels.validate(store.n());
  if (queries.empty())
    throw InvalidArgument("no queries to evaluate");
  for (const auto &q : queries) {
    validate_query(store, q.query);
    if (q.target_topic >= labels.topic_count())
      throw IndexError("target topic " + std::to_string(q.target_topic) + " out of range");
  }

  if (store.n() - (config.exclude_query ? 1 : 0) < kMaxKappa)
    warn("database smaller than " + std::to_string(kMaxKappa) +
         " items; P@kappa past the end uses the available prefix");

  std::array<bool, kMethodSlots> wanted{};
  for (auto m : config.methods)
    wanted[slot(m)] = true;

  const std::size_t reps = config.repetitions;
  std::vector<std::array<double, kMethodSlots>> ap_sum(reps);
  std::vector<std::array<PrecisionCurve, kMethodSlots>> curve_sum(reps);
  for (auto &a : ap_sum)
    a.fill(0.0);
  for (auto &c : curve_sum)
    for (auto &curve : c)
      curve.fill(0.0);

  EvalReport report;
  report.config = config;
  report.repetitions = reps;
  double k_sum = 0.0;
  double selected_sum = 0.0;

  std::size_t threads = config.threads == 0 ? std::thread::hardware_concurrency() : config.threads;
  threads = std::max<std::size_t>(1, threads);

  // Cases run in parallel within a block; the block is then folded in case
  // order so the sums do not depend on the thread count.
  const std::size_t block = std::max<std::size_t>(64, 16 * threads);
  std::vector<CaseOutcome> outcomes;
  for (std::size_t begin = 0; begin < queries.size(); begin += block) {
    const std::size_t end = std::min(queries.size(), begin + block);
    outcomes.assign(end - begin, {});
    std::atomic<std::size_t> next{begin};
    auto worker = [&] {
      for (std::size_t i = next++; i < end; i = next++)
        outcomes[i - begin] = evaluate_case(store, labels, queries[i], i, config, wanted);
    };
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back(worker);
    }

    for (const auto &o : outcomes) {
      if (o.skipped) {
        ++report.skipped_cases;
        continue;
      }
      ++report.test_cases;
      for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto &ro = o.reps[rep];
        for (std::size_t s = 0; s < kMethodSlots; ++s) {
          if (!wanted[s])
            continue;
          ap_sum[rep][s] += ro.ap[s];
          for (std::size_t k = 0; k < kMaxKappa; ++k)
            curve_sum[rep][s][k] += ro.curve[s][k];
        }
        k_sum += static_cast<double>(ro.k);
        selected_sum += static_cast<double>(ro.selected);
        if (ro.selected == 0 && (wanted[slot(Method::kAid)] || wanted[slot(Method::kHardSelection)]))
          ++report.empty_selections;
      }
    }
  }
  if (report.skipped_cases > 0)
    warn(std::to_string(report.skipped_cases) +
         " test case(s) skipped: no relevant item besides the query");
  if (report.test_cases == 0)
    throw InvalidArgument("every test case was skipped; nothing to evaluate");

  const double cases = static_cast<double>(report.test_cases);
  report.mean_k = k_sum / (cases * static_cast<double>(reps));
  report.mean_selected = selected_sum / (cases * static_cast<double>(reps));

  for (auto m : config.methods) {
    const auto s = slot(m);
    MethodResult res;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      res.map_per_rep.push_back(ap_sum[rep][s] / cases);
      PrecisionCurve curve{};
      for (std::size_t k = 0; k < kMaxKappa; ++k)
        curve[k] = curve_sum[rep][s][k] / cases;
      res.p_at_per_rep.push_back(curve);
    }
    const double r = static_cast<double>(reps);
    res.map_mean = std::accumulate(res.map_per_rep.begin(), res.map_per_rep.end(), 0.0) / r;
    double var = 0.0;
    for (auto v : res.map_per_rep)
      var += (v - res.map_mean) * (v - res.map_mean);
    res.map_std = reps > 1 ? std::sqrt(var / (r - 1.0)) : 0.0;
    for (std::size_t k = 0; k < kMaxKappa; ++k) {
      double acc = 0.0;
      for (const auto &c : res.p_at_per_rep)
        acc += c[k];
      res.p_at_mean[k] = acc / r;
    }
    report.methods[to_string(m)] = std::move(res);
  }
  return report;
}

nlohmann::json report_to_json(const EvalReport &report) {
  nlohmann::json methods = nlohmann::json::object();
  for (const auto &[name, res] : report.methods) {
    nlohmann::json per_rep = nlohmann::json::array();
    for (std::size_t rep = 0; rep < res.map_per_rep.size(); ++rep)
      per_rep.push_back({{"mAP", res.map_per_rep[rep]}, {"p_at", res.p_at_per_rep[rep]}});
    methods[name] = {{"mAP", res.map_mean},
                     {"mAP_std", res.map_std},
                     {"p_at", res.p_at_mean},
                     {"per_rep", std::move(per_rep)}};
  }
  const auto &c = report.config;
  nlohmann::json method_names = nlohmann::json::array();
  for (auto m : c.methods)
    method_names.push_back(to_string(m));
  nlohmann::json config{{"m", c.m},
                        {"cap", c.cap},
                        {"cap_mode", to_string(c.cap_mode)},
                        {"r", c.r},
                        {"gamma", c.gamma},
                        {"repetitions", c.repetitions},
                        {"methods", method_names},
                        {"feedback", to_string(c.feedback)},
                        {"multi_threshold", c.multi_threshold},
                        {"seed", c.seed},
                        {"exclude_query", c.exclude_query}};
  config["eta"] = c.eta ? nlohmann::json(*c.eta) : nlohmann::json("sqrt(d)");
  config["beta"] = c.beta ? nlohmann::json(*c.beta) : nlohmann::json("max-distance");
  return {{"methods", std::move(methods)},
          {"repetitions", report.repetitions},
          {"test_cases", report.test_cases},
          {"skipped_cases", report.skipped_cases},
          {"mean_k", report.mean_k},
          {"mean_selected", report.mean_selected},
          {"empty_selections", report.empty_selections},
          {"config", std::move(config)}};
}

std::string report_to_csv(const EvalReport &report) {
  std::ostringstream out;
  out.precision(17);
  out << "method,metric,kappa,value\n";
  for (const auto &[name, res] : report.methods) {
    out << name << ",mAP,," << res.map_mean << '\n';
    out << name << ",mAP_std,," << res.map_std << '\n';
    for (std::size_t k = 0; k < kMaxKappa; ++k)
      out << name << ",p_at," << (k + 1) << ',' << res.p_at_mean[k] << '\n';
  }
  return out.str();
}

} // namespace aid
