// aid: command-line front end for the disambiguation engine.
//
//   aid serve  --features F [--labels L] [--ids I] [--images-dir D] --port P --seed S
//   aid query  --features F (--item N | --vector v1,v2,...) [--select 0,2] [--top 20]
//   aid eval   --features F --labels L [--m 200] [--gamma 1.0] [--reps 5]
//              [--feedback single|multi] [--out report.json] [--csv report.csv]
//   aid pca    --features F --dim 512 --out G [--model-out M.json | --model M.json]
//   aid synth  --out-features F --out-labels L [--seed 0]

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "aid/dataset.hpp"
#include "aid/disambiguation.hpp"
#include "aid/error.hpp"
#include "aid/eval.hpp"
#include "aid/rerank.hpp"
#include "aid/retrieval.hpp"
#include "aid/service.hpp"
#include "aid/synthetic.hpp"

namespace {

aid::HttpServer *g_server = nullptr;

void on_signal(int) {
  if (g_server)
    g_server->stop();
}

std::vector<double> parse_list(const std::string &text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty())
      out.push_back(std::stod(tok));
  return out;
}

void write_text(const std::string &path, const std::string &text) {
  std::ofstream out(path);
  if (!out)
    throw aid::Error("cannot write " + path);
  out << text;
}

aid::FeatureStore load_store(const std::string &features, const std::string &ids) {
  auto store = aid::load_features(features);
  if (!ids.empty())
    store = store.with_ids(aid::load_ids(ids, store.n()));
  return store;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Query disambiguation and relevance-feedback re-ranking over feature vectors"};
  app.require_subcommand(1);

  // serve
  std::string features, labels_path, ids_path, images_dir, host = "0.0.0.0";
  int port = 8080;
  std::uint64_t seed = 0;
  std::size_t max_sessions = 1024;
  auto *serve = app.add_subcommand("serve", "Run the HTTP+JSON service");
  serve->add_option("--features", features, "AIDF feature file")->required()->check(CLI::ExistingFile);
  serve->add_option("--labels", labels_path, "Topic labels JSON")->check(CLI::ExistingFile);
  serve->add_option("--ids", ids_path, "Newline-delimited item ids")->check(CLI::ExistingFile);
  serve->add_option("--images-dir", images_dir, "Directory of images named by id")->check(CLI::ExistingDirectory);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "TCP port (0 = any free port)");
  serve->add_option("--seed", seed, "k-means seed");
  serve->add_option("--max-sessions", max_sessions, "Session store capacity");

  // query
  std::size_t item = 0, m = 200, cap = 10, r = 10, top = 20;
  std::string vector_text, select_text, cap_mode = "clamp";
  double eta = 0.0, gamma = 1.0, beta = 0.0;
  bool dump_diagnostics = false, keep_self = false;
  auto *query = app.add_subcommand("query", "Disambiguate one query and print clusters and ranking");
  query->add_option("--features", features)->required()->check(CLI::ExistingFile);
  query->add_option("--ids", ids_path)->check(CLI::ExistingFile);
  auto *item_opt = query->add_option("--item", item, "Query by database index");
  auto *vec_opt = query->add_option("--vector", vector_text, "Query vector, comma separated");
  item_opt->excludes(vec_opt);
  query->add_option("--m", m, "Neighborhood size");
  query->add_option("--eta", eta, "Affinity bandwidth (default sqrt(d))");
  query->add_option("--cap", cap, "Maximum cluster count");
  query->add_option("--cap-mode", cap_mode, "clamp|restrict");
  query->add_option("--r", r, "Previews per cluster");
  query->add_option("--seed", seed);
  query->add_option("--select", select_text, "Selected cluster ids, comma separated");
  query->add_option("--gamma", gamma);
  query->add_option("--beta", beta, "Explicit beta (default: max distance)");
  query->add_option("--top", top, "Ranked items to print");
  query->add_flag("--dump-diagnostics", dump_diagnostics, "Include the affinity matrix");
  query->add_flag("--keep-self", keep_self, "Do not exclude the query item from results");

  // eval
  std::size_t reps = 5, threads = 1;
  std::string feedback = "single", out_path, csv_path, methods_text;
  bool no_exclude = false;
  auto *eval = app.add_subcommand("eval", "Simulated-feedback evaluation over labelled data");
  eval->add_option("--features", features)->required()->check(CLI::ExistingFile);
  eval->add_option("--labels", labels_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--m", m);
  eval->add_option("--eta", eta);
  eval->add_option("--cap", cap);
  eval->add_option("--cap-mode", cap_mode);
  eval->add_option("--r", r);
  eval->add_option("--gamma", gamma);
  eval->add_option("--beta", beta);
  eval->add_option("--reps", reps);
  eval->add_option("--feedback", feedback)->check(CLI::IsMember({"single", "multi"}));
  eval->add_option("--methods", methods_text, "Comma list of baseline,aid,hard_selection");
  eval->add_option("--seed", seed);
  eval->add_option("--threads", threads, "Worker threads (0 = all cores)");
  eval->add_flag("--no-exclude-query", no_exclude, "Keep the query item in its own ranking");
  eval->add_option("--out", out_path, "JSON report path (default stdout)");
  eval->add_option("--csv", csv_path, "CSV report path");

  // pca
  std::size_t dim = 512;
  std::string pca_out, model_out, model_in;
  auto *pca = app.add_subcommand("pca", "Fit and/or apply a PCA projection");
  pca->add_option("--features", features)->required()->check(CLI::ExistingFile);
  pca->add_option("--dim", dim, "Target dimensionality");
  pca->add_option("--out", pca_out, "Projected AIDF output")->required();
  pca->add_option("--model-out", model_out, "Write the fitted model as JSON");
  pca->add_option("--model", model_in, "Apply an existing model instead of fitting")->check(CLI::ExistingFile);

  // synth
  std::string synth_features, synth_labels;
  aid::synthetic::TopicMixtureConfig mix;
  auto *synth = app.add_subcommand("synth", "Write a synthetic topic-mixture dataset");
  synth->add_option("--out-features", synth_features)->required();
  synth->add_option("--out-labels", synth_labels)->required();
  synth->add_option("--d", mix.d);
  synth->add_option("--topics", mix.topics);
  synth->add_option("--per-topic", mix.items_per_topic);
  synth->add_option("--noise", mix.noise);
  synth->add_option("--seed", mix.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      auto store = std::make_shared<const aid::FeatureStore>(load_store(features, ids_path));
      std::optional<aid::TopicLabels> labels;
      if (!labels_path.empty())
        labels = aid::load_labels(labels_path, *store);
      aid::ServiceOptions opts;
      opts.seed = seed;
      opts.max_sessions = max_sessions;
      if (!images_dir.empty())
        opts.images_dir = images_dir;
      aid::QueryService service(store, std::move(labels), opts);
      aid::HttpServer server(service);
      const int bound = server.bind(host, port);
      if (bound < 0) {
        std::cerr << "aid: cannot bind " << host << ":" << port << '\n';
        return 1;
      }
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "aid: serving n=" << store->n() << " d=" << store->d() << " on " << host
                << ":" << bound << '\n';
      server.listen();
      g_server = nullptr;
      return 0;
    }

    if (*query) {
      const auto store = load_store(features, ids_path);
      aid::Query q;
      if (*item_opt)
        q = aid::query_from_item(store, item, !keep_self);
      else if (*vec_opt) {
        const auto v = parse_list(vector_text);
        q.vector = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      } else {
        std::cerr << "aid query: one of --item or --vector is required\n";
        return 2;
      }
      aid::DisambiguationParams dp;
      if (eta > 0)
        dp.eta = eta;
      dp.cap = cap;
      dp.r = r;
      dp.seed = seed;
      dp.cap_mode = aid::cap_mode_from_string(cap_mode);
      const auto scan = aid::all_distances(store, q);
      const auto neighbors = aid::knn(store, q, scan, m);
      const auto result = aid::disambiguate(neighbors, dp);

      std::vector<std::size_t> ids;
      for (auto v : parse_list(select_text))
        ids.push_back(static_cast<std::size_t>(v));
      aid::RerankParams rp{gamma, beta > 0 ? std::optional<double>(beta) : std::nullopt};
      const auto ranked = aid::rerank(store, q, scan, result.clusters,
                                      aid::FeedbackSelection(ids), rp);

      nlohmann::json out;
      out["k"] = result.clusters.k();
      out["diagnostics"] = aid::diagnostics_to_json(result.diagnostics, dump_diagnostics);
      nlohmann::json clusters = nlohmann::json::array();
      for (std::size_t c = 0; c < result.clusters.k(); ++c) {
        nlohmann::json previews = nlohmann::json::array();
        for (const auto &p : result.clusters.previews[c]) {
          nlohmann::json pj{{"index", p.index}, {"distance", p.delta}};
          if (auto id = store.id(p.index))
            pj["id"] = *id;
          previews.push_back(pj);
        }
        clusters.push_back({{"id", c}, {"size", result.clusters.members(c).size()},
                            {"previews", previews}});
      }
      out["clusters"] = clusters;
      nlohmann::json items = nlohmann::json::array();
      for (std::size_t pos = 0; pos < std::min(top, ranked.order.size()); ++pos) {
        const auto i = ranked.order[pos];
        nlohmann::json ij{{"index", i}, {"delta", ranked.delta[i]}, {"sigma", ranked.sigma[i]},
                          {"delta_tilde", ranked.delta_tilde[i]}};
        if (auto id = store.id(i))
          ij["id"] = *id;
        items.push_back(ij);
      }
      out["refined"] = ranked.refined;
      out["items"] = items;
      std::cout << out.dump(2) << '\n';
      return 0;
    }

    if (*eval) {
      const auto store = aid::load_features(features);
      const auto labels = aid::load_labels(labels_path, store);
      aid::EvalConfig cfg;
      cfg.m = m;
      if (eta > 0)
        cfg.eta = eta;
      cfg.cap = cap;
      cfg.cap_mode = aid::cap_mode_from_string(cap_mode);
      cfg.r = r;
      cfg.gamma = gamma;
      if (beta > 0)
        cfg.beta = beta;
      cfg.repetitions = reps;
      cfg.feedback = aid::feedback_mode_from_string(feedback);
      cfg.seed = seed;
      cfg.threads = threads;
      cfg.exclude_query = !no_exclude;
      if (!methods_text.empty()) {
        cfg.methods.clear();
        std::stringstream ss(methods_text);
        for (std::string tok; std::getline(ss, tok, ',');)
          cfg.methods.push_back(aid::method_from_string(tok));
      }
      const auto cases = aid::make_test_cases(labels);
      std::cerr << "aid: " << cases.size() << " test cases, " << cfg.repetitions
                << " repetition(s)\n";
      const auto start = std::chrono::steady_clock::now();
      const auto report = aid::run_experiment(store, labels, cfg);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      auto json = aid::report_to_json(report);
      json["seconds"] = secs;
      if (out_path.empty())
        std::cout << json.dump(2) << '\n';
      else
        write_text(out_path, json.dump(2) + "\n");
      if (!csv_path.empty())
        write_text(csv_path, aid::report_to_csv(report));
      for (const auto &[name, res] : report.methods)
        std::cerr << "aid: " << name << " mAP=" << res.map_mean << " (std " << res.map_std
                  << ") P@10=" << res.p_at_mean[9] << " P@100=" << res.p_at_mean[99] << '\n';
      return 0;
    }

    if (*pca) {
      const auto store = aid::load_features(features);
      aid::PcaModel model;
      if (!model_in.empty()) {
        std::ifstream in(model_in);
        model = aid::pca_from_json(nlohmann::json::parse(in));
      } else {
        model = aid::pca_fit(store, dim);
      }
      if (!model_out.empty())
        write_text(model_out, aid::pca_to_json(model).dump() + "\n");
      aid::save_features(aid::pca_project(model, store), pca_out);
      std::cerr << "aid: projected " << store.n() << " items from d=" << store.d() << " to d="
                << model.d_out() << '\n';
      return 0;
    }

    if (*synth) {
      const auto data = aid::synthetic::make_topic_mixture(mix);
      aid::save_features(data.store, synth_features);
      aid::save_labels(data.labels, synth_labels);
      std::cerr << "aid: wrote " << data.store.n() << " items, d=" << data.store.d() << '\n';
      return 0;
    }
  } catch (const std::exception &e) {
    std::cerr << "aid: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
