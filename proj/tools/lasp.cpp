// lasp: command-line front end for parsing, grounding, encoder optimization
// and benchmarking.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lasp/bench.hpp"
#include "lasp/encoders.hpp"
#include "lasp/executor.hpp"
#include "lasp/llm.hpp"
#include "lasp/optimizer.hpp"
#include "lasp/registry.hpp"
#include "lasp/synthetic.hpp"

using namespace lasp;
namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EncoderRegistry open_registry(const std::string& path) {
  if (path.empty() || !fs::exists(path)) return EncoderRegistry{};
  return EncoderRegistry::load(path);
}

std::shared_ptr<LlmClient> make_client(const std::string& endpoint) {
  auto cfg = EndpointConfig::from_env();
  if (!endpoint.empty()) cfg.base_url = endpoint;
  if (cfg.base_url.empty()) {
    throw ValidationError("no model endpoint: pass --endpoint or set LASP_LLM_ENDPOINT");
  }
  return std::make_shared<LlmClient>(cfg, std::make_shared<UsageLedger>());
}

struct ParseArgs {
  std::string utterance, in, offline_expr, out, endpoint;
};

int cmd_parse(const ParseArgs& a) {
  std::string text;
  std::shared_ptr<LlmClient> client;
  auto parse_one = [&](const std::string& utterance) {
    if (!a.offline_expr.empty()) return UtteranceParser::offline(a.offline_expr).parse(utterance);
    if (!client) client = make_client(a.endpoint);
    try {
      return parse_utterance_via_llm(utterance, *client);
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("could not parse \"{}\": {}", utterance, e.what()));
    }
  };
  if (!a.in.empty()) {
    std::istringstream lines(read_text(a.in));
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(fmt::format("{}:{}: {}", a.in, lineno, e.what()));
      }
      SymbolicExpression expr;
      if (doc.is_object() && doc.contains("utterance") && !doc.contains("category")) {
        expr = parse_one(doc["utterance"].get<std::string>());
      } else {
        try {
          expr = expression_from_json(doc.contains("expression") ? doc["expression"] : doc);
        } catch (const ValidationError& e) {
          throw ValidationError(fmt::format("{}:{}: {}", a.in, lineno, e.what()));
        }
      }
      text += serialize_expression(expr) + "\n";
    }
  } else {
    text = serialize_expression(parse_one(a.utterance)) + "\n";
  }
  write_text(a.out, text);
  return 0;
}

struct GroundArgs {
  std::string scene, expr, out, registry;
  int top_k = 5;
  double threshold = 0.9;
};

int cmd_ground(const GroundArgs& a) {
  const Scene scene = load_scene(a.scene);
  const auto expr = parse_expression(read_text(a.expr));
  FeatureCache cache(scene, open_registry(a.registry));
  const auto score = execute(expr, scene, cache);
  nlohmann::ordered_json doc;
  doc["scene_id"] = scene.id();
  doc["expression"] = expression_to_json(expr);
  auto& scores = doc["scores"] = nlohmann::ordered_json::array();
  for (std::size_t pos : score.argsort) {
    scores.push_back({{"id", scene[pos].id}, {"score", score.data[pos]}});
  }
  doc["candidates"] = rank_candidates(score, scene, a.top_k, a.threshold);
  doc["argmax"] = scene[score.argmax()].id;
  for (const auto& w : cache.warnings()) std::cerr << "warning: " << w << '\n';
  write_text(a.out, doc.dump(2) + "\n");
  return 0;
}

struct OptimizeArgs {
  std::string relation, suite, scenes, source = "mutate", registry, log, endpoint;
  OptimizerConfig cfg;
};

int cmd_optimize(const OptimizeArgs& a) {
  const Relation relation = parse_relation(a.relation);
  const fs::path scene_dir = a.scenes.empty() ? fs::path(a.suite).parent_path() / "scenes" : fs::path(a.scenes);
  const TestSuite suite = load_test_suite(a.suite, scene_dir);
  if (suite.relation != relation) {
    throw ValidationError(fmt::format("suite is for {}, not {}", relation_name(suite.relation),
                                      relation_name(relation)));
  }
  EncoderRegistry registry = open_registry(a.registry);
  std::unique_ptr<CandidateSource> source;
  std::shared_ptr<LlmClient> client;
  if (a.source == "mutate") {
    source = std::make_unique<MutationSource>();
  } else if (a.source == "llm") {
    client = make_client(a.endpoint);
    source = std::make_unique<LlmSource>(client);
  } else {
    throw ValidationError("unknown source " + a.source + " (expected mutate or llm)");
  }

  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    if (!log) throw std::runtime_error("cannot write " + a.log);
  }
  const auto result = optimize_encoder(relation, suite, *source, registry, a.cfg,
                                       ExampleGraph::default_graph(), [&](const CandidateRecord& rec) {
                                         if (log) log << rec.to_json().dump() << '\n';
                                       });
  for (std::size_t k = 0; k < result.history.size(); ++k) {
    std::cout << fmt::format("iteration {}: best pass rate {:.4f}\n", k + 1, result.history[k]);
  }
  std::cout << fmt::format("final: {:.4f} ({} candidates scored, best {})\n", result.best_pass_rate,
                           result.suite_runs, definition_hash(result.best));
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  if (client && client->ledger()) {
    std::cerr << fmt::format("model calls: {}, tokens: {}\n", client->ledger()->size(),
                             client->ledger()->total_tokens());
  }
  if (result.aborted) {
    std::cerr << "error: " << result.abort_reason << '\n';
    return 1;
  }
  if (!a.registry.empty()) registry.save(a.registry);
  return 0;
}

struct BenchArgs {
  std::string dataset, registry, out, plots, expr_source = "dataset", endpoint;
  int top_k = 5;
  double threshold = 0.9;
  unsigned workers = 0;
  bool no_timing = false;
  std::optional<std::uint64_t> baseline_seed;
};

int cmd_bench(const BenchArgs& a) {
  const Dataset data = load_dataset(a.dataset);
  const EncoderRegistry registry = open_registry(a.registry);
  BenchOptions opt;
  opt.top_k = a.top_k;
  opt.threshold = a.threshold;
  opt.workers = a.workers;
  opt.timing = !a.no_timing;
  if (!a.plots.empty()) opt.plots_dir = a.plots;
  std::optional<UtteranceParser> parser;
  if (a.expr_source == "llm") {
    auto client = make_client(a.endpoint);
    opt.ledger = client->ledger();
    parser = UtteranceParser::online(client);
    opt.parser = &*parser;
  } else if (a.expr_source != "dataset") {
    throw ValidationError("unknown expression source " + a.expr_source + " (expected dataset or llm)");
  }
  const auto report = run_bench(data, registry, opt);
  auto doc = bench_report_to_json(report);
  doc["config"]["dataset"] = a.dataset;
  if (a.baseline_seed) {
    const auto base = random_baseline(data, *a.baseline_seed);
    doc["random_baseline"] = {{"seed", *a.baseline_seed},
                              {"accuracy", base.accuracy},
                              {"expected_accuracy", base.expected_accuracy}};
    std::cerr << fmt::format("random baseline: {:.4f} (expected {:.4f})\n", base.accuracy,
                             base.expected_accuracy);
  }
  std::cerr << fmt::format("accuracy: {:.4f} over {} utterances\n", report.accuracy, report.records.size());
  write_text(a.out, doc.dump(2) + "\n");
  return 0;
}

std::atomic<StubServer*> g_server{nullptr};

void stop_server(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free 3D visual grounding with symbolic expressions and relation encoders"};
  app.set_config("--config", "", "TOML/INI file with option defaults; flags override it");
  app.require_subcommand(1);

  ParseArgs pa;
  auto* parse = app.add_subcommand("parse", "Utterance or expression lines -> canonical expression JSON");
  auto* utt = parse->add_option("--utterance", pa.utterance, "Referring utterance");
  auto* in = parse->add_option("--in", pa.in, "JSON-lines file of expressions or {\"utterance\": ...}");
  utt->excludes(in);
  parse->add_option("--offline-expr", pa.offline_expr, "Pre-parsed expression used instead of a model");
  parse->add_option("--out", pa.out, "Output file (default stdout)");
  parse->add_option("--endpoint", pa.endpoint, "Chat-completions base URL");
  parse->callback([&] {
    if (pa.utterance.empty() && pa.in.empty()) throw CLI::RequiredError("--utterance or --in");
  });

  GroundArgs ga;
  auto* ground = app.add_subcommand("ground", "Score every object of a scene against an expression");
  ground->add_option("--scene", ga.scene, "Scene JSON")->required();
  ground->add_option("--expr", ga.expr, "Expression JSON")->required();
  ground->add_option("--top-k", ga.top_k, "Candidates kept")->capture_default_str();
  ground->add_option("--threshold", ga.threshold, "Keep candidates scoring at least this fraction of the best")
      ->capture_default_str();
  ground->add_option("--registry", ga.registry, "Encoder registry JSON");
  ground->add_option("--out", ga.out, "Output file (default stdout)");

  OptimizeArgs oa;
  auto* optimize = app.add_subcommand("optimize", "Test-driven search for a relation encoder");
  optimize->add_option("--relation", oa.relation)->required();
  optimize->add_option("--suite", oa.suite, "Test suite JSON")->required();
  optimize->add_option("--scenes", oa.scenes, "Scene directory (default: scenes/ beside the suite)");
  optimize->add_option("--source", oa.source, "mutate or llm")->capture_default_str();
  optimize->add_option("--n-iter", oa.cfg.n_iter)->capture_default_str();
  optimize->add_option("--n-sample", oa.cfg.n_sample)->capture_default_str();
  optimize->add_option("--top-k", oa.cfg.top_k)->capture_default_str();
  optimize->add_option("--seed", oa.cfg.seed)->capture_default_str();
  optimize->add_option("--registry", oa.registry, "Registry JSON, read if present and written back");
  optimize->add_option("--log", oa.log, "JSON-lines log of every scored candidate");
  optimize->add_option("--endpoint", oa.endpoint, "Chat-completions base URL for --source llm");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Ground a dataset and report accuracy");
  bench->add_option("--dataset", ba.dataset, "Directory with scenes/ and expressions.jsonl")->required();
  bench->add_option("--registry", ba.registry);
  bench->add_option("--out", ba.out, "Report JSON (default stdout)");
  bench->add_option("--plots", ba.plots, "Directory for heatmap and score-step CSVs");
  bench->add_option("--random-baseline", ba.baseline_seed, "Also report a seeded random-choice baseline");
  bench->add_option("--expr-source", ba.expr_source, "dataset or llm")->capture_default_str();
  bench->add_option("--endpoint", ba.endpoint);
  bench->add_option("--top-k", ba.top_k)->capture_default_str();
  bench->add_option("--threshold", ba.threshold)->capture_default_str();
  bench->add_option("--workers", ba.workers, "0 = one per core")->capture_default_str();
  bench->add_flag("--no-timing", ba.no_timing, "Zero wall-clock fields for byte-stable reports");

  std::string gen_out;
  std::uint64_t gen_seed = 2024;
  auto* gen_bench = app.add_subcommand("gen-bench", "Write the seeded synthetic mini-benchmark");
  gen_bench->add_option("--out", gen_out)->required();
  gen_bench->add_option("--seed", gen_seed)->capture_default_str();

  SuiteSpec suite_spec;
  std::string suite_relation = "near", suite_out, suite_labeler;
  auto* gen_suite = app.add_subcommand("gen-suite", "Write a solvable triplet suite labelled by an encoder");
  gen_suite->add_option("--relation", suite_relation)->capture_default_str();
  gen_suite->add_option("--out", suite_out, "Directory for suite.json and scenes/")->required();
  gen_suite->add_option("--cases", suite_spec.n_cases)->capture_default_str();
  gen_suite->add_option("--scenes", suite_spec.n_scenes)->capture_default_str();
  gen_suite->add_option("--seed", suite_spec.seed)->capture_default_str();
  gen_suite->add_option("--labeler", suite_labeler, "Definition JSON (default: the builtin)");

  std::string fixtures;
  int port = 0;
  auto* stub = app.add_subcommand("stub-server", "Serve canned chat-completion replies on loopback");
  stub->add_option("--fixtures", fixtures, "Directory of *.txt replies, served in filename order")->required();
  stub->add_option("--port", port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*parse) return cmd_parse(pa);
    if (*ground) return cmd_ground(ga);
    if (*optimize) return cmd_optimize(oa);
    if (*bench) return cmd_bench(ba);
    if (*gen_bench) {
      save_dataset(generate_mini_benchmark(gen_seed), gen_out);
      return 0;
    }
    if (*gen_suite) {
      suite_spec.relation = parse_relation(suite_relation);
      const auto labeler = suite_labeler.empty() ? encoder_to_dsl(suite_spec.relation)
                                                 : load_definition(suite_labeler);
      const auto suite = make_synthetic_suite(suite_spec, labeler);
      fs::create_directories(fs::path(suite_out) / "scenes");
      for (const auto& [id, scene] : suite.scenes) {
        save_scene(scene, fs::path(suite_out) / "scenes" / (id + ".json"));
      }
      write_text((fs::path(suite_out) / "suite.json").string(), test_suite_to_json(suite).dump(2) + "\n");
      return 0;
    }
    if (*stub) {
      StubServer server(StubServer::load_fixtures(fixtures), port);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cout << server.base_url() << std::endl;
      server.wait();
      g_server = nullptr;
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
