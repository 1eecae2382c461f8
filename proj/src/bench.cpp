#include "lasp/bench.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "lasp/executor.hpp"

namespace lasp {

namespace {

void write_matrix_csv(const std::filesystem::path& path, const Scene& scene,
                      const RelationFeature& f) {
  std::ofstream out(path);
  out << "id";
  for (const auto& obj : scene.objects()) out << ',' << obj.id;
  out << '\n';
  for (std::size_t i = 0; i < scene.size(); ++i) {
    out << scene[i].id;
    for (std::size_t j = 0; j < scene.size(); ++j) out << fmt::format(",{:.6f}", f.at(i, j));
    out << '\n';
  }
}

void write_steps_csv(const std::filesystem::path& path, const Scene& scene,
                     const ExecutionTrace& trace) {
  std::ofstream out(path);
  out << "step";
  for (const auto& obj : scene.objects()) out << ',' << obj.id;
  out << '\n';
  for (const auto& [name, values] : trace.steps) {
    out << name;
    for (double v : values) out << fmt::format(",{:.6e}", v);
    out << '\n';
  }
}

}  // namespace

BenchReport run_bench(const Dataset& data, const EncoderRegistry& registry,
                      const BenchOptions& options) {
  BenchReport report;
  const std::size_t n = data.items.size();
  report.records.resize(n);

  // Parsing first, sequentially, so per-item token counts are exact.
  std::vector<SymbolicExpression> exprs(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& item = data.items[k];
    if (options.parser) {
      const long before = options.ledger ? options.ledger->total_tokens() : 0;
      exprs[k] = options.parser->parse(item.utterance);
      report.records[k].tokens = options.ledger ? options.ledger->total_tokens() - before : 0;
    } else {
      exprs[k] = item.expression;
    }
  }

  std::map<std::string, std::unique_ptr<FeatureCache>> caches;
  for (const auto& scene : data.scenes) {
    caches.emplace(scene.id(), std::make_unique<FeatureCache>(scene, registry));
  }
  std::vector<ExecutionTrace> traces(options.plots_dir ? n : 0);

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        const auto& item = data.items[k];
        const Scene& scene = data.scene(item.scene_id);
        const auto t0 = std::chrono::steady_clock::now();
        const auto score = execute(exprs[k], scene, *caches.at(scene.id()),
                                   options.plots_dir ? &traces[k] : nullptr);
        const auto t1 = std::chrono::steady_clock::now();
        auto& rec = report.records[k];
        rec.scene_id = item.scene_id;
        rec.expression = exprs[k];
        rec.argmax = scene[score.argmax()].id;
        rec.ground_truth = item.target;
        rec.candidates = rank_candidates(score, scene, options.top_k, options.threshold);
        rec.correct = rec.argmax == rec.ground_truth;
        rec.wall_ms = options.timing ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0;
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  unsigned workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::size_t correct = 0;
  double wall = 0, tokens = 0;
  std::vector<ConditionSample> samples;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& rec = report.records[k];
    correct += rec.correct;
    wall += rec.wall_ms;
    tokens += static_cast<double>(rec.tokens);
    samples.push_back({&data.scene(rec.scene_id), rec.expression, rec.ground_truth});
  }
  if (n > 0) {
    report.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    report.mean_wall_ms = wall / static_cast<double>(n);
    report.mean_tokens = tokens / static_cast<double>(n);
  }
  const auto cond = condition_level_eval(samples, registry);
  report.condition_precision = cond.precision;
  report.condition_recall = cond.recall;
  report.warnings = cond.warnings;
  for (const auto& [id, cache] : caches) {
    for (const auto& w : cache->warnings()) report.warnings.push_back(id + ": " + w);
  }

  report.config["top_k"] = options.top_k;
  report.config["threshold"] = options.threshold;
  report.config["parser"] = options.parser ? (options.parser->is_offline() ? "offline" : "llm") : "dataset";
  report.config["items"] = n;
  report.config["scenes"] = data.scenes.size();

  if (options.plots_dir) {
    const auto& dir = *options.plots_dir;
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["heatmaps"] = nlohmann::ordered_json::array();
    manifest["steps"] = nlohmann::ordered_json::array();
    for (const auto& scene : data.scenes) {
      auto& cache = *caches.at(scene.id());
      for (Relation r : {Relation::Near, Relation::Far, Relation::Left, Relation::Right}) {
        const std::string file = fmt::format("{}_{}.csv", scene.id(), relation_name(r));
        write_matrix_csv(dir / file, scene, *cache.relation(r));
        manifest["heatmaps"].push_back({{"scene_id", scene.id()},
                                        {"relation", relation_name(r)},
                                        {"file", file}});
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      const std::string file = fmt::format("item_{:03}_steps.csv", k);
      write_steps_csv(dir / file, data.scene(data.items[k].scene_id), traces[k]);
      manifest["steps"].push_back({{"item", k}, {"scene_id", data.items[k].scene_id}, {"file", file}});
    }
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  }
  return report;
}

nlohmann::ordered_json bench_report_to_json(const BenchReport& report) {
  nlohmann::ordered_json doc;
  doc["config"] = report.config;
  doc["accuracy"] = report.accuracy;
  doc["condition_precision"] = report.condition_precision;
  doc["condition_recall"] = report.condition_recall;
  doc["mean_wall_ms"] = report.mean_wall_ms;
  doc["mean_tokens"] = report.mean_tokens;
  doc["warnings"] = report.warnings;
  auto& records = doc["records"] = nlohmann::ordered_json::array();
  for (const auto& rec : report.records) {
    nlohmann::ordered_json r;
    r["scene_id"] = rec.scene_id;
    r["expression"] = expression_to_json(rec.expression);
    r["argmax"] = rec.argmax;
    r["ground_truth"] = rec.ground_truth;
    r["candidates"] = rec.candidates;
    r["correct"] = rec.correct;
    r["wall_ms"] = rec.wall_ms;
    r["tokens"] = rec.tokens;
    records.push_back(std::move(r));
  }
  return doc;
}

BaselineReport random_baseline(const Dataset& data, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BaselineReport out;
  std::size_t hits = 0;
  double expected = 0;
  for (const auto& item : data.items) {
    const Scene& scene = data.scene(item.scene_id);
    std::vector<std::uint64_t> group;
    const std::string cat = normalize_label(item.expression.category);
    for (const auto& obj : scene.objects()) {
      if (normalize_label(obj.label) == cat) group.push_back(obj.id);
    }
    if (group.empty()) {
      for (const auto& obj : scene.objects()) group.push_back(obj.id);
    }
    const auto pick = group[std::uniform_int_distribution<std::size_t>(0, group.size() - 1)(rng)];
    out.picks.push_back(pick);
    hits += pick == item.target;
    expected += 1.0 / static_cast<double>(group.size());
  }
  if (!data.items.empty()) {
    out.accuracy = static_cast<double>(hits) / static_cast<double>(data.items.size());
    out.expected_accuracy = expected / static_cast<double>(data.items.size());
  }
  return out;
}

}  // namespace lasp
