#include "lasp/optimizer.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "lasp/encoders.hpp"

namespace lasp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t candidate_seed(std::uint64_t base, int iteration, int parent, int sample, int attempt) {
  std::uint64_t s = splitmix64(base);
  s = splitmix64(s ^ static_cast<std::uint64_t>(iteration));
  s = splitmix64(s ^ static_cast<std::uint64_t>(parent));
  s = splitmix64(s ^ static_cast<std::uint64_t>(sample));
  return splitmix64(s ^ static_cast<std::uint64_t>(attempt));
}

std::uint64_t read_id(const nlohmann::json& item, const char* key, const std::string& where) {
  if (!item.contains(key) || !item[key].is_number_unsigned()) {
    throw ValidationError(where + "." + key + ": expected a non-negative integer");
  }
  return item[key].get<std::uint64_t>();
}

}  // namespace

void TestSuite::validate() const {
  if (cases.empty()) throw ValidationError("test suite for " + std::string(relation_name(relation)) +
                                           " has no cases");
  const int ar = arity(relation);
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& t = cases[c];
    const std::string where = "cases[" + std::to_string(c) + "]";
    if (t.relation != relation) throw ValidationError(where + ": relation does not match the suite");
    auto it = scenes.find(t.scene_id);
    if (it == scenes.end()) throw ValidationError(where + ": unknown scene '" + t.scene_id + "'");
    const Scene& scene = it->second;
    std::vector<std::uint64_t> ids{t.target, t.distractor};
    if (ar >= 2) {
      if (!t.anchor) throw ValidationError(where + ": missing anchor");
      ids.push_back(*t.anchor);
    }
    if (ar == 3) {
      if (!t.anchor2) throw ValidationError(where + ": missing anchor2");
      ids.push_back(*t.anchor2);
    }
    for (std::uint64_t id : ids) {
      if (!scene.contains(id)) {
        throw ValidationError(where + ": id " + std::to_string(id) + " not in scene " + t.scene_id);
      }
    }
    if (std::set<std::uint64_t>(ids.begin(), ids.end()).size() != ids.size()) {
      throw ValidationError(where + ": target, distractor and anchors must be distinct");
    }
  }
}

TestSuite test_suite_from_json(const nlohmann::json& doc,
                               std::unordered_map<std::string, Scene> scenes) {
  if (!doc.is_object() || !doc.contains("relation") || !doc["relation"].is_string()) {
    throw ValidationError("test suite: missing relation");
  }
  TestSuite suite;
  suite.relation = parse_relation(doc["relation"].get<std::string>());
  if (!doc.contains("cases") || !doc["cases"].is_array()) {
    throw ValidationError("test suite: missing cases array");
  }
  for (std::size_t c = 0; c < doc["cases"].size(); ++c) {
    const auto& item = doc["cases"][c];
    const std::string where = "cases[" + std::to_string(c) + "]";
    if (!item.is_object() || !item.contains("scene_id") || !item["scene_id"].is_string()) {
      throw ValidationError(where + ": missing scene_id");
    }
    TestCase t;
    t.relation = suite.relation;
    t.scene_id = item["scene_id"].get<std::string>();
    t.target = read_id(item, "target", where);
    t.distractor = read_id(item, "distractor", where);
    if (arity(suite.relation) >= 2) t.anchor = read_id(item, "anchor", where);
    if (arity(suite.relation) == 3) t.anchor2 = read_id(item, "anchor2", where);
    suite.cases.push_back(std::move(t));
  }
  suite.scenes = std::move(scenes);
  suite.validate();
  return suite;
}

nlohmann::ordered_json test_suite_to_json(const TestSuite& suite) {
  nlohmann::ordered_json doc;
  doc["relation"] = relation_name(suite.relation);
  doc["cases"] = nlohmann::ordered_json::array();
  for (const auto& t : suite.cases) {
    nlohmann::ordered_json c;
    c["scene_id"] = t.scene_id;
    c["target"] = t.target;
    c["distractor"] = t.distractor;
    if (t.anchor) c["anchor"] = *t.anchor;
    if (t.anchor2) c["anchor2"] = *t.anchor2;
    doc["cases"].push_back(std::move(c));
  }
  return doc;
}

TestSuite load_test_suite(const std::filesystem::path& suite_file,
                          const std::filesystem::path& scene_dir) {
  std::ifstream in(suite_file);
  if (!in) throw ValidationError("cannot open test suite " + suite_file.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(suite_file.string() + ": " + e.what());
  }
  return test_suite_from_json(doc, load_scene_dir(scene_dir));
}

std::string format_box(const BoundingBox& box) {
  auto num = [](double v) { return fmt::format("{:.6f}", v == 0.0 ? 0.0 : v); };
  return "[" + num(box.center[0]) + ", " + num(box.center[1]) + ", " + num(box.center[2]) + ", " +
         num(box.size[0]) + ", " + num(box.size[1]) + ", " + num(box.size[2]) + "]";
}

std::string synthesize_error_message(const TestCase& test, const Scene& scene) {
  const std::string target = format_box(scene[scene.index_of(test.target)].bbox);
  const std::string distractor = format_box(scene[scene.index_of(test.distractor)].bbox);
  const std::string phrase = relation_phrase(test.relation);
  const std::string quoted = "\"" + std::string(relation_name(test.relation)) + "\"";
  switch (arity(test.relation)) {
    case 1:
      return fmt::format(
          "{} is {} So feature value of {} should be larger than the feature value of {}.",
          target, phrase, target, distractor);
    case 2: {
      const std::string anchor = format_box(scene[scene.index_of(*test.anchor)].bbox);
      return fmt::format(
          "{0} is {1} {2} So feature value of {0} {3} {2} should be larger than the feature "
          "value of {4} {3} {2}.",
          target, phrase, anchor, quoted, distractor);
    }
    default: {
      const std::string anchors = format_box(scene[scene.index_of(*test.anchor)].bbox) + " and " +
                                  format_box(scene[scene.index_of(*test.anchor2)].bbox);
      return fmt::format(
          "{0} is {1} {2} So feature value of {0} {3} {2} should be larger than the feature "
          "value of {4} {3} {2}.",
          target, phrase, anchors, quoted, distractor);
    }
  }
}

CandidateReport run_test_suite(const EncoderDefinition& def, const TestSuite& suite) {
  CandidateReport report;
  report.definition = def;
  report.total = suite.cases.size();
  if (def.relation != suite.relation) {
    report.validation_error = "definition is for relation " + std::string(relation_name(def.relation)) +
                              ", suite tests " + std::string(relation_name(suite.relation));
    return report;
  }
  if (auto err = validate_definition(def)) {
    report.validation_error = err->to_string();
    return report;
  }

  std::unordered_map<std::string, RelationFeature> features;
  for (const auto& t : suite.cases) {
    const Scene& scene = suite.scenes.at(t.scene_id);
    auto it = features.find(t.scene_id);
    if (it == features.end()) {
      it = features.emplace(t.scene_id, eval_encoder(def, scene, precompute_geometry(scene))).first;
    }
    const RelationFeature& f = it->second;
    const std::size_t target = scene.index_of(t.target);
    const std::size_t distractor = scene.index_of(t.distractor);
    double ft = 0, fd = 0;
    switch (f.rank) {
      case 1:
        ft = f.at(target);
        fd = f.at(distractor);
        break;
      case 2: {
        const std::size_t a = scene.index_of(*t.anchor);
        ft = f.at(target, a);
        fd = f.at(distractor, a);
        break;
      }
      default: {
        const std::size_t a = scene.index_of(*t.anchor);
        const std::size_t b = scene.index_of(*t.anchor2);
        ft = f.at(target, a, b);
        fd = f.at(distractor, a, b);
        break;
      }
    }
    if (ft > fd) {
      ++report.passed;
    } else {
      report.failures.push_back({t, synthesize_error_message(t, scene)});
    }
  }
  report.pass_rate = report.total ? static_cast<double>(report.passed) / static_cast<double>(report.total)
                                  : 0.0;
  return report;
}

std::vector<CandidateReport> select_top_k(std::vector<CandidateReport> reports, std::size_t k) {
  std::stable_sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    return a.pass_rate > b.pass_rate;
  });
  if (reports.size() > k) reports.resize(k);
  return reports;
}

void ExampleGraph::add_edge(Relation from, Relation to) {
  if (from == to) throw ValidationError("example graph: self edge on " + std::string(relation_name(to)));
  if (parent_.count(to)) {
    throw ValidationError("example graph: " + std::string(relation_name(to)) +
                          " already has a predecessor");
  }
  for (auto cur = std::optional<Relation>(from); cur; cur = predecessor(*cur)) {
    if (*cur == to) {
      throw ValidationError("example graph: edge " + std::string(relation_name(from)) + " -> " +
                            std::string(relation_name(to)) + " closes a cycle");
    }
  }
  parent_.emplace(to, from);
}

std::optional<Relation> ExampleGraph::predecessor(Relation r) const {
  auto it = parent_.find(r);
  if (it == parent_.end()) return std::nullopt;
  return it->second;
}

ExampleGraph ExampleGraph::default_graph() {
  ExampleGraph g;
  g.add_edge(Relation::Near, Relation::Far);
  g.add_edge(Relation::Near, Relation::Between);
  g.add_edge(Relation::Left, Relation::Right);
  g.add_edge(Relation::Left, Relation::Front);
  g.add_edge(Relation::Front, Relation::Behind);
  g.add_edge(Relation::Above, Relation::Below);
  g.add_edge(Relation::Large, Relation::Small);
  g.add_edge(Relation::High, Relation::Low);
  g.add_edge(Relation::Low, Relation::OnTheFloor);
  g.add_edge(Relation::AtTheCorner, Relation::AgainstTheWall);
  return g;
}

std::optional<EncoderDefinition> retrieve_example(Relation relation, const ExampleGraph& graph,
                                                  const EncoderRegistry& registry,
                                                  std::vector<std::string>* warnings) {
  auto pred = graph.predecessor(relation);
  if (!pred) return std::nullopt;
  auto def = registry.latest_accepted(*pred);
  if (!def && warnings) {
    warnings->push_back("in-context example for " + std::string(relation_name(relation)) +
                        " should come from " + std::string(relation_name(*pred)) +
                        ", which has no accepted encoder yet");
  }
  return def;
}

EncoderDefinition MutationSource::draw(Relation relation, const RefinementContext* context,
                                       const EncoderDefinition* example, std::uint64_t seed) {
  EncoderDefinition base;
  if (context) {
    base = context->definition;
  } else {
    bool use_example = false;
    if (example) {
      base = *example;
      base.relation = relation;
      use_example = !validate_definition(base);
    }
    if (!use_example) {
      auto it = skeletons_.find(relation);
      base = it != skeletons_.end() ? it->second : encoder_to_dsl(relation);
    }
  }
  base.relation = relation;
  if (validate_definition(base)) base = encoder_to_dsl(relation);
  return mutate_definition(base, seed);
}

nlohmann::ordered_json CandidateRecord::to_json() const {
  nlohmann::ordered_json out;
  out["iteration"] = iteration;
  out["index"] = index;
  out["pass_rate"] = pass_rate;
  out["n_failures"] = n_failures;
  out["definition_hash"] = definition_hash;
  return out;
}

OptimizationResult optimize_encoder(Relation relation, const TestSuite& suite,
                                    CandidateSource& source, EncoderRegistry& registry,
                                    const OptimizerConfig& cfg, const ExampleGraph& graph,
                                    const std::function<void(const CandidateRecord&)>& on_candidate) {
  if (suite.relation != relation) {
    throw ValidationError("suite tests " + std::string(relation_name(suite.relation)) +
                          ", not " + std::string(relation_name(relation)));
  }
  if (cfg.n_iter < 1 || cfg.n_sample < 1 || cfg.top_k < 1) {
    throw ValidationError("n_iter, n_sample and top_k must all be positive");
  }
  suite.validate();

  OptimizationResult result;
  const auto example = retrieve_example(relation, graph, registry, &result.warnings);
  const EncoderDefinition* example_ptr = example ? &*example : nullptr;
  std::unordered_map<std::string, CandidateReport> memo;

  auto draw = [&](const RefinementContext* ctx, int iteration, int parent,
                  int sample) -> std::optional<EncoderDefinition> {
    std::string last_error;
    for (int attempt = 0; attempt < kDrawAttempts; ++attempt) {
      try {
        EncoderDefinition def =
            source.draw(relation, ctx, example_ptr, candidate_seed(cfg.seed, iteration, parent, sample, attempt));
        def.relation = relation;
        def.metadata = source.name() + "-gen" + std::to_string(iteration);
        return def;
      } catch (const std::exception& e) {
        last_error = e.what();
      }
    }
    result.aborted = true;
    result.abort_reason = "candidate source failed after " + std::to_string(kDrawAttempts) +
                          " attempts: " + last_error;
    return std::nullopt;
  };

  auto evaluate = [&](const EncoderDefinition& def, int iteration, int index) {
    const std::string hash = definition_hash(def);
    auto it = memo.find(hash);
    if (it == memo.end()) {
      it = memo.emplace(hash, run_test_suite(def, suite)).first;
      ++result.suite_runs;
    }
    CandidateReport report = it->second;
    report.definition = def;
    CandidateRecord rec{iteration, index, report.pass_rate, report.failures.size(), hash};
    result.log.push_back(rec);
    if (on_candidate) on_candidate(rec);
    return report;
  };

  auto finish = [&](bool install) {
    if (install && !validate_definition(result.best)) {
      registry.install(result.best);
    } else if (install) {
      result.warnings.push_back("no valid candidate was produced; registry left unchanged");
    }
    return result;
  };

  // Iteration 1: sample from the initial prompt (example only).
  std::vector<CandidateReport> reports;
  bool have_best = false;
  for (int s = 0; s < cfg.n_sample; ++s) {
    auto def = draw(nullptr, 1, 0, s);
    if (!def) return finish(false);
    CandidateReport report = evaluate(*def, 1, s);
    if (!have_best || report.pass_rate > result.best_pass_rate) {
      result.best = report.definition;
      result.best_pass_rate = report.pass_rate;
      have_best = true;
    }
    reports.push_back(std::move(report));
    if (result.best_pass_rate == 1.0) {
      result.history.push_back(1.0);
      return finish(true);
    }
  }
  result.history.push_back(result.best_pass_rate);
  auto top = select_top_k(std::move(reports), static_cast<std::size_t>(cfg.top_k));

  for (int iteration = 2; iteration <= cfg.n_iter; ++iteration) {
    std::vector<EncoderDefinition> drawn;
    for (std::size_t parent = 0; parent < top.size(); ++parent) {
      RefinementContext ctx{top[parent].definition, top[parent].failures};
      for (int s = 0; s < cfg.n_sample; ++s) {
        auto def = draw(&ctx, iteration, static_cast<int>(parent), s);
        if (!def) return finish(false);
        drawn.push_back(std::move(*def));
      }
    }
    std::vector<CandidateReport> evaluated;
    for (std::size_t k = 0; k < drawn.size(); ++k) {
      CandidateReport report = evaluate(drawn[k], iteration, static_cast<int>(k));
      if (report.pass_rate == 1.0) {
        result.best = report.definition;
        result.best_pass_rate = 1.0;
        result.history.push_back(1.0);
        return finish(true);
      }
      if (report.pass_rate > result.best_pass_rate) {
        result.best = report.definition;
        result.best_pass_rate = report.pass_rate;
      }
      evaluated.push_back(std::move(report));
    }
    result.history.push_back(result.best_pass_rate);
    top = select_top_k(std::move(evaluated), static_cast<std::size_t>(cfg.top_k));
  }
  return finish(true);
}

}  // namespace lasp
