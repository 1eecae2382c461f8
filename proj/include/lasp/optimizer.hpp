#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lasp/dsl.hpp"
#include "lasp/registry.hpp"
#include "lasp/scene.hpp"

namespace lasp {

/// One triplet check: the target must score strictly higher than the
/// distractor. Unary cases carry no anchors; ternary cases carry two.
struct TestCase {
  Relation relation = Relation::Near;
  std::string scene_id;
  std::uint64_t target = 0;
  std::uint64_t distractor = 0;
  std::optional<std::uint64_t> anchor;
  std::optional<std::uint64_t> anchor2;
};

struct TestSuite {
  Relation relation = Relation::Near;
  std::vector<TestCase> cases;
  std::unordered_map<std::string, Scene> scenes;

  /// Throws ValidationError on missing scenes, unknown ids, repeated ids or a
  /// relation mismatch.
  void validate() const;
};

TestSuite test_suite_from_json(const nlohmann::json& doc,
                               std::unordered_map<std::string, Scene> scenes);
nlohmann::ordered_json test_suite_to_json(const TestSuite& suite);
TestSuite load_test_suite(const std::filesystem::path& suite_file,
                          const std::filesystem::path& scene_dir);

struct CaseFailure {
  TestCase test;
  std::string message;
};

struct CandidateReport {
  EncoderDefinition definition;
  double pass_rate = 0;
  std::size_t passed = 0;
  std::size_t total = 0;
  std::vector<CaseFailure> failures;
  std::optional<std::string> validation_error;
};

/// Renders a box as "[cx, cy, cz, w, d, h]" with six fractional digits.
std::string format_box(const BoundingBox& box);

/// Feedback text for a failed case.
std::string synthesize_error_message(const TestCase& test, const Scene& scene);

/// Scores a definition on every case. Invalid definitions get pass rate 0 and
/// a validation note instead of failures.
CandidateReport run_test_suite(const EncoderDefinition& def, const TestSuite& suite);

/// Descending pass rate, stable on ties, truncated to k.
std::vector<CandidateReport> select_top_k(std::vector<CandidateReport> reports, std::size_t k);

/// DAG of in-context examples: an edge A -> B means A's accepted encoder
/// seeds generation of B. Each node has at most one predecessor.
class ExampleGraph {
 public:
  void add_edge(Relation from, Relation to);
  std::optional<Relation> predecessor(Relation r) const;
  const std::map<Relation, Relation>& edges() const { return parent_; }

  static ExampleGraph default_graph();

 private:
  std::map<Relation, Relation> parent_;  // child -> parent
};

std::optional<EncoderDefinition> retrieve_example(Relation relation, const ExampleGraph& graph,
                                                  const EncoderRegistry& registry,
                                                  std::vector<std::string>* warnings = nullptr);

struct RefinementContext {
  EncoderDefinition definition;
  std::vector<CaseFailure> failures;
};

/// Generator of encoder candidates for the optimization loop.
class CandidateSource {
 public:
  virtual ~CandidateSource() = default;
  virtual std::string name() const = 0;
  virtual EncoderDefinition draw(Relation relation, const RefinementContext* context,
                                 const EncoderDefinition* example, std::uint64_t seed) = 0;
};

/// Offline source: mutates the refinement parent, else the in-context
/// example, else the relation's skeleton (the builtin unless overridden).
class MutationSource : public CandidateSource {
 public:
  MutationSource() = default;
  explicit MutationSource(std::map<Relation, EncoderDefinition> skeletons)
      : skeletons_(std::move(skeletons)) {}

  std::string name() const override { return "mutated"; }
  EncoderDefinition draw(Relation relation, const RefinementContext* context,
                         const EncoderDefinition* example, std::uint64_t seed) override;

 private:
  std::map<Relation, EncoderDefinition> skeletons_;
};

struct OptimizerConfig {
  int n_iter = 5;
  int n_sample = 5;
  int top_k = 3;
  std::uint64_t seed = 0;
};

struct CandidateRecord {
  int iteration = 0;
  int index = 0;
  double pass_rate = 0;
  std::size_t n_failures = 0;
  std::string definition_hash;

  nlohmann::ordered_json to_json() const;
};

struct OptimizationResult {
  EncoderDefinition best;
  double best_pass_rate = 0;
  std::vector<double> history;  // best-so-far after each completed iteration
  std::vector<CandidateRecord> log;
  std::size_t suite_runs = 0;   // distinct definitions scored
  bool aborted = false;
  std::string abort_reason;
  std::vector<std::string> warnings;
};

inline constexpr int kDrawAttempts = 3;

/// Test-driven search: sample, score, keep the top k, refine them with their
/// failure messages, repeat. The best definition is installed in the registry
/// unless the run aborts.
OptimizationResult optimize_encoder(Relation relation, const TestSuite& suite,
                                    CandidateSource& source, EncoderRegistry& registry,
                                    const OptimizerConfig& cfg,
                                    const ExampleGraph& graph = ExampleGraph::default_graph(),
                                    const std::function<void(const CandidateRecord&)>& on_candidate = {});

}  // namespace lasp
