#pragma once

#include <cstdint>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "lasp/expression.hpp"
#include "lasp/registry.hpp"
#include "lasp/scene.hpp"

namespace lasp {

/// softmax(scale * x), shifted by the max for stability.
std::vector<double> stable_softmax(std::span<const double> x, double scale = 1.0);

struct CategoryFeature {
  std::string category;
  std::vector<double> data;  // sums to 1
};

/// softmax(100 * sim) over the scene's objects.
CategoryFeature compute_category_feature(const Scene& scene, std::span<const double> sim,
                                         std::string category = {});

/// Per-scene memo of category and relation features. Relation features come
/// from a snapshot of the registry taken at construction. Concurrent requests
/// for the same key compute once.
class FeatureCache {
 public:
  FeatureCache(Scene scene, EncoderRegistry registry);

  std::uint64_t fingerprint() const { return scene_.fingerprint(); }
  const Scene& scene() const { return scene_; }
  const PairGeometry& geometry() const { return geom_; }

  std::shared_ptr<const RelationFeature> relation(Relation r);
  std::shared_ptr<const CategoryFeature> category(const std::string& name);

  /// Diagnostics collected so far (e.g. categories matching no object).
  std::vector<std::string> warnings() const;

 private:
  Scene scene_;
  EncoderRegistry registry_;
  PairGeometry geom_;
  mutable std::mutex mu_;
  std::map<Relation, std::shared_future<std::shared_ptr<const RelationFeature>>> relations_;
  std::map<std::string, std::shared_future<std::shared_ptr<const CategoryFeature>>> categories_;
  std::vector<std::string> warnings_;
};

struct MatchingScore {
  std::vector<double> data;
  std::vector<std::size_t> argsort;  // descending, ties by ascending position

  std::size_t argmax() const { return argsort.front(); }
};

MatchingScore make_matching_score(std::vector<double> data);

/// Root-level intermediate vectors, in the order they were applied.
struct ExecutionTrace {
  std::vector<std::pair<std::string, std::vector<double>>> steps;
};

/// Recursive matching-score evaluation of an expression against a cached scene.
MatchingScore execute(const SymbolicExpression& expr, const Scene& scene, FeatureCache& cache,
                      ExecutionTrace* trace = nullptr);

/// Top-k positions by score, keeping those with score >= threshold * max.
/// The argmax is always kept.
std::vector<std::size_t> rank_candidate_positions(const MatchingScore& score, int top_k,
                                                  double threshold);

std::vector<std::uint64_t> rank_candidates(const MatchingScore& score, const Scene& scene,
                                           int top_k, double threshold);

struct ConditionSample {
  const Scene* scene = nullptr;
  SymbolicExpression expression;
  std::uint64_t ground_truth = 0;
};

struct ConditionMetrics {
  double precision = 1.0;
  double recall = 1.0;
  std::size_t conditions = 0;
  std::vector<std::string> warnings;
};

/// Executes every root-level condition in isolation and macro-averages
/// per-object precision and recall within same-category groups.
ConditionMetrics condition_level_eval(const std::vector<ConditionSample>& samples,
                                      const EncoderRegistry& registry);

}  // namespace lasp
