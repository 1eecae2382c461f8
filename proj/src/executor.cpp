#include "lasp/executor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lasp/dsl.hpp"

namespace lasp {

std::vector<double> stable_softmax(std::span<const double> x, double scale) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  double m = scale * x[0];
  for (double v : x) m = std::max(m, scale * v);
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(scale * x[i] - m);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

CategoryFeature compute_category_feature(const Scene& scene, std::span<const double> sim,
                                         std::string category) {
  if (sim.size() != scene.size()) {
    throw ValidationError("similarity column has " + std::to_string(sim.size()) +
                          " entries for a scene of " + std::to_string(scene.size()) + " objects");
  }
  return CategoryFeature{std::move(category), stable_softmax(sim, 100.0)};
}

FeatureCache::FeatureCache(Scene scene, EncoderRegistry registry)
    : scene_(std::move(scene)), registry_(std::move(registry)), geom_(precompute_geometry(scene_)) {}

std::shared_ptr<const RelationFeature> FeatureCache::relation(Relation r) {
  std::promise<std::shared_ptr<const RelationFeature>> promise;
  std::shared_future<std::shared_ptr<const RelationFeature>> future;
  {
    std::lock_guard lock(mu_);
    auto it = relations_.find(r);
    if (it != relations_.end()) {
      future = it->second;
    } else {
      future = promise.get_future().share();
      relations_.emplace(r, future);
      future = {};
    }
  }
  if (future.valid()) return future.get();
  try {
    auto feature = std::make_shared<const RelationFeature>(
        eval_encoder(registry_.active(r), scene_, geom_));
    promise.set_value(feature);
    return feature;
  } catch (...) {
    promise.set_exception(std::current_exception());
    throw;
  }
}

std::shared_ptr<const CategoryFeature> FeatureCache::category(const std::string& name) {
  const std::string key = normalize_label(name);
  std::promise<std::shared_ptr<const CategoryFeature>> promise;
  std::shared_future<std::shared_ptr<const CategoryFeature>> future;
  {
    std::lock_guard lock(mu_);
    auto it = categories_.find(key);
    if (it != categories_.end()) {
      future = it->second;
    } else {
      categories_.emplace(key, promise.get_future().share());
    }
  }
  if (future.valid()) return future.get();

  std::vector<double> sim;
  if (scene_.similarities()) {
    if (auto col = scene_.similarities()->column(name)) sim = std::move(*col);
  }
  if (sim.empty()) {
    auto table = exact_match_similarity(scene_, {name});
    for (const auto& row : table.values) sim.push_back(row[0]);
    if (std::all_of(sim.begin(), sim.end(), [](double v) { return v == 0.0; })) {
      std::lock_guard lock(mu_);
      warnings_.push_back("category '" + name + "' matches no object in scene " + scene_.id() +
                          "; category feature is uniform");
    }
  }
  auto feature = std::make_shared<const CategoryFeature>(compute_category_feature(scene_, sim, name));
  promise.set_value(feature);
  return feature;
}

std::vector<std::string> FeatureCache::warnings() const {
  std::lock_guard lock(mu_);
  return warnings_;
}

MatchingScore make_matching_score(std::vector<double> data) {
  MatchingScore score;
  score.data = std::move(data);
  score.argsort.resize(score.data.size());
  std::iota(score.argsort.begin(), score.argsort.end(), std::size_t{0});
  std::stable_sort(score.argsort.begin(), score.argsort.end(),
                   [&](std::size_t a, std::size_t b) { return score.data[a] > score.data[b]; });
  return score;
}

namespace {

std::vector<double> execute_rec(const SymbolicExpression& expr, FeatureCache& cache,
                                ExecutionTrace* trace) {
  const std::size_t n = cache.scene().size();
  std::vector<double> score = cache.category(expr.category)->data;
  if (trace) trace->steps.emplace_back("category:" + expr.category, score);

  for (const auto& clause : expr.relations) {
    const auto rel = cache.relation(clause.relation);
    std::vector<double> f(n, 0.0);
    if (rel->rank == 1) {
      f = rel->data;
    } else if (rel->rank == 2) {
      const auto a = execute_rec(clause.anchors.at(0), cache, nullptr);
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += rel->at(i, j) * a[j];
        f[i] = acc;
      }
    } else {
      const auto a1 = execute_rec(clause.anchors.at(0), cache, nullptr);
      const auto a2 = execute_rec(clause.anchors.at(1), cache, nullptr);
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0;
        for (std::size_t j = 0; j < n; ++j) {
          double inner = 0;
          for (std::size_t k = 0; k < n; ++k) inner += rel->at(i, j, k) * a2[k];
          acc += inner * a1[j];
        }
        f[i] = acc;
      }
    }
    f = stable_softmax(f);
    if (clause.negative) {
      const double m = *std::max_element(f.begin(), f.end());
      for (double& v : f) v = m - v;
    }
    for (std::size_t i = 0; i < n; ++i) score[i] *= f[i];
    if (trace) {
      trace->steps.emplace_back(std::string(clause.negative ? "not_" : "") +
                                    std::string(relation_name(clause.relation)),
                                score);
    }
  }
  return score;
}

}  // namespace

MatchingScore execute(const SymbolicExpression& expr, const Scene& scene, FeatureCache& cache,
                      ExecutionTrace* trace) {
  if (scene.fingerprint() != cache.fingerprint()) {
    throw ValidationError("feature cache belongs to scene " + cache.scene().id() +
                          ", not scene " + scene.id());
  }
  return make_matching_score(execute_rec(expr, cache, trace));
}

std::vector<std::size_t> rank_candidate_positions(const MatchingScore& score, int top_k,
                                                  double threshold) {
  if (top_k < 1) throw ValidationError("top_k must be at least 1");
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(top_k), score.argsort.size());
  std::vector<std::size_t> out;
  if (k == 0) return out;
  const double best = score.data[score.argsort[0]];
  out.push_back(score.argsort[0]);
  for (std::size_t r = 1; r < k; ++r) {
    const std::size_t pos = score.argsort[r];
    if (score.data[pos] >= threshold * best) out.push_back(pos);
  }
  return out;
}

std::vector<std::uint64_t> rank_candidates(const MatchingScore& score, const Scene& scene,
                                           int top_k, double threshold) {
  std::vector<std::uint64_t> ids;
  for (std::size_t pos : rank_candidate_positions(score, top_k, threshold)) {
    ids.push_back(scene[pos].id);
  }
  return ids;
}

ConditionMetrics condition_level_eval(const std::vector<ConditionSample>& samples,
                                      const EncoderRegistry& registry) {
  struct Outcome {
    std::uint64_t truth;
    std::uint64_t predicted;
  };
  // (scene id, normalized category) -> outcomes
  std::map<std::pair<std::string, std::string>, std::vector<Outcome>> groups;
  std::map<std::uint64_t, std::unique_ptr<FeatureCache>> caches;  // by scene fingerprint
  ConditionMetrics metrics;

  for (const auto& sample : samples) {
    const Scene& scene = *sample.scene;
    if (!scene.contains(sample.ground_truth)) {
      throw ValidationError("unknown ground-truth id " + std::to_string(sample.ground_truth) +
                            " in scene " + scene.id());
    }
    auto& cache = caches[scene.fingerprint()];
    if (!cache) cache = std::make_unique<FeatureCache>(scene, registry);
    for (const auto& clause : sample.expression.relations) {
      SymbolicExpression single{sample.expression.category, {clause}};
      const auto score = execute(single, scene, *cache);
      groups[{scene.id(), normalize_label(single.category)}].push_back(
          {sample.ground_truth, scene[score.argmax()].id});
      ++metrics.conditions;
    }
  }
  if (metrics.conditions == 0) {
    metrics.warnings.push_back("no conditions to evaluate; precision and recall default to 1");
    return metrics;
  }

  double precision_sum = 0, recall_sum = 0;
  std::size_t precision_n = 0, recall_n = 0;
  for (const auto& [key, outcomes] : groups) {
    std::map<std::uint64_t, std::array<std::size_t, 3>> per_object;  // hits, predicted, actual
    for (const auto& o : outcomes) {
      auto& truth = per_object[o.truth];
      ++truth[2];
      ++per_object[o.predicted][1];
      if (o.truth == o.predicted) ++truth[0];
    }
    for (const auto& [id, c] : per_object) {
      if (c[1] > 0) {
        precision_sum += static_cast<double>(c[0]) / static_cast<double>(c[1]);
        ++precision_n;
      }
      if (c[2] > 0) {
        recall_sum += static_cast<double>(c[0]) / static_cast<double>(c[2]);
        ++recall_n;
      }
    }
  }
  metrics.precision = precision_n ? precision_sum / static_cast<double>(precision_n) : 1.0;
  metrics.recall = recall_n ? recall_sum / static_cast<double>(recall_n) : 1.0;
  return metrics;
}

}  // namespace lasp
