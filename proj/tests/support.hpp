#pragma once
// Helpers shared by the unit and acceptance tests: random inputs and a
// brute-force evaluator that reimplements the scoring rules with plain loops.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lasp/dsl.hpp"
#include "lasp/encoders.hpp"
#include "lasp/expression.hpp"
#include "lasp/scene.hpp"

namespace lasp::testing {

inline const std::vector<std::string> kCategories = {"chair", "table", "lamp", "box", "shelf", "plant"};

inline SymbolicExpression random_expression(std::mt19937_64& rng, int depth,
                                            std::optional<Relation> forced = std::nullopt) {
  std::uniform_int_distribution<std::size_t> cat(0, kCategories.size() - 1);
  std::uniform_int_distribution<std::size_t> rel(0, kRelationCount - 1);
  std::uniform_int_distribution<int> clauses(0, 2);
  SymbolicExpression e;
  e.category = kCategories[cat(rng)];
  if (depth <= 0) return e;
  int n = forced ? 1 + clauses(rng) % 2 : clauses(rng);
  for (int c = 0; c < n; ++c) {
    RelationClause clause;
    clause.relation = (c == 0 && forced) ? *forced : all_relations()[rel(rng)];
    clause.negative = rng() % 4 == 0;
    for (int a = 0; a < arity(clause.relation) - 1; ++a) {
      clause.anchors.push_back(random_expression(rng, depth - 1));
    }
    e.relations.push_back(std::move(clause));
  }
  return e;
}

/// exp(100 * (s - max)) normalised, written out long-hand.
inline std::vector<double> brute_category(const Scene& scene, const std::string& category) {
  const std::size_t n = scene.size();
  std::vector<double> sim(n);
  for (std::size_t i = 0; i < n; ++i) {
    sim[i] = normalize_label(scene[i].label) == normalize_label(category) ? 1.0 : 0.0;
  }
  const double m = *std::max_element(sim.begin(), sim.end());
  double z = 0;
  for (double s : sim) z += std::exp(100 * (s - m));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(100 * (sim[i] - m)) / z;
  return out;
}

inline std::vector<double> brute_softmax(const std::vector<double>& f) {
  const double m = *std::max_element(f.begin(), f.end());
  double z = 0;
  for (double v : f) z += std::exp(v - m);
  std::vector<double> out;
  for (double v : f) out.push_back(std::exp(v - m) / z);
  return out;
}

/// Matching scores by exhaustive enumeration over every object tuple using the
/// directly coded encoders.
inline std::vector<double> brute_scores(const SymbolicExpression& expr, const Scene& scene) {
  const std::size_t n = scene.size();
  const auto geom = precompute_geometry(scene);
  std::vector<double> score = brute_category(scene, expr.category);
  for (const auto& clause : expr.relations) {
    const auto rel = native_feature(clause.relation, scene, geom);
    std::vector<std::vector<double>> anchor;
    for (const auto& a : clause.anchors) anchor.push_back(brute_scores(a, scene));
    std::vector<double> f(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      switch (arity(clause.relation)) {
        case 1: f[i] = rel.data[i]; break;
        case 2:
          for (std::size_t j = 0; j < n; ++j) f[i] += rel.data[i * n + j] * anchor[0][j];
          break;
        default:
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k)
              f[i] += rel.data[(i * n + j) * n + k] * anchor[0][j] * anchor[1][k];
      }
    }
    f = brute_softmax(f);
    if (clause.negative) {
      const double m = *std::max_element(f.begin(), f.end());
      for (double& v : f) v = m - v;
    }
    for (std::size_t i = 0; i < n; ++i) score[i] *= f[i];
  }
  return score;
}

/// The builtin near encoder with the vertical term damped: it still ranks
/// most pairs correctly but confuses objects stacked at different heights.
inline EncoderDefinition perturbed_near(double z_weight = 0.05) {
  using namespace dsl;
  auto dz = apply(Op::Sub, {get(Field::Center, Obj::I, 2), get(Field::Center, Obj::J, 2)});
  auto dx = apply(Op::Sub, {get(Field::Center, Obj::I, 0), get(Field::Center, Obj::J, 0)});
  auto dy = apply(Op::Sub, {get(Field::Center, Obj::I, 1), get(Field::Center, Obj::J, 1)});
  auto sum = apply(Op::Add, {apply(Op::Mul, {dx, dx}), apply(Op::Mul, {dy, dy}),
                             apply(Op::Mul, {constant(z_weight), dz, dz})});
  auto body = apply(Op::Exp, {apply(Op::Neg, {apply(Op::Div, {apply(Op::Sqrt, {sum}),
                                                              aggregate(Aggregate::MeanDiagonal)})})});
  return {Relation::Near, body, "perturbed"};
}


/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("lasp_test_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path write(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p) << text;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline SceneObject box(std::uint64_t id, std::string label, Vec3 center, Vec3 size = {1, 1, 1}) {
  return SceneObject{id, std::move(label), BoundingBox{center, size}};
}

}  // namespace lasp::testing
