#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lasp/dsl.hpp"
#include "lasp/expression.hpp"
#include "lasp/optimizer.hpp"
#include "lasp/scene.hpp"

namespace lasp {

/// Random cluttered room: boxes on the floor, stacked, or floating shelves.
Scene random_scene(std::mt19937_64& rng, std::size_t n_objects, std::string scene_id);

struct SuiteSpec {
  Relation relation = Relation::Near;
  std::size_t n_scenes = 6;
  std::size_t n_objects = 7;
  std::size_t n_cases = 40;
  double margin = 0.1;  // labeler must prefer the target by this relative margin
  std::uint64_t seed = 0;
};

/// Triplet suite whose ground truth is the labeler's own ordering, kept only
/// where the labeler separates target and distractor by the margin. The
/// labeler therefore passes every case.
TestSuite make_synthetic_suite(const SuiteSpec& spec, const EncoderDefinition& labeler);

struct BenchItem {
  std::string scene_id;
  std::string utterance;
  SymbolicExpression expression;
  std::uint64_t target = 0;
};

struct Dataset {
  std::vector<Scene> scenes;
  std::vector<BenchItem> items;

  const Scene& scene(const std::string& id) const;
};

/// Layout: <dir>/scenes/<scene_id>.json and <dir>/expressions.jsonl with one
/// {"scene_id", "utterance", "expression", "target"} object per line.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Seeded 40-utterance benchmark covering every relation, negation and
/// nesting. Each scene is resampled until a direct evaluation with the native
/// encoders prefers the target over every same-category distractor by a
/// clear margin.
Dataset generate_mini_benchmark(std::uint64_t seed = 2024);

}  // namespace lasp
