#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lasp/llm.hpp"
#include "lasp/registry.hpp"
#include "lasp/synthetic.hpp"

namespace lasp {

struct BenchOptions {
  int top_k = 5;
  double threshold = 0.9;
  unsigned workers = 0;  // 0 = hardware concurrency
  bool timing = true;    // false zeroes wall-clock fields for byte-stable reports
  std::optional<std::filesystem::path> plots_dir;
  // When set, utterances are re-parsed through it instead of using the
  // dataset's stored expressions.
  const UtteranceParser* parser = nullptr;
  std::shared_ptr<UsageLedger> ledger;  // token accounting for the parser
};

struct BenchRecord {
  std::string scene_id;
  SymbolicExpression expression;
  std::uint64_t argmax = 0;
  std::uint64_t ground_truth = 0;
  std::vector<std::uint64_t> candidates;
  bool correct = false;
  double wall_ms = 0;
  long tokens = 0;
};

struct BenchReport {
  std::vector<BenchRecord> records;
  double accuracy = 0;
  double mean_wall_ms = 0;
  double mean_tokens = 0;
  double condition_precision = 1;
  double condition_recall = 1;
  std::vector<std::string> warnings;
  nlohmann::ordered_json config;
};

/// Grounds every item (in parallel, results kept in input order) and
/// aggregates accuracy and condition-level metrics.
BenchReport run_bench(const Dataset& data, const EncoderRegistry& registry,
                      const BenchOptions& options = {});

nlohmann::ordered_json bench_report_to_json(const BenchReport& report);

struct BaselineReport {
  double accuracy = 0;           // observed with the seeded picks
  double expected_accuracy = 0;  // mean of 1 / |same-category group|
  std::vector<std::uint64_t> picks;
};

/// Uniform pick among objects of the root category, seeded.
BaselineReport random_baseline(const Dataset& data, std::uint64_t seed);

}  // namespace lasp
