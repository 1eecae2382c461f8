#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "lasp/dsl.hpp"

namespace lasp {

/// Active encoder per relation plus the append-only library of accepted
/// definitions. Starts with every builtin active and an empty library.
///
/// Mutation is single-writer. Readers that need a stable view (a grounding
/// run) take a copy at start.
class EncoderRegistry {
 public:
  EncoderRegistry();

  const EncoderDefinition& active(Relation r) const;

  /// Validates, appends to the library and makes the definition active.
  void install(EncoderDefinition def);

  /// Most recently accepted definition for a relation, if any.
  std::optional<EncoderDefinition> latest_accepted(Relation r) const;

  const std::vector<EncoderDefinition>& library() const { return library_; }

  nlohmann::ordered_json to_json() const;
  static EncoderRegistry from_json(const nlohmann::json& doc);

  static EncoderRegistry load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::array<EncoderDefinition, kRelationCount> active_;
  std::vector<EncoderDefinition> library_;
};

}  // namespace lasp
