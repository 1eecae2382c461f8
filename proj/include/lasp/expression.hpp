#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lasp/scene.hpp"

namespace lasp {

enum class Relation {
  Large,
  Small,
  High,
  Low,
  OnTheFloor,
  AgainstTheWall,
  AtTheCorner,
  Near,
  Far,
  Above,
  Below,
  Left,
  Right,
  Front,
  Behind,
  Between,
};

inline constexpr std::size_t kRelationCount = 16;

/// Number of objects the relation ranges over: 1 (unary), 2 (binary) or 3 (ternary).
int arity(Relation r);

/// Canonical snake_case name, e.g. "on_the_floor".
std::string_view relation_name(Relation r);

/// Name with spaces, e.g. "on the floor".
std::string relation_phrase(Relation r);

const std::array<Relation, kRelationCount>& all_relations();

/// Case-folds and unifies spaces/underscores/hyphens before matching the closed set.
std::optional<Relation> find_relation(std::string_view name);

/// Like find_relation but throws ValidationError listing the closed set.
Relation parse_relation(std::string_view name);

struct SymbolicExpression;

struct RelationClause {
  Relation relation = Relation::Near;
  std::vector<SymbolicExpression> anchors;
  bool negative = false;

  bool operator==(const RelationClause&) const;
};

struct SymbolicExpression {
  std::string category;
  std::vector<RelationClause> relations;

  bool operator==(const SymbolicExpression&) const = default;
};

inline constexpr int kDefaultMaxDepth = 8;

SymbolicExpression expression_from_json(const nlohmann::json& doc,
                                        int max_depth = kDefaultMaxDepth);
nlohmann::ordered_json expression_to_json(const SymbolicExpression& expr);

/// Parses the JSON wire format. Accepts "anchors" or "objects" for the anchor list.
SymbolicExpression parse_expression(std::string_view text, int max_depth = kDefaultMaxDepth);

/// Canonical compact JSON: category, relations; clause keys relation_name, anchors, negative.
std::string serialize_expression(const SymbolicExpression& expr);

/// Every (target category, clause) pair in the tree, depth-first, root first.
std::vector<std::pair<std::string, RelationClause>> collect_conditions(
    const SymbolicExpression& expr);

/// Nesting depth; a bare category has depth 1.
int expression_depth(const SymbolicExpression& expr);

}  // namespace lasp
