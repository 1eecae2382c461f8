#include "lasp/expression.hpp"

#include <algorithm>
#include <cctype>

namespace lasp {

namespace {

struct RelationInfo {
  Relation rel;
  std::string_view name;
  int arity;
};

constexpr std::array<RelationInfo, kRelationCount> kRelations{{
    {Relation::Large, "large", 1},
    {Relation::Small, "small", 1},
    {Relation::High, "high", 1},
    {Relation::Low, "low", 1},
    {Relation::OnTheFloor, "on_the_floor", 1},
    {Relation::AgainstTheWall, "against_the_wall", 1},
    {Relation::AtTheCorner, "at_the_corner", 1},
    {Relation::Near, "near", 2},
    {Relation::Far, "far", 2},
    {Relation::Above, "above", 2},
    {Relation::Below, "below", 2},
    {Relation::Left, "left", 2},
    {Relation::Right, "right", 2},
    {Relation::Front, "front", 2},
    {Relation::Behind, "behind", 2},
    {Relation::Between, "between", 3},
}};

const RelationInfo& info(Relation r) { return kRelations[static_cast<std::size_t>(r)]; }

std::string closed_set_list() {
  std::string out;
  for (const auto& ri : kRelations) {
    if (!out.empty()) out += ", ";
    out += ri.name;
  }
  return out;
}

}  // namespace

int arity(Relation r) { return info(r).arity; }

std::string_view relation_name(Relation r) { return info(r).name; }

std::string relation_phrase(Relation r) {
  std::string s(info(r).name);
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

const std::array<Relation, kRelationCount>& all_relations() {
  static const std::array<Relation, kRelationCount> rels = [] {
    std::array<Relation, kRelationCount> out{};
    for (std::size_t k = 0; k < kRelationCount; ++k) out[k] = kRelations[k].rel;
    return out;
  }();
  return rels;
}

std::optional<Relation> find_relation(std::string_view name) {
  std::string key;
  bool sep = false;
  for (unsigned char ch : name) {
    if (std::isspace(ch) || ch == '_' || ch == '-') {
      sep = !key.empty();
      continue;
    }
    if (sep) key.push_back('_');
    sep = false;
    key.push_back(static_cast<char>(std::tolower(ch)));
  }
  for (const auto& ri : kRelations) {
    if (ri.name == key) return ri.rel;
  }
  return std::nullopt;
}

Relation parse_relation(std::string_view name) {
  if (auto r = find_relation(name)) return *r;
  throw ValidationError("unknown relation '" + std::string(name) +
                        "'; expected one of: " + closed_set_list());
}

bool RelationClause::operator==(const RelationClause& o) const {
  return relation == o.relation && negative == o.negative && anchors == o.anchors;
}

namespace {

SymbolicExpression parse_node(const nlohmann::json& doc, int depth, int max_depth,
                              const std::string& path) {
  if (depth > max_depth) {
    throw ValidationError(path + ": expression nesting exceeds depth " +
                          std::to_string(max_depth));
  }
  if (!doc.is_object()) throw ValidationError(path + ": expected a JSON object");
  if (!doc.contains("category") || !doc["category"].is_string() ||
      doc["category"].get<std::string>().empty()) {
    throw ValidationError(path + ": missing category");
  }
  SymbolicExpression expr;
  expr.category = doc["category"].get<std::string>();
  if (!doc.contains("relations") || doc["relations"].is_null()) return expr;
  const auto& rels = doc["relations"];
  if (!rels.is_array()) throw ValidationError(path + ".relations: expected an array");

  for (std::size_t c = 0; c < rels.size(); ++c) {
    const auto& item = rels[c];
    const std::string cpath = path + ".relations[" + std::to_string(c) + "]";
    if (!item.is_object()) throw ValidationError(cpath + ": expected a JSON object");
    const char* name_key = item.contains("relation_name") ? "relation_name"
                           : item.contains("name")        ? "name"
                                                          : nullptr;
    if (!name_key || !item[name_key].is_string()) {
      throw ValidationError(cpath + ": missing relation_name");
    }
    RelationClause clause;
    try {
      clause.relation = parse_relation(item[name_key].get<std::string>());
    } catch (const ValidationError& e) {
      throw ValidationError(cpath + ": " + e.what());
    }
    const nlohmann::json* anchors = nullptr;
    if (item.contains("anchors")) anchors = &item["anchors"];
    else if (item.contains("objects")) anchors = &item["objects"];
    if (anchors && !anchors->is_null()) {
      if (!anchors->is_array()) throw ValidationError(cpath + ".anchors: expected an array");
      for (std::size_t a = 0; a < anchors->size(); ++a) {
        clause.anchors.push_back(parse_node((*anchors)[a], depth + 1, max_depth,
                                            cpath + ".anchors[" + std::to_string(a) + "]"));
      }
    }
    const std::size_t expected = static_cast<std::size_t>(arity(clause.relation) - 1);
    if (clause.anchors.size() != expected) {
      throw ValidationError(cpath + ": relation '" + std::string(relation_name(clause.relation)) +
                            "' takes " + std::to_string(expected) + " anchor(s), got " +
                            std::to_string(clause.anchors.size()));
    }
    if (item.contains("negative") && !item["negative"].is_null()) {
      if (!item["negative"].is_boolean()) {
        throw ValidationError(cpath + ".negative: expected a boolean");
      }
      clause.negative = item["negative"].get<bool>();
    }
    expr.relations.push_back(std::move(clause));
  }
  return expr;
}

}  // namespace

SymbolicExpression expression_from_json(const nlohmann::json& doc, int max_depth) {
  return parse_node(doc, 1, max_depth, "expression");
}

SymbolicExpression parse_expression(std::string_view text, int max_depth) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed expression JSON: ") + e.what());
  }
  return expression_from_json(doc, max_depth);
}

nlohmann::ordered_json expression_to_json(const SymbolicExpression& expr) {
  nlohmann::ordered_json out;
  out["category"] = expr.category;
  out["relations"] = nlohmann::ordered_json::array();
  for (const auto& clause : expr.relations) {
    nlohmann::ordered_json c;
    c["relation_name"] = relation_name(clause.relation);
    c["anchors"] = nlohmann::ordered_json::array();
    for (const auto& a : clause.anchors) c["anchors"].push_back(expression_to_json(a));
    c["negative"] = clause.negative;
    out["relations"].push_back(std::move(c));
  }
  return out;
}

namespace {

void collect(const SymbolicExpression& expr,
             std::vector<std::pair<std::string, RelationClause>>& out) {
  for (const auto& clause : expr.relations) {
    out.emplace_back(expr.category, clause);
    for (const auto& a : clause.anchors) collect(a, out);
  }
}

}  // namespace

std::string serialize_expression(const SymbolicExpression& expr) {
  return expression_to_json(expr).dump();
}

std::vector<std::pair<std::string, RelationClause>> collect_conditions(
    const SymbolicExpression& expr) {
  std::vector<std::pair<std::string, RelationClause>> out;
  collect(expr, out);
  return out;
}

int expression_depth(const SymbolicExpression& expr) {
  int deepest = 0;
  for (const auto& clause : expr.relations) {
    for (const auto& a : clause.anchors) deepest = std::max(deepest, expression_depth(a));
  }
  return deepest + 1;
}

}  // namespace lasp
