#include "lasp/registry.hpp"

#include <fstream>

#include "lasp/encoders.hpp"

namespace lasp {

EncoderRegistry::EncoderRegistry() {
  for (Relation r : all_relations()) active_[static_cast<std::size_t>(r)] = encoder_to_dsl(r);
}

const EncoderDefinition& EncoderRegistry::active(Relation r) const {
  return active_[static_cast<std::size_t>(r)];
}

void EncoderRegistry::install(EncoderDefinition def) {
  if (auto err = validate_definition(def)) {
    throw ValidationError("cannot install " + std::string(relation_name(def.relation)) +
                          " encoder: " + err->to_string());
  }
  active_[static_cast<std::size_t>(def.relation)] = def;
  library_.push_back(std::move(def));
}

std::optional<EncoderDefinition> EncoderRegistry::latest_accepted(Relation r) const {
  for (auto it = library_.rbegin(); it != library_.rend(); ++it) {
    if (it->relation == r) return *it;
  }
  return std::nullopt;
}

nlohmann::ordered_json EncoderRegistry::to_json() const {
  nlohmann::ordered_json doc;
  doc["active"] = nlohmann::ordered_json::object();
  for (Relation r : all_relations()) {
    const auto& def = active(r);
    // Builtins are implicit; only overrides are written.
    if (def == encoder_to_dsl(r)) continue;
    doc["active"][std::string(relation_name(r))] = definition_to_json(def);
  }
  doc["library"] = nlohmann::ordered_json::array();
  for (const auto& def : library_) doc["library"].push_back(definition_to_json(def));
  return doc;
}

EncoderRegistry EncoderRegistry::from_json(const nlohmann::json& doc) {
  EncoderRegistry reg;
  if (doc.contains("library")) {
    for (const auto& item : doc["library"]) reg.library_.push_back(definition_from_json(item));
  }
  if (doc.contains("active")) {
    for (const auto& [name, item] : doc["active"].items()) {
      EncoderDefinition def = definition_from_json(item);
      if (def.relation != parse_relation(name)) {
        throw ValidationError("registry: active entry '" + name + "' holds a " +
                              std::string(relation_name(def.relation)) + " definition");
      }
      if (auto err = validate_definition(def)) {
        throw ValidationError("registry: " + name + ": " + err->to_string());
      }
      reg.active_[static_cast<std::size_t>(def.relation)] = std::move(def);
    }
  }
  return reg;
}

EncoderRegistry EncoderRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open registry " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void EncoderRegistry::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

}  // namespace lasp
