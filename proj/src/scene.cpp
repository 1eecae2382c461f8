#include "lasp/scene.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "lasp/hash.hpp"

namespace lasp {

double BoundingBox::diagonal() const {
  return std::sqrt(size[0] * size[0] + size[1] * size[1] + size[2] * size[2]);
}

std::optional<std::vector<double>> SimilarityTable::column(std::string_view category) const {
  const std::string wanted = normalize_label(category);
  for (std::size_t q = 0; q < categories.size(); ++q) {
    if (normalize_label(categories[q]) != wanted) continue;
    std::vector<double> col;
    col.reserve(values.size());
    for (const auto& row : values) col.push_back(row[q]);
    return col;
  }
  return std::nullopt;
}

namespace {

void validate_object(const SceneObject& obj) {
  if (obj.label.empty()) {
    throw ValidationError("object " + std::to_string(obj.id) + ": empty label");
  }
  for (int a = 0; a < 3; ++a) {
    if (!std::isfinite(obj.bbox.center[a]) || !std::isfinite(obj.bbox.size[a])) {
      throw ValidationError("object " + std::to_string(obj.id) + ": non-finite bbox value");
    }
    if (!(obj.bbox.size[a] > 0)) {
      throw ValidationError("object " + std::to_string(obj.id) +
                            ": size components must be strictly positive");
    }
  }
}

void validate_similarities(const SimilarityTable& table, std::size_t n) {
  if (table.values.size() != n) {
    throw ValidationError("similarities: expected " + std::to_string(n) + " rows, got " +
                          std::to_string(table.values.size()));
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (table.values[r].size() != table.categories.size()) {
      throw ValidationError("similarities: row " + std::to_string(r) + " has " +
                            std::to_string(table.values[r].size()) + " entries, expected " +
                            std::to_string(table.categories.size()));
    }
    for (double v : table.values[r]) {
      if (!std::isfinite(v) || v < -1.0 || v > 1.0) {
        throw ValidationError("similarities: row " + std::to_string(r) +
                              " has a value outside [-1, 1]");
      }
    }
  }
}

}  // namespace

Scene::Scene(std::string scene_id, std::vector<SceneObject> objects,
             std::optional<SimilarityTable> similarities)
    : scene_id_(std::move(scene_id)),
      objects_(std::move(objects)),
      similarities_(std::move(similarities)) {
  if (objects_.empty()) throw ValidationError("scene " + scene_id_ + ": no objects");
  for (std::size_t k = 0; k < objects_.size(); ++k) {
    validate_object(objects_[k]);
    if (!index_.emplace(objects_[k].id, k).second) {
      throw ValidationError("duplicate id " + std::to_string(objects_[k].id));
    }
  }
  if (similarities_) validate_similarities(*similarities_, objects_.size());

  Fnv1a h;
  h.update(scene_id_);
  for (const auto& obj : objects_) {
    h.update(obj.id);
    h.update(obj.label);
    for (double v : obj.bbox.center) h.update(std::bit_cast<std::uint64_t>(v));
    for (double v : obj.bbox.size) h.update(std::bit_cast<std::uint64_t>(v));
  }
  fingerprint_ = h.digest();
}

std::size_t Scene::index_of(std::uint64_t object_id) const {
  auto it = index_.find(object_id);
  if (it == index_.end()) {
    throw ValidationError("scene " + scene_id_ + ": unknown object id " +
                          std::to_string(object_id));
  }
  return it->second;
}

Scene scene_from_json(const nlohmann::json& doc) {
  using nlohmann::json;
  if (!doc.is_object()) throw ValidationError("scene: top level must be an object");
  if (!doc.contains("scene_id") || !doc["scene_id"].is_string()) {
    throw ValidationError("scene: missing string field 'scene_id'");
  }
  if (!doc.contains("objects") || !doc["objects"].is_array()) {
    throw ValidationError("scene: missing array field 'objects'");
  }
  std::vector<SceneObject> objects;
  const auto& arr = doc["objects"];
  for (std::size_t k = 0; k < arr.size(); ++k) {
    const auto& o = arr[k];
    const std::string where = "objects[" + std::to_string(k) + "]";
    if (!o.is_object()) throw ValidationError(where + ": expected an object");
    if (!o.contains("id") || !o["id"].is_number_unsigned()) {
      throw ValidationError(where + ".id: expected a non-negative integer");
    }
    if (!o.contains("label") || !o["label"].is_string()) {
      throw ValidationError(where + ".label: expected a string");
    }
    if (!o.contains("bbox") || !o["bbox"].is_array() || o["bbox"].size() != 6) {
      throw ValidationError(where + ".bbox: expected 6 numbers [cx, cy, cz, w, d, h]");
    }
    SceneObject obj;
    obj.id = o["id"].get<std::uint64_t>();
    obj.label = o["label"].get<std::string>();
    for (int a = 0; a < 6; ++a) {
      const auto& v = o["bbox"][a];
      if (!v.is_number()) {
        throw ValidationError(where + ".bbox[" + std::to_string(a) + "]: expected a number");
      }
      (a < 3 ? obj.bbox.center[a] : obj.bbox.size[a - 3]) = v.get<double>();
    }
    objects.push_back(std::move(obj));
  }

  std::optional<SimilarityTable> sims;
  if (doc.contains("similarities")) {
    const auto& s = doc["similarities"];
    try {
      SimilarityTable table;
      table.categories = s.at("categories").get<std::vector<std::string>>();
      table.values = s.at("values").get<std::vector<std::vector<double>>>();
      sims = std::move(table);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("similarities: ") + e.what());
    }
  }
  return Scene(doc["scene_id"].get<std::string>(), std::move(objects), std::move(sims));
}

nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json doc;
  doc["scene_id"] = scene.id();
  auto& arr = doc["objects"] = nlohmann::json::array();
  for (const auto& obj : scene.objects()) {
    const auto& c = obj.bbox.center;
    const auto& s = obj.bbox.size;
    arr.push_back({{"id", obj.id},
                   {"label", obj.label},
                   {"bbox", {c[0], c[1], c[2], s[0], s[1], s[2]}}});
  }
  if (scene.similarities()) {
    doc["similarities"] = {{"categories", scene.similarities()->categories},
                           {"values", scene.similarities()->values}};
  }
  return doc;
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scene file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  try {
    return scene_from_json(doc);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << scene_to_json(scene).dump(2) << '\n';
}

std::unordered_map<std::string, Scene> load_scene_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("scene directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::unordered_map<std::string, Scene> scenes;
  for (const auto& f : files) {
    Scene s = load_scene(f);
    std::string key = s.id();
    if (!scenes.emplace(key, std::move(s)).second) {
      throw ValidationError("duplicate scene_id " + key + " in " + dir.string());
    }
  }
  return scenes;
}

std::string normalize_label(std::string_view label) {
  std::string out;
  bool pending_space = false;
  for (unsigned char ch : label) {
    if (std::isspace(ch)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(ch)));
  }
  return out;
}

SimilarityTable exact_match_similarity(const Scene& scene,
                                       const std::vector<std::string>& categories) {
  SimilarityTable table;
  table.categories = categories;
  std::vector<std::string> wanted;
  for (const auto& c : categories) wanted.push_back(normalize_label(c));
  for (const auto& obj : scene.objects()) {
    const std::string label = normalize_label(obj.label);
    std::vector<double> row;
    for (const auto& w : wanted) row.push_back(label == w ? 1.0 : 0.0);
    table.values.push_back(std::move(row));
  }
  return table;
}

PairGeometry precompute_geometry(const Scene& scene) {
  PairGeometry g;
  const std::size_t n = scene.size();
  g.n = n;
  g.delta.resize(n * n);
  g.dist.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Vec3 d{};
      for (int a = 0; a < 3; ++a) d[a] = scene[i].bbox.center[a] - scene[j].bbox.center[a];
      g.delta[i * n + j] = d;
      g.dist[i * n + j] = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    }
  }

  constexpr double inf = std::numeric_limits<double>::infinity();
  double diag_sum = 0;
  g.floor_z = inf;
  g.hull_min = {inf, inf};
  g.hull_max = {-inf, -inf};
  g.min_volume = inf;
  g.max_volume = -inf;
  g.min_center_z = inf;
  g.max_center_z = -inf;
  for (const auto& obj : scene.objects()) {
    const auto& b = obj.bbox;
    diag_sum += b.diagonal();
    g.floor_z = std::min(g.floor_z, b.bottom());
    for (int a = 0; a < 2; ++a) {
      g.hull_min[a] = std::min(g.hull_min[a], b.center[a] - b.size[a] / 2);
      g.hull_max[a] = std::max(g.hull_max[a], b.center[a] + b.size[a] / 2);
      g.centroid[a] += b.center[a];
    }
    g.centroid[2] += b.center[2];
    g.min_volume = std::min(g.min_volume, b.volume());
    g.max_volume = std::max(g.max_volume, b.volume());
    g.min_center_z = std::min(g.min_center_z, b.center[2]);
    g.max_center_z = std::max(g.max_center_z, b.center[2]);
  }
  g.mean_diagonal = diag_sum / static_cast<double>(n);
  for (double& c : g.centroid) c /= static_cast<double>(n);
  return g;
}

}  // namespace lasp
