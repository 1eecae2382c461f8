#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace lasp {

using Vec3 = std::array<double, 3>;

/// Thrown when input files or values violate a documented invariant.
/// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// z is up. size = (width along x, depth along y, height along z).
struct BoundingBox {
  Vec3 center{};
  Vec3 size{};

  double bottom() const { return center[2] - size[2] / 2; }
  double top() const { return center[2] + size[2] / 2; }
  double volume() const { return size[0] * size[1] * size[2]; }
  double diagonal() const;
};

struct SceneObject {
  std::uint64_t id = 0;
  std::string label;
  BoundingBox bbox;
};

/// Dense N x Q cosine-similarity table; column q belongs to categories[q].
struct SimilarityTable {
  std::vector<std::string> categories;
  std::vector<std::vector<double>> values;  // values[object][category]

  std::optional<std::vector<double>> column(std::string_view category) const;
};

/// Immutable set of labelled boxes. Position k always names the same object.
class Scene {
 public:
  Scene(std::string scene_id, std::vector<SceneObject> objects,
        std::optional<SimilarityTable> similarities = std::nullopt);

  const std::string& id() const { return scene_id_; }
  std::size_t size() const { return objects_.size(); }
  const std::vector<SceneObject>& objects() const { return objects_; }
  const SceneObject& operator[](std::size_t pos) const { return objects_[pos]; }
  const std::optional<SimilarityTable>& similarities() const { return similarities_; }

  /// Position of the object with this id; throws ValidationError when absent.
  std::size_t index_of(std::uint64_t object_id) const;
  bool contains(std::uint64_t object_id) const { return index_.count(object_id) != 0; }

  /// Stable content hash over ids, labels and the exact bits of every box value.
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  std::string scene_id_;
  std::vector<SceneObject> objects_;
  std::optional<SimilarityTable> similarities_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::uint64_t fingerprint_ = 0;
};

/// Shared pairwise geometry for the relation encoders.
struct PairGeometry {
  std::size_t n = 0;
  std::vector<Vec3> delta;     // n*n, center_i - center_j
  std::vector<double> dist;    // n*n
  double mean_diagonal = 0;
  double floor_z = 0;
  std::array<double, 2> hull_min{};  // x, y
  std::array<double, 2> hull_max{};
  Vec3 centroid{};
  double max_volume = 0;
  double min_volume = 0;
  double min_center_z = 0;
  double max_center_z = 0;

  double distance(std::size_t i, std::size_t j) const { return dist[i * n + j]; }
};

Scene scene_from_json(const nlohmann::json& doc);
nlohmann::json scene_to_json(const Scene& scene);
Scene load_scene(const std::filesystem::path& path);
void save_scene(const Scene& scene, const std::filesystem::path& path);

/// Loads every *.json scene in a directory, keyed by scene_id.
std::unordered_map<std::string, Scene> load_scene_dir(const std::filesystem::path& dir);

/// Case-fold, trim and collapse internal whitespace.
std::string normalize_label(std::string_view label);

SimilarityTable exact_match_similarity(const Scene& scene,
                                       const std::vector<std::string>& categories);

PairGeometry precompute_geometry(const Scene& scene);

}  // namespace lasp
