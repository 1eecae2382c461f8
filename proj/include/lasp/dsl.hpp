#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lasp/expression.hpp"
#include "lasp/scene.hpp"

namespace lasp {

/// a / (b + eps * sign(b)) with eps = 1e-6 and sign(0) = 1. Shared by the
/// interpreter and the native encoders so both routes agree to rounding.
inline double guarded_div(double a, double b) {
  constexpr double eps = 1e-6;
  return a / (b + (b < 0 ? -eps : eps));
}

/// Dense nonnegative feature of rank 1, 2 or 3, row-major.
struct RelationFeature {
  Relation relation = Relation::Near;
  int rank = 2;
  std::size_t n = 0;
  std::vector<double> data;

  double at(std::size_t i) const { return data[i]; }
  double at(std::size_t i, std::size_t j) const { return data[i * n + j]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return data[(i * n + j) * n + k]; }
};

namespace dsl {

enum class Kind { Const, Get, Agg, Apply };
enum class Obj { I, J, K };
enum class Field { Center, Size, Bottom, Top, Volume };
enum class Aggregate {
  MeanDiagonal,
  FloorZ,
  HullMin,
  HullMax,
  Centroid,
  MaxVolume,
  MinVolume,
  MinCenterZ,
  MaxCenterZ,
};
enum class Op { Add, Sub, Mul, Div, Min, Max, Abs, Neg, Exp, Sqrt, Relu, Clamp01, Dot2, Cross2 };

/// One node of an encoder expression tree. Only the members relevant to
/// `kind` are meaningful.
struct Node {
  Kind kind = Kind::Const;
  double value = 0;          // Const
  Field field = Field::Center;  // Get
  Obj obj = Obj::I;          // Get
  int axis = -1;             // Get center/size, Agg hull/centroid; 0..2 = x,y,z
  Aggregate agg = Aggregate::MeanDiagonal;  // Agg
  Op op = Op::Add;           // Apply
  std::vector<Node> args;    // Apply

  bool operator==(const Node&) const = default;
};

// Builders used by the builtin library and tests.
Node constant(double v);
Node get(Field f, Obj o, int axis = -1);
Node aggregate(Aggregate a, int axis = -1);
Node apply(Op op, std::vector<Node> args);

std::size_t node_count(const Node& n);
int node_depth(const Node& n);

/// Rewrites dot2/cross2 into add/sub/mul.
Node expand_sugar(const Node& n);

/// Swaps object references (e.g. i <-> j) throughout a tree.
Node swap_objects(const Node& n, Obj a, Obj b);

Node node_from_json(const nlohmann::json& doc, const std::string& path = "body");
nlohmann::ordered_json node_to_json(const Node& n);

}  // namespace dsl

inline constexpr std::size_t kMaxDefinitionNodes = 512;
inline constexpr int kMaxDefinitionDepth = 64;

/// One encoder candidate: a relation plus the expression computing its feature entry.
struct EncoderDefinition {
  Relation relation = Relation::Near;
  dsl::Node body;
  std::string metadata;

  bool operator==(const EncoderDefinition&) const = default;
};

struct DefinitionError {
  std::string path;
  std::string message;

  std::string to_string() const { return path + ": " + message; }
};

EncoderDefinition definition_from_json(const nlohmann::json& doc);
nlohmann::ordered_json definition_to_json(const EncoderDefinition& def);
EncoderDefinition load_definition(const std::filesystem::path& path);
void save_definition(const EncoderDefinition& def, const std::filesystem::path& path);

/// Hash of relation + canonical body (metadata excluded), hex-encoded.
std::string definition_hash(const EncoderDefinition& def);

/// Accepts iff the tree is well formed, only references objects valid for the
/// relation's arity, and stays within the depth and size caps.
std::optional<DefinitionError> validate_definition(const EncoderDefinition& def);

/// Evaluates the definition over every index tuple. Repeated indices are 0,
/// negative or non-finite raw values become 0. Requires a valid definition.
RelationFeature eval_encoder(const EncoderDefinition& def, const Scene& scene,
                             const PairGeometry& geom);

/// Deterministic random edit of a valid definition. The result is valid and
/// differs from the input in at least one node.
EncoderDefinition mutate_definition(const EncoderDefinition& def, std::uint64_t seed);

}  // namespace lasp
