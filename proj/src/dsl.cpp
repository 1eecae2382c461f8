#include "lasp/dsl.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <string_view>

#include "lasp/encoders.hpp"
#include "lasp/hash.hpp"

namespace lasp {
namespace dsl {

namespace {

constexpr std::array<std::string_view, 14> kOpNames{
    "add", "sub", "mul", "div", "min", "max", "abs",
    "neg", "exp", "sqrt", "relu", "clamp01", "dot2", "cross2"};
constexpr std::array<std::string_view, 5> kFieldNames{"center", "size", "bottom", "top", "volume"};
constexpr std::array<std::string_view, 9> kAggNames{
    "mean_diagonal", "floor_z", "hull_min", "hull_max", "centroid",
    "max_volume", "min_volume", "min_center_z", "max_center_z"};
constexpr std::array<std::string_view, 3> kObjNames{"i", "j", "k"};
constexpr std::array<std::string_view, 3> kAxisNames{"x", "y", "z"};

template <std::size_t N>
int lookup(const std::array<std::string_view, N>& names, std::string_view key) {
  for (std::size_t k = 0; k < N; ++k) {
    if (names[k] == key) return static_cast<int>(k);
  }
  return -1;
}

bool field_has_axis(Field f) { return f == Field::Center || f == Field::Size; }

bool agg_has_axis(Aggregate a) {
  return a == Aggregate::HullMin || a == Aggregate::HullMax || a == Aggregate::Centroid;
}

// {min, max} argument counts; max 0 means unbounded.
std::pair<std::size_t, std::size_t> op_arity(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Mul:
    case Op::Min:
    case Op::Max:
      return {2, 0};
    case Op::Sub:
    case Op::Div:
      return {2, 2};
    case Op::Dot2:
    case Op::Cross2:
      return {4, 4};
    default:
      return {1, 1};
  }
}

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ValidationError(path + ": " + msg);
}

int parse_axis(const nlohmann::json& doc, const std::string& path) {
  if (!doc.contains("axis")) return -1;
  if (!doc["axis"].is_string()) fail(path + ".axis", "expected one of x, y, z");
  int a = lookup(kAxisNames, doc["axis"].get<std::string>());
  if (a < 0) fail(path + ".axis", "expected one of x, y, z");
  return a;
}

}  // namespace

Node constant(double v) {
  Node n;
  n.kind = Kind::Const;
  n.value = v;
  return n;
}

Node get(Field f, Obj o, int axis) {
  Node n;
  n.kind = Kind::Get;
  n.field = f;
  n.obj = o;
  n.axis = axis;
  return n;
}

Node aggregate(Aggregate a, int axis) {
  Node n;
  n.kind = Kind::Agg;
  n.agg = a;
  n.axis = axis;
  return n;
}

Node apply(Op op, std::vector<Node> args) {
  Node n;
  n.kind = Kind::Apply;
  n.op = op;
  n.args = std::move(args);
  return n;
}

std::size_t node_count(const Node& n) {
  std::size_t total = 1;
  for (const auto& a : n.args) total += node_count(a);
  return total;
}

int node_depth(const Node& n) {
  int deepest = 0;
  for (const auto& a : n.args) deepest = std::max(deepest, node_depth(a));
  return deepest + 1;
}

Node expand_sugar(const Node& n) {
  if (n.kind != Kind::Apply) return n;
  std::vector<Node> args;
  args.reserve(n.args.size());
  for (const auto& a : n.args) args.push_back(expand_sugar(a));
  if (n.op == Op::Dot2 && args.size() == 4) {
    return apply(Op::Add, {apply(Op::Mul, {args[0], args[2]}), apply(Op::Mul, {args[1], args[3]})});
  }
  if (n.op == Op::Cross2 && args.size() == 4) {
    return apply(Op::Sub, {apply(Op::Mul, {args[0], args[3]}), apply(Op::Mul, {args[1], args[2]})});
  }
  Node out = n;
  out.args = std::move(args);
  return out;
}

Node swap_objects(const Node& n, Obj a, Obj b) {
  Node out = n;
  if (out.kind == Kind::Get) {
    if (out.obj == a) out.obj = b;
    else if (out.obj == b) out.obj = a;
  }
  for (auto& arg : out.args) arg = swap_objects(arg, a, b);
  return out;
}

Node node_from_json(const nlohmann::json& doc, const std::string& path) {
  if (!doc.is_object()) fail(path, "expected a JSON object");
  if (doc.contains("const")) {
    if (!doc["const"].is_number()) fail(path + ".const", "expected a number");
    return constant(doc["const"].get<double>());
  }
  if (doc.contains("get")) {
    if (!doc["get"].is_string()) fail(path + ".get", "expected an accessor name");
    int f = lookup(kFieldNames, doc["get"].get<std::string>());
    if (f < 0) fail(path + ".get", "unknown accessor '" + doc["get"].get<std::string>() + "'");
    if (!doc.contains("obj") || !doc["obj"].is_string()) fail(path + ".obj", "expected i, j or k");
    int o = lookup(kObjNames, doc["obj"].get<std::string>());
    if (o < 0) fail(path + ".obj", "expected i, j or k");
    return get(static_cast<Field>(f), static_cast<Obj>(o), parse_axis(doc, path));
  }
  if (doc.contains("agg")) {
    if (!doc["agg"].is_string()) fail(path + ".agg", "expected an aggregate name");
    int a = lookup(kAggNames, doc["agg"].get<std::string>());
    if (a < 0) fail(path + ".agg", "unknown aggregate '" + doc["agg"].get<std::string>() + "'");
    return aggregate(static_cast<Aggregate>(a), parse_axis(doc, path));
  }
  if (doc.contains("op")) {
    if (!doc["op"].is_string()) fail(path + ".op", "expected an operator name");
    int op = lookup(kOpNames, doc["op"].get<std::string>());
    if (op < 0) fail(path + ".op", "unknown operator '" + doc["op"].get<std::string>() + "'");
    if (!doc.contains("args") || !doc["args"].is_array()) fail(path + ".args", "expected an array");
    std::vector<Node> args;
    for (std::size_t k = 0; k < doc["args"].size(); ++k) {
      args.push_back(node_from_json(doc["args"][k], path + ".args[" + std::to_string(k) + "]"));
    }
    return apply(static_cast<Op>(op), std::move(args));
  }
  fail(path, "expected one of const, get, agg or op");
}

nlohmann::ordered_json node_to_json(const Node& n) {
  nlohmann::ordered_json out;
  switch (n.kind) {
    case Kind::Const:
      out["const"] = n.value;
      break;
    case Kind::Get:
      out["get"] = kFieldNames[static_cast<int>(n.field)];
      out["obj"] = kObjNames[static_cast<int>(n.obj)];
      if (n.axis >= 0 && n.axis < 3) out["axis"] = kAxisNames[n.axis];
      break;
    case Kind::Agg:
      out["agg"] = kAggNames[static_cast<int>(n.agg)];
      if (n.axis >= 0 && n.axis < 3) out["axis"] = kAxisNames[n.axis];
      break;
    case Kind::Apply:
      out["op"] = kOpNames[static_cast<int>(n.op)];
      out["args"] = nlohmann::ordered_json::array();
      for (const auto& a : n.args) out["args"].push_back(node_to_json(a));
      break;
  }
  return out;
}

}  // namespace dsl

EncoderDefinition definition_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("definition: expected a JSON object");
  if (!doc.contains("relation") || !doc["relation"].is_string()) {
    throw ValidationError("definition: missing relation");
  }
  EncoderDefinition def;
  def.relation = parse_relation(doc["relation"].get<std::string>());
  if (doc.contains("metadata") && doc["metadata"].is_string()) {
    def.metadata = doc["metadata"].get<std::string>();
  }
  if (!doc.contains("body")) throw ValidationError("definition: missing body");
  def.body = dsl::node_from_json(doc["body"]);
  return def;
}

nlohmann::ordered_json definition_to_json(const EncoderDefinition& def) {
  nlohmann::ordered_json out;
  out["relation"] = relation_name(def.relation);
  out["metadata"] = def.metadata;
  out["body"] = dsl::node_to_json(def.body);
  return out;
}

EncoderDefinition load_definition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open definition file " + path.string());
  try {
    return definition_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void save_definition(const EncoderDefinition& def, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << definition_to_json(def).dump(2) << '\n';
}

std::string definition_hash(const EncoderDefinition& def) {
  Fnv1a h;
  h.update(relation_name(def.relation));
  h.update(dsl::node_to_json(def.body).dump());
  return to_hex(h.digest());
}

namespace {

using namespace dsl;

std::optional<DefinitionError> check_node(const Node& n, int max_obj, const std::string& path) {
  switch (n.kind) {
    case Kind::Const:
      if (!std::isfinite(n.value)) return DefinitionError{path, "non-finite constant"};
      if (!n.args.empty()) return DefinitionError{path, "leaf with arguments"};
      return std::nullopt;
    case Kind::Get:
      if (static_cast<int>(n.obj) > max_obj) {
        return DefinitionError{path, "object '" + std::string(kObjNames[static_cast<int>(n.obj)]) +
                                         "' is not available for a relation of arity " +
                                         std::to_string(max_obj + 1)};
      }
      if (field_has_axis(n.field) ? (n.axis < 0 || n.axis > 2) : n.axis != -1) {
        return DefinitionError{path, field_has_axis(n.field) ? "accessor needs an axis"
                                                            : "accessor takes no axis"};
      }
      if (!n.args.empty()) return DefinitionError{path, "leaf with arguments"};
      return std::nullopt;
    case Kind::Agg: {
      const int max_axis = n.agg == Aggregate::Centroid ? 2 : 1;
      if (agg_has_axis(n.agg) ? (n.axis < 0 || n.axis > max_axis) : n.axis != -1) {
        return DefinitionError{path, agg_has_axis(n.agg) ? "aggregate needs a valid axis"
                                                         : "aggregate takes no axis"};
      }
      if (!n.args.empty()) return DefinitionError{path, "leaf with arguments"};
      return std::nullopt;
    }
    case Kind::Apply: {
      auto [lo, hi] = op_arity(n.op);
      if (n.args.size() < lo || (hi != 0 && n.args.size() > hi)) {
        return DefinitionError{path, "operator '" + std::string(kOpNames[static_cast<int>(n.op)]) +
                                         "' got " + std::to_string(n.args.size()) + " argument(s)"};
      }
      for (std::size_t k = 0; k < n.args.size(); ++k) {
        if (auto err = check_node(n.args[k], max_obj, path + ".args[" + std::to_string(k) + "]")) {
          return err;
        }
      }
      return std::nullopt;
    }
  }
  return DefinitionError{path, "unknown node kind"};
}

struct EvalContext {
  const Scene& scene;
  const PairGeometry& geom;
  std::array<std::size_t, 3> idx{};
};

double eval_node(const Node& n, const EvalContext& ctx) {
  switch (n.kind) {
    case Kind::Const:
      return n.value;
    case Kind::Get: {
      const auto& box = ctx.scene[ctx.idx[static_cast<int>(n.obj)]].bbox;
      switch (n.field) {
        case Field::Center: return box.center[n.axis];
        case Field::Size: return box.size[n.axis];
        case Field::Bottom: return box.bottom();
        case Field::Top: return box.top();
        case Field::Volume: return box.volume();
      }
      return 0;
    }
    case Kind::Agg: {
      const auto& g = ctx.geom;
      switch (n.agg) {
        case Aggregate::MeanDiagonal: return g.mean_diagonal;
        case Aggregate::FloorZ: return g.floor_z;
        case Aggregate::HullMin: return g.hull_min[n.axis];
        case Aggregate::HullMax: return g.hull_max[n.axis];
        case Aggregate::Centroid: return g.centroid[n.axis];
        case Aggregate::MaxVolume: return g.max_volume;
        case Aggregate::MinVolume: return g.min_volume;
        case Aggregate::MinCenterZ: return g.min_center_z;
        case Aggregate::MaxCenterZ: return g.max_center_z;
      }
      return 0;
    }
    case Kind::Apply:
      break;
  }
  const auto& a = n.args;
  switch (n.op) {
    case Op::Add: {
      double v = eval_node(a[0], ctx);
      for (std::size_t k = 1; k < a.size(); ++k) v += eval_node(a[k], ctx);
      return v;
    }
    case Op::Mul: {
      double v = eval_node(a[0], ctx);
      for (std::size_t k = 1; k < a.size(); ++k) v *= eval_node(a[k], ctx);
      return v;
    }
    case Op::Min: {
      double v = eval_node(a[0], ctx);
      for (std::size_t k = 1; k < a.size(); ++k) v = std::min(v, eval_node(a[k], ctx));
      return v;
    }
    case Op::Max: {
      double v = eval_node(a[0], ctx);
      for (std::size_t k = 1; k < a.size(); ++k) v = std::max(v, eval_node(a[k], ctx));
      return v;
    }
    case Op::Sub: return eval_node(a[0], ctx) - eval_node(a[1], ctx);
    case Op::Div: return guarded_div(eval_node(a[0], ctx), eval_node(a[1], ctx));
    case Op::Abs: return std::abs(eval_node(a[0], ctx));
    case Op::Neg: return -eval_node(a[0], ctx);
    case Op::Exp: return std::exp(std::min(eval_node(a[0], ctx), 700.0));
    case Op::Sqrt: return std::sqrt(std::max(eval_node(a[0], ctx), 0.0));
    case Op::Relu: return std::max(eval_node(a[0], ctx), 0.0);
    case Op::Clamp01: return std::clamp(eval_node(a[0], ctx), 0.0, 1.0);
    case Op::Dot2:
      return eval_node(a[0], ctx) * eval_node(a[2], ctx) + eval_node(a[1], ctx) * eval_node(a[3], ctx);
    case Op::Cross2:
      return eval_node(a[0], ctx) * eval_node(a[3], ctx) - eval_node(a[1], ctx) * eval_node(a[2], ctx);
  }
  return 0;
}

double sanitize(double v) { return (std::isfinite(v) && v > 0) ? v : 0.0; }

}  // namespace

std::optional<DefinitionError> validate_definition(const EncoderDefinition& def) {
  if (node_count(def.body) > kMaxDefinitionNodes) {
    return DefinitionError{"body", "tree has " + std::to_string(node_count(def.body)) +
                                       " nodes, limit is " + std::to_string(kMaxDefinitionNodes)};
  }
  if (node_depth(def.body) > kMaxDefinitionDepth) {
    return DefinitionError{"body", "tree depth " + std::to_string(node_depth(def.body)) +
                                       " exceeds " + std::to_string(kMaxDefinitionDepth)};
  }
  return check_node(def.body, arity(def.relation) - 1, "body");
}

RelationFeature eval_encoder(const EncoderDefinition& def, const Scene& scene,
                             const PairGeometry& geom) {
  const Node body = expand_sugar(def.body);
  RelationFeature f;
  f.relation = def.relation;
  f.rank = arity(def.relation);
  f.n = scene.size();
  const std::size_t n = f.n;
  EvalContext ctx{scene, geom};
  if (f.rank == 1) {
    f.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      ctx.idx = {i, 0, 0};
      f.data[i] = sanitize(eval_node(body, ctx));
    }
  } else if (f.rank == 2) {
    f.data.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        ctx.idx = {i, j, 0};
        f.data[i * n + j] = sanitize(eval_node(body, ctx));
      }
    }
  } else {
    f.data.assign(n * n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == i || k == j) continue;
          ctx.idx = {i, j, k};
          f.data[(i * n + j) * n + k] = sanitize(eval_node(body, ctx));
        }
      }
    }
  }
  return f;
}

namespace {

void collect_nodes(Node& n, std::vector<Node*>& out) {
  out.push_back(&n);
  for (auto& a : n.args) collect_nodes(a, out);
}

enum class Mutation { ScaleConstant, SwapOp, WrapExpNeg, WrapAbs, Graft };

bool scale_constant(Node& body, std::mt19937_64& rng) {
  std::vector<Node*> nodes;
  collect_nodes(body, nodes);
  std::vector<Node*> consts;
  for (Node* n : nodes) {
    if (n->kind == Kind::Const && n->value != 0.0) consts.push_back(n);
  }
  if (consts.empty()) return false;
  Node* target = consts[std::uniform_int_distribution<std::size_t>(0, consts.size() - 1)(rng)];
  double factor = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  if (std::abs(factor - 1.0) < 1e-3) factor = 1.25;
  target->value *= factor;
  return true;
}

bool swap_op(Node& body, std::mt19937_64& rng) {
  std::vector<Node*> nodes;
  collect_nodes(body, nodes);
  std::vector<Node*> swappable;
  for (Node* n : nodes) {
    if (n->kind == Kind::Apply &&
        (n->op == Op::Add || n->op == Op::Mul || n->op == Op::Min || n->op == Op::Max)) {
      swappable.push_back(n);
    }
  }
  if (swappable.empty()) return false;
  Node* target = swappable[std::uniform_int_distribution<std::size_t>(0, swappable.size() - 1)(rng)];
  switch (target->op) {
    case Op::Add: target->op = Op::Mul; break;
    case Op::Mul: target->op = Op::Add; break;
    case Op::Min: target->op = Op::Max; break;
    default: target->op = Op::Min; break;
  }
  return true;
}

bool wrap(Node& body, std::mt19937_64& rng, bool exp_neg) {
  std::vector<Node*> nodes;
  collect_nodes(body, nodes);
  Node* target = nodes[std::uniform_int_distribution<std::size_t>(0, nodes.size() - 1)(rng)];
  Node inner = *target;
  *target = exp_neg ? apply(Op::Exp, {apply(Op::Neg, {std::move(inner)})})
                    : apply(Op::Abs, {std::move(inner)});
  return true;
}

bool graft(Node& body, Relation relation, std::mt19937_64& rng) {
  std::vector<Relation> donors;
  for (Relation r : all_relations()) {
    if (arity(r) <= arity(relation)) donors.push_back(r);
  }
  Relation donor = relation;
  if (std::bernoulli_distribution(0.5)(rng)) {
    donor = donors[std::uniform_int_distribution<std::size_t>(0, donors.size() - 1)(rng)];
  }
  EncoderDefinition donor_def = encoder_to_dsl(donor);
  std::vector<Node*> donor_nodes;
  collect_nodes(donor_def.body, donor_nodes);
  const Node& piece =
      *donor_nodes[std::uniform_int_distribution<std::size_t>(0, donor_nodes.size() - 1)(rng)];
  std::vector<Node*> nodes;
  collect_nodes(body, nodes);
  Node* target = nodes[std::uniform_int_distribution<std::size_t>(0, nodes.size() - 1)(rng)];
  *target = piece;
  return true;
}

}  // namespace

EncoderDefinition mutate_definition(const EncoderDefinition& def, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr std::array<Mutation, 5> kinds{Mutation::ScaleConstant, Mutation::SwapOp,
                                          Mutation::WrapExpNeg, Mutation::WrapAbs,
                                          Mutation::Graft};
  for (int attempt = 0; attempt < 16; ++attempt) {
    EncoderDefinition out = def;
    const Mutation kind = kinds[std::uniform_int_distribution<std::size_t>(0, kinds.size() - 1)(rng)];
    bool applied = false;
    switch (kind) {
      case Mutation::ScaleConstant: applied = scale_constant(out.body, rng); break;
      case Mutation::SwapOp: applied = swap_op(out.body, rng); break;
      case Mutation::WrapExpNeg: applied = wrap(out.body, rng, true); break;
      case Mutation::WrapAbs: applied = wrap(out.body, rng, false); break;
      case Mutation::Graft: applied = graft(out.body, def.relation, rng); break;
    }
    if (applied && !(out.body == def.body) && !validate_definition(out)) {
      out.metadata = "mutated";
      return out;
    }
  }

  // Fallback: constant scaling, inserting a scale factor when the tree has no constant.
  EncoderDefinition out = def;
  if (!scale_constant(out.body, rng) || validate_definition(out)) {
    out = def;
    double factor = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    if (std::abs(factor - 1.0) < 1e-3) factor = 1.25;
    out.body = apply(Op::Mul, {constant(factor), def.body});
    if (validate_definition(out)) {
      // At the size cap: overwrite a leaf instead of growing the tree.
      out.body = def.body;
      std::vector<Node*> nodes;
      collect_nodes(out.body, nodes);
      for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        if ((*it)->args.empty()) {
          **it = constant(factor);
          break;
        }
      }
    }
  }
  out.metadata = "mutated";
  return out;
}

}  // namespace lasp
