#include "lasp/encoders.hpp"

#include <algorithm>
#include <cmath>

namespace lasp {

namespace {

double bexp(double x) { return std::exp(std::min(x, 700.0)); }
double relu(double x) { return std::max(x, 0.0); }
double sanitize(double v) { return (std::isfinite(v) && v > 0) ? v : 0.0; }

constexpr double kHighEps = 1e-6;

// ---- native formulas, one scalar entry at a time ----

struct Native {
  const Scene& scene;
  const PairGeometry& g;

  const BoundingBox& box(std::size_t i) const { return scene[i].bbox; }

  double near(std::size_t i, std::size_t j) const {
    return bexp(-guarded_div(g.distance(i, j), g.mean_diagonal));
  }

  double above(std::size_t i, std::size_t j) const {
    const auto& a = box(i);
    const auto& b = box(j);
    const double vertical = bexp(-guarded_div(std::abs(a.bottom() - b.top()), 0.5 * a.size[2]));
    const double horizontal =
        bexp(-guarded_div(std::abs(a.center[0] - b.center[0]), 0.5 * (a.size[0] + b.size[0])) -
             guarded_div(std::abs(a.center[1] - b.center[1]), 0.5 * (a.size[1] + b.size[1])));
    return vertical * horizontal;
  }

  // Signed offsets of i relative to anchor j, seen from the centroid facing j.
  double lateral(std::size_t i, std::size_t j) const {
    const double ax = box(i).center[0] - g.centroid[0];
    const double ay = box(i).center[1] - g.centroid[1];
    const double bx = box(j).center[0] - g.centroid[0];
    const double by = box(j).center[1] - g.centroid[1];
    return guarded_div(ax * by - ay * bx, std::sqrt(bx * bx + by * by));
  }
  double depthwise(std::size_t i, std::size_t j) const {
    const double dx = box(i).center[0] - box(j).center[0];
    const double dy = box(i).center[1] - box(j).center[1];
    const double bx = box(j).center[0] - g.centroid[0];
    const double by = box(j).center[1] - g.centroid[1];
    return dx * bx + dy * by;
  }
  double anchor_norm(std::size_t j) const {
    const double bx = box(j).center[0] - g.centroid[0];
    const double by = box(j).center[1] - g.centroid[1];
    return std::sqrt(bx * bx + by * by);
  }

  double between(std::size_t i, std::size_t j, std::size_t k) const {
    const auto& ci = box(i).center;
    const auto& cj = box(j).center;
    const auto& ck = box(k).center;
    double d2 = 0, de = 0, e2 = 0;
    for (int a = 0; a < 3; ++a) {
      const double d = ci[a] - cj[a];
      const double e = ck[a] - cj[a];
      d2 = a == 0 ? d * d : d2 + d * d;
      de = a == 0 ? d * e : de + d * e;
      e2 = a == 0 ? e * e : e2 + e * e;
    }
    const double p = std::clamp(guarded_div(de, e2), 0.0, 1.0);
    const double r2 = (d2 + p * p * e2) - 2 * p * de;
    const double r = std::sqrt(std::max(r2, 0.0));
    return bexp(-guarded_div(r, g.mean_diagonal)) * 4 * p * (1 - p);
  }

  std::array<double, 4> wall_gaps(std::size_t i) const {
    const auto& b = box(i);
    return {(b.center[0] - 0.5 * b.size[0]) - g.hull_min[0],
            g.hull_max[0] - (b.center[0] + 0.5 * b.size[0]),
            (b.center[1] - 0.5 * b.size[1]) - g.hull_min[1],
            g.hull_max[1] - (b.center[1] + 0.5 * b.size[1])};
  }

  double unary(Relation r, std::size_t i) const {
    const auto& b = box(i);
    const double quarter_diag = 0.25 * g.mean_diagonal;
    switch (r) {
      case Relation::Large: return guarded_div(b.volume(), g.max_volume);
      case Relation::Small: return guarded_div(g.min_volume, b.volume());
      case Relation::High:
      case Relation::Low: {
        const double high = guarded_div(b.center[2] - g.min_center_z,
                                        (g.max_center_z - g.min_center_z) + kHighEps);
        return r == Relation::High ? high : 1 - high;
      }
      case Relation::OnTheFloor: return bexp(-guarded_div(b.bottom() - g.floor_z, quarter_diag));
      case Relation::AgainstTheWall: {
        const auto gap = wall_gaps(i);
        const double m = std::min(std::min(std::min(gap[0], gap[1]), gap[2]), gap[3]);
        return bexp(-guarded_div(m, quarter_diag));
      }
      case Relation::AtTheCorner: {
        const auto gap = wall_gaps(i);
        return bexp(-guarded_div(std::min(gap[0], gap[1]) + std::min(gap[2], gap[3]), quarter_diag));
      }
      default: return 0;
    }
  }

  double binary(Relation r, std::size_t i, std::size_t j) const {
    switch (r) {
      case Relation::Near: return near(i, j);
      case Relation::Far: return 1 - near(i, j);
      case Relation::Above: return above(i, j);
      case Relation::Below: return above(j, i);
      case Relation::Right: return relu(lateral(i, j)) * near(i, j);
      case Relation::Left: return relu(-lateral(i, j)) * near(i, j);
      case Relation::Front: return relu(guarded_div(-depthwise(i, j), anchor_norm(j))) * near(i, j);
      case Relation::Behind: return relu(guarded_div(depthwise(i, j), anchor_norm(j))) * near(i, j);
      default: return 0;
    }
  }
};

// ---- DSL builders ----

using dsl::Aggregate;
using dsl::Field;
using dsl::Node;
using dsl::Obj;
using dsl::Op;

constexpr int X = 0, Y = 1, Z = 2;

Node C(double v) { return dsl::constant(v); }
Node center(Obj o, int axis) { return dsl::get(Field::Center, o, axis); }
Node size(Obj o, int axis) { return dsl::get(Field::Size, o, axis); }
Node bottom(Obj o) { return dsl::get(Field::Bottom, o); }
Node top(Obj o) { return dsl::get(Field::Top, o); }
Node volume(Obj o) { return dsl::get(Field::Volume, o); }
Node agg(Aggregate a, int axis = -1) { return dsl::aggregate(a, axis); }

Node add(std::vector<Node> a) { return dsl::apply(Op::Add, std::move(a)); }
Node mul(std::vector<Node> a) { return dsl::apply(Op::Mul, std::move(a)); }
Node min(std::vector<Node> a) { return dsl::apply(Op::Min, std::move(a)); }
Node sub(Node a, Node b) { return dsl::apply(Op::Sub, {std::move(a), std::move(b)}); }
Node div(Node a, Node b) { return dsl::apply(Op::Div, {std::move(a), std::move(b)}); }
Node un(Op op, Node a) { return dsl::apply(op, {std::move(a)}); }
Node exp_neg(Node a) { return un(Op::Exp, un(Op::Neg, std::move(a))); }

Node diff(Obj a, Obj b, int axis) { return sub(center(a, axis), center(b, axis)); }
Node sq(const Node& a) { return mul({a, a}); }
Node rel_centroid(Obj o, int axis) { return sub(center(o, axis), agg(Aggregate::Centroid, axis)); }

Node near_body(Obj a = Obj::I, Obj b = Obj::J) {
  Node dist = un(Op::Sqrt, add({sq(diff(a, b, X)), sq(diff(a, b, Y)), sq(diff(a, b, Z))}));
  return exp_neg(div(std::move(dist), agg(Aggregate::MeanDiagonal)));
}

Node above_body() {
  Node vertical = exp_neg(div(un(Op::Abs, sub(bottom(Obj::I), top(Obj::J))),
                              mul({C(0.5), size(Obj::I, Z)})));
  Node half_w = mul({C(0.5), add({size(Obj::I, X), size(Obj::J, X)})});
  Node half_d = mul({C(0.5), add({size(Obj::I, Y), size(Obj::J, Y)})});
  Node horizontal = un(Op::Exp, sub(un(Op::Neg, div(un(Op::Abs, diff(Obj::I, Obj::J, X)), half_w)),
                                    div(un(Op::Abs, diff(Obj::I, Obj::J, Y)), half_d)));
  return mul({std::move(vertical), std::move(horizontal)});
}

Node anchor_norm_body() {
  return un(Op::Sqrt, add({sq(rel_centroid(Obj::J, X)), sq(rel_centroid(Obj::J, Y))}));
}

Node lateral_body() {
  Node cross = dsl::apply(Op::Cross2, {rel_centroid(Obj::I, X), rel_centroid(Obj::I, Y),
                                       rel_centroid(Obj::J, X), rel_centroid(Obj::J, Y)});
  return div(std::move(cross), anchor_norm_body());
}

Node depthwise_body() {
  return dsl::apply(Op::Dot2, {diff(Obj::I, Obj::J, X), diff(Obj::I, Obj::J, Y),
                               rel_centroid(Obj::J, X), rel_centroid(Obj::J, Y)});
}

Node between_body() {
  auto d = [](int axis) { return diff(Obj::I, Obj::J, axis); };
  auto e = [](int axis) { return diff(Obj::K, Obj::J, axis); };
  Node d2 = add({sq(d(X)), sq(d(Y)), sq(d(Z))});
  Node de = add({mul({d(X), e(X)}), mul({d(Y), e(Y)}), mul({d(Z), e(Z)})});
  Node e2 = add({sq(e(X)), sq(e(Y)), sq(e(Z))});
  Node p = un(Op::Clamp01, div(de, e2));
  Node r2 = sub(add({d2, mul({p, p, e2})}), mul({C(2), p, de}));
  Node proximity = exp_neg(div(un(Op::Sqrt, std::move(r2)), agg(Aggregate::MeanDiagonal)));
  return mul({std::move(proximity), C(4), p, sub(C(1), p)});
}

std::vector<Node> wall_gap_nodes() {
  return {sub(sub(center(Obj::I, X), mul({C(0.5), size(Obj::I, X)})), agg(Aggregate::HullMin, X)),
          sub(agg(Aggregate::HullMax, X), add({center(Obj::I, X), mul({C(0.5), size(Obj::I, X)})})),
          sub(sub(center(Obj::I, Y), mul({C(0.5), size(Obj::I, Y)})), agg(Aggregate::HullMin, Y)),
          sub(agg(Aggregate::HullMax, Y), add({center(Obj::I, Y), mul({C(0.5), size(Obj::I, Y)})}))};
}

Node quarter_diag() { return mul({C(0.25), agg(Aggregate::MeanDiagonal)}); }

Node high_body() {
  return div(sub(center(Obj::I, Z), agg(Aggregate::MinCenterZ)),
             add({sub(agg(Aggregate::MaxCenterZ), agg(Aggregate::MinCenterZ)), C(kHighEps)}));
}

Node builtin_body(Relation r) {
  switch (r) {
    case Relation::Large: return div(volume(Obj::I), agg(Aggregate::MaxVolume));
    case Relation::Small: return div(agg(Aggregate::MinVolume), volume(Obj::I));
    case Relation::High: return high_body();
    case Relation::Low: return sub(C(1), high_body());
    case Relation::OnTheFloor:
      return exp_neg(div(sub(bottom(Obj::I), agg(Aggregate::FloorZ)), quarter_diag()));
    case Relation::AgainstTheWall:
      return exp_neg(div(min(wall_gap_nodes()), quarter_diag()));
    case Relation::AtTheCorner: {
      auto gaps = wall_gap_nodes();
      return exp_neg(div(add({min({gaps[0], gaps[1]}), min({gaps[2], gaps[3]})}), quarter_diag()));
    }
    case Relation::Near: return near_body();
    case Relation::Far: return sub(C(1), near_body());
    case Relation::Above: return above_body();
    case Relation::Below: return dsl::swap_objects(above_body(), Obj::I, Obj::J);
    case Relation::Right: return mul({un(Op::Relu, lateral_body()), near_body()});
    case Relation::Left: return mul({un(Op::Relu, un(Op::Neg, lateral_body())), near_body()});
    case Relation::Front:
      return mul({un(Op::Relu, div(un(Op::Neg, depthwise_body()), anchor_norm_body())), near_body()});
    case Relation::Behind:
      return mul({un(Op::Relu, div(depthwise_body(), anchor_norm_body())), near_body()});
    case Relation::Between: return between_body();
  }
  return C(0);
}

}  // namespace

RelationFeature native_feature(Relation relation, const Scene& scene, const PairGeometry& geom) {
  const Native nat{scene, geom};
  RelationFeature f;
  f.relation = relation;
  f.rank = arity(relation);
  f.n = scene.size();
  const std::size_t n = f.n;
  if (f.rank == 1) {
    f.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) f.data[i] = sanitize(nat.unary(relation, i));
  } else if (f.rank == 2) {
    f.data.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) f.data[i * n + j] = sanitize(nat.binary(relation, i, j));
      }
    }
  } else {
    f.data.assign(n * n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) {
          if (i != j && j != k && i != k) f.data[(i * n + j) * n + k] = sanitize(nat.between(i, j, k));
        }
      }
    }
  }
  return f;
}

EncoderDefinition encoder_to_dsl(Relation relation) {
  return EncoderDefinition{relation, builtin_body(relation), "builtin"};
}

}  // namespace lasp
