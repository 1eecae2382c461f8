#include <doctest.h>

#include <cmath>

#include "lasp/dsl.hpp"
#include "lasp/encoders.hpp"
#include "lasp/registry.hpp"
#include "lasp/synthetic.hpp"
#include "support.hpp"

using namespace lasp;
using namespace lasp::dsl;
using lasp::testing::box;

namespace {

RelationFeature dsl_feature(Relation r, const Scene& scene) {
  return eval_encoder(encoder_to_dsl(r), scene, precompute_geometry(scene));
}

Node chain(int length) {
  Node n = get(Field::Volume, Obj::I);
  for (int k = 0; k < length; ++k) n = apply(Op::Abs, {n});
  return n;
}

}  // namespace

TEST_CASE("above: stacked unit cubes") {
  // Cube i rests exactly on cube j: bottom_i = top_j = 0.5, centres aligned.
  const Scene scene("s", {box(1, "i", {0, 0, 1.0}), box(2, "j", {0, 0, 0})});
  const auto native = native_feature(Relation::Above, scene, precompute_geometry(scene));
  const auto interp = dsl_feature(Relation::Above, scene);
  CHECK(native.at(0, 1) == 1.0);
  CHECK(interp.at(0, 1) == 1.0);
  CHECK(native.at(0, 0) == 0.0);
  CHECK(native.at(1, 1) == 0.0);
  // The reverse direction: |bottom_j - top_i| = |-0.5 - 1.5| = 2 over h/2 = 0.5.
  CHECK(native.at(1, 0) == doctest::Approx(std::exp(-4.0)).epsilon(1e-5));
  CHECK(dsl_feature(Relation::Below, scene).at(1, 0) == 1.0);
}

TEST_CASE("near: 3-4-5 pair with mean diagonal sqrt(3)") {
  const Scene scene("s", {box(1, "a", {0, 0, 0}), box(2, "b", {3, 4, 0})});
  const double want = std::exp(-5.0 / std::sqrt(3.0));
  const auto f = dsl_feature(Relation::Near, scene);
  CHECK(f.at(0, 1) == doctest::Approx(want).epsilon(1e-6));
  CHECK(f.at(0, 1) == doctest::Approx(0.0557).epsilon(1e-3));
  CHECK(f.at(1, 0) == f.at(0, 1));
  CHECK(dsl_feature(Relation::Far, scene).at(0, 1) == doctest::Approx(1 - want).epsilon(1e-6));
}

TEST_CASE("directional relations from the viewer at the centroid") {
  // Viewer at the centroid (0, 0) looks along +y towards the anchor at (0, 3).
  // Viewer's right is +x.
  const Scene scene("s", {box(1, "anchor", {0, 3, 0.5}), box(2, "r", {1, 3, 0.5}), box(3, "l", {-1, 3, 0.5}),
                          box(4, "front", {0, 1.5, 0.5}), box(5, "back", {0, -8.5, 0.5})});
  const auto g = precompute_geometry(scene);
  const auto right = native_feature(Relation::Right, scene, g);
  const auto left = native_feature(Relation::Left, scene, g);
  const auto front = native_feature(Relation::Front, scene, g);
  const auto behind = native_feature(Relation::Behind, scene, g);
  CHECK(right.at(1, 0) > 0);
  CHECK(right.at(2, 0) == 0);
  CHECK(left.at(2, 0) > 0);
  CHECK(left.at(1, 0) == 0);
  CHECK(front.at(3, 0) > 0);
  CHECK(behind.at(3, 0) == 0);
}

TEST_CASE("between peaks at the midpoint") {
  const Scene scene("s", {box(1, "mid", {0, 0, 0}), box(2, "a", {-2, 0, 0}), box(3, "b", {2, 0, 0}),
                          box(4, "off", {0, 3, 0}), box(5, "outside", {4, 0, 0})});
  const auto f = native_feature(Relation::Between, scene, precompute_geometry(scene));
  CHECK(f.at(0, 1, 2) > f.at(3, 1, 2));
  CHECK(f.at(4, 1, 2) == 0.0);  // projection clamps to the end point: 4p(1-p) = 0
  CHECK(f.at(0, 1, 1) == 0.0);
  CHECK(f.at(0, 1, 2) == f.at(0, 2, 1));
}

TEST_CASE("unary builtins") {
  const Scene scene("s", {box(1, "floor", {1, 1, 0.5}), box(2, "shelf", {4, 4, 2.5}, {2, 2, 1}),
                          box(3, "corner", {0, 0, 0.5})});
  const auto g = precompute_geometry(scene);
  const auto large = native_feature(Relation::Large, scene, g);
  CHECK(large.at(1) == doctest::Approx(1.0).epsilon(1e-5));  // guarded division
  CHECK(large.at(0) == doctest::Approx(1.0 / 4.0));
  CHECK(native_feature(Relation::Small, scene, g).at(0) == doctest::Approx(1.0).epsilon(1e-5));
  const auto high = native_feature(Relation::High, scene, g);
  CHECK(high.at(1) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(high.at(0) == 0.0);
  CHECK(native_feature(Relation::Low, scene, g).at(0) == 1.0);
  const auto floor = native_feature(Relation::OnTheFloor, scene, g);
  CHECK(floor.at(0) == 1.0);
  CHECK(floor.at(1) < 0.1);
  const auto corner = native_feature(Relation::AtTheCorner, scene, g);
  CHECK(corner.at(2) == 1.0);
  CHECK(corner.at(2) > corner.at(0));
  CHECK(native_feature(Relation::AgainstTheWall, scene, g).at(2) == 1.0);
}

TEST_CASE("every builtin exports and matches the native route") {
  std::mt19937_64 rng(50);
  for (int s = 0; s < 50; ++s) {
    const Scene scene = random_scene(rng, 2 + s % 7, "r");
    const auto g = precompute_geometry(scene);
    for (Relation r : all_relations()) {
      const auto def = encoder_to_dsl(r);
      REQUIRE_FALSE(validate_definition(def));
      const auto a = native_feature(r, scene, g);
      const auto b = eval_encoder(def, scene, g);
      REQUIRE(a.data.size() == b.data.size());
      double worst = 0;
      for (std::size_t k = 0; k < a.data.size(); ++k) worst = std::max(worst, std::abs(a.data[k] - b.data[k]));
      CHECK_MESSAGE(worst <= 1e-9, relation_name(r));
    }
  }
}

TEST_CASE("validate_definition") {
  CHECK_FALSE(validate_definition(encoder_to_dsl(Relation::Above)));

  SUBCASE("unary body referencing j") {
    EncoderDefinition def{Relation::Large,
                          apply(Op::Add, {get(Field::Volume, Obj::I), get(Field::Volume, Obj::J)}), ""};
    const auto err = validate_definition(def);
    REQUIRE(err);
    CHECK(err->path.find("args[1]") != std::string::npos);
  }
  SUBCASE("600-node tree") {
    const auto err = validate_definition({Relation::Large, chain(40), ""});
    CHECK_FALSE(err);
    std::vector<Node> leaves(599, constant(1.0));
    const auto big = validate_definition({Relation::Large, apply(Op::Add, leaves), ""});
    REQUIRE(big);
    CHECK(big->message.find("600") != std::string::npos);
  }
  SUBCASE("depth cap") {
    CHECK_FALSE(validate_definition({Relation::Large, chain(63), ""}));
    CHECK(validate_definition({Relation::Large, chain(64), ""}));
  }
  SUBCASE("malformed nodes") {
    CHECK(validate_definition({Relation::Large, constant(NAN), ""}));
    CHECK(validate_definition({Relation::Large, get(Field::Center, Obj::I), ""}));  // missing axis
    CHECK(validate_definition({Relation::Large, apply(Op::Exp, {}), ""}));
    CHECK(validate_definition({Relation::Large, apply(Op::Sub, {constant(1)}), ""}));
  }
}

TEST_CASE("guarded division and sanitised output") {
  CHECK(guarded_div(1, 0) == doctest::Approx(1e6));
  CHECK(guarded_div(1, -1e-7) == doctest::Approx(1 / (-1e-7 - 1e-6)));
  // volume / 0 - 1e9 gives a large negative value, which is clamped to 0.
  EncoderDefinition def{Relation::Large,
                        apply(Op::Sub, {apply(Op::Div, {constant(1), constant(0)}), constant(1e9)}), ""};
  const Scene scene("s", {box(1, "a", {0, 0, 0})});
  const auto f = eval_encoder(def, scene, precompute_geometry(scene));
  CHECK(f.at(0) == 0.0);
  EncoderDefinition huge{Relation::Large, apply(Op::Exp, {constant(1e6)}), ""};
  CHECK(std::isfinite(eval_encoder(huge, scene, precompute_geometry(scene)).at(0)));
}

TEST_CASE("definition JSON") {
  const auto def = encoder_to_dsl(Relation::Between);
  CHECK(definition_from_json(nlohmann::json::parse(definition_to_json(def).dump())) == def);
  const auto leaf = definition_from_json(nlohmann::json::parse(
      R"({"relation":"large","body":{"op":"div","args":[{"get":"volume","obj":"i"},{"agg":"max_volume"}]}})"));
  CHECK(leaf.body == apply(Op::Div, {get(Field::Volume, Obj::I), aggregate(Aggregate::MaxVolume)}));
  try {
    definition_from_json(nlohmann::json::parse(
        R"({"relation":"near","body":{"op":"add","args":[{"const":1},{"get":"center","obj":"q","axis":"x"}]}})"));
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("body.args[1]") != std::string::npos);
  }
  lasp::testing::TempDir dir;
  save_definition(def, dir.path() / "d.json");
  CHECK(load_definition(dir.path() / "d.json") == def);
  CHECK(definition_hash(def) == definition_hash(EncoderDefinition{def.relation, def.body, "other"}));
  CHECK(definition_hash(def) != definition_hash(encoder_to_dsl(Relation::Near)));
}

TEST_CASE("tree helpers") {
  const Node cross = apply(Op::Cross2, {constant(1), constant(2), constant(3), constant(4)});
  const Node expanded = expand_sugar(cross);
  CHECK(expanded.op == Op::Sub);
  const Scene scene("s", {box(1, "a", {0, 0, 0})});
  CHECK(eval_encoder({Relation::Large, cross, ""}, scene, precompute_geometry(scene)).at(0) == 0.0);  // 4 - 6 < 0
  CHECK(eval_encoder({Relation::Large, swap_objects(cross, Obj::I, Obj::J), ""}, scene,
                     precompute_geometry(scene))
            .at(0) == 0.0);
  const Node gj = swap_objects(get(Field::Top, Obj::I), Obj::I, Obj::J);
  CHECK(gj.obj == Obj::J);
}

TEST_CASE("mutate_definition") {
  const auto above = encoder_to_dsl(Relation::Above);
  const auto near = encoder_to_dsl(Relation::Near);
  CHECK(definition_to_json(mutate_definition(near, 1)).dump() != definition_to_json(near).dump());
  CHECK(mutate_definition(near, 42) == mutate_definition(near, 42));
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto m = mutate_definition(above, seed);
    REQUIRE_FALSE(validate_definition(m));
    CHECK(m.relation == Relation::Above);
    CHECK_FALSE(m.body == above.body);
  }
  // Long mutation chains stay valid and within the caps.
  auto cur = encoder_to_dsl(Relation::Between);
  for (std::uint64_t step = 0; step < 300; ++step) {
    cur = mutate_definition(cur, step);
    REQUIRE_FALSE(validate_definition(cur));
  }
  // A bare constant can only be rescaled.
  const EncoderDefinition c{Relation::Large, constant(2.0), ""};
  const auto mc = mutate_definition(c, 3);
  CHECK_FALSE(validate_definition(mc));
  CHECK_FALSE(mc.body == c.body);
}

TEST_CASE("registry") {
  EncoderRegistry reg;
  for (Relation r : all_relations()) {
    CHECK(reg.active(r).relation == r);
    CHECK(reg.active(r).metadata == "builtin");
    CHECK_FALSE(reg.latest_accepted(r));
  }
  auto def = mutate_definition(encoder_to_dsl(Relation::Near), 9);
  def.metadata = "mutated-gen2";
  reg.install(def);
  CHECK(reg.active(Relation::Near) == def);
  REQUIRE(reg.latest_accepted(Relation::Near));
  CHECK(*reg.latest_accepted(Relation::Near) == def);
  CHECK(reg.library().size() == 1);

  EncoderDefinition bad{Relation::Large, get(Field::Volume, Obj::J), ""};
  CHECK_THROWS_AS(reg.install(bad), ValidationError);
  CHECK(reg.library().size() == 1);

  lasp::testing::TempDir dir;
  reg.save(dir.path() / "reg.json");
  const auto back = EncoderRegistry::load(dir.path() / "reg.json");
  CHECK(back.active(Relation::Near) == def);
  CHECK(back.active(Relation::Far) == reg.active(Relation::Far));
  CHECK(back.library() == reg.library());
}
