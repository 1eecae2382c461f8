#include <doctest.h>

#include <cmath>
#include <cstring>

#include "lasp/scene.hpp"
#include "support.hpp"

using namespace lasp;
using namespace lasp::testing;

TEST_CASE("load_scene keeps file order and indexes ids") {
  TempDir dir;
  const auto path = dir.write("s.json", R"({"scene_id":"s","objects":[
      {"id":3,"label":"chair","bbox":[0,0,0.5,1,1,1]},
      {"id":7,"label":"table","bbox":[2,0,0.5,1,1,1]}]})");
  const Scene scene = load_scene(path);
  CHECK(scene.size() == 2);
  CHECK(scene.index_of(3) == 0);
  CHECK(scene.index_of(7) == 1);
  CHECK(scene[1].label == "table");
  CHECK_THROWS_AS(scene.index_of(4), ValidationError);
}

TEST_CASE("scene validation names the offending object") {
  SUBCASE("zero size") {
    try {
      Scene("s", {box(1, "a", {0, 0, 0}), box(9, "b", {0, 0, 0}, {1, 0.0, 1})});
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("object 9") != std::string::npos);
    }
  }
  SUBCASE("duplicate id") {
    try {
      Scene("s", {box(5, "a", {0, 0, 0}), box(5, "b", {1, 0, 0})});
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("duplicate id 5") != std::string::npos);
    }
  }
  SUBCASE("non-finite value") {
    CHECK_THROWS_AS(Scene("s", {box(1, "a", {NAN, 0, 0})}), ValidationError);
    CHECK_THROWS_AS(Scene("s", {box(1, "a", {0, 0, 0}, {INFINITY, 1, 1})}), ValidationError);
  }
  SUBCASE("empty scene and empty label") {
    CHECK_THROWS_AS(Scene("s", {}), ValidationError);
    CHECK_THROWS_AS(Scene("s", {box(1, "", {0, 0, 0})}), ValidationError);
  }
}

TEST_CASE("scene file errors carry field context") {
  TempDir dir;
  try {
    load_scene(dir.write("bad.json", R"({"scene_id":"s","objects":[{"id":1,"label":"a","bbox":[0,0,0,1,1]}]})"));
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("objects[0].bbox") != std::string::npos);
  }
  CHECK_THROWS_AS(load_scene(dir.write("broken.json", "{\"scene_id\": ")), ValidationError);
  CHECK_THROWS_AS(load_scene(dir.path() / "missing.json"), ValidationError);
}

TEST_CASE("scene JSON round trip is exact") {
  TempDir dir;
  const Scene scene("rt", {box(1, "chair", {0.1, 1.0 / 3.0, 2e-17}, {0.3, 1e10, 0.7}),
                           box(42, "lamp", {-5.5, 6.25, 1.125})});
  save_scene(scene, dir.path() / "rt.json");
  const Scene back = load_scene(dir.path() / "rt.json");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].id == scene[i].id);
    CHECK(std::memcmp(&back[i].bbox, &scene[i].bbox, sizeof(BoundingBox)) == 0);
  }
  CHECK(back.fingerprint() == scene.fingerprint());
}

TEST_CASE("embedded similarity table is used and validated") {
  const auto doc = nlohmann::json::parse(R"({"scene_id":"s","objects":[
      {"id":1,"label":"a","bbox":[0,0,0,1,1,1]},{"id":2,"label":"b","bbox":[1,0,0,1,1,1]}],
      "similarities":{"categories":["seat"],"values":[[0.8],[0.1]]}})");
  const Scene scene = scene_from_json(doc);
  REQUIRE(scene.similarities());
  const auto col = scene.similarities()->column("Seat");
  REQUIRE(col);
  CHECK((*col)[0] == 0.8);
  auto bad = doc;
  bad["similarities"]["values"][0][0] = 1.5;
  CHECK_THROWS_AS(scene_from_json(bad), ValidationError);
}

TEST_CASE("exact_match_similarity") {
  CHECK(exact_match_similarity(Scene("s", {box(1, "Chair", {0, 0, 0}), box(2, "table", {1, 0, 0})}),
                               {"chair"})
            .values == std::vector<std::vector<double>>{{1.0}, {0.0}});
  CHECK(exact_match_similarity(Scene("s", {box(1, "chair", {0, 0, 0}), box(2, "chair", {1, 0, 0})}),
                               {"chair"})
            .values == std::vector<std::vector<double>>{{1.0}, {1.0}});
  CHECK(exact_match_similarity(Scene("s", {box(1, "sofa", {0, 0, 0})}), {"couch"}).values ==
        std::vector<std::vector<double>>{{0.0}});
  CHECK(normalize_label("  Coffee   TABLE ") == "coffee table");
}

TEST_CASE("precompute_geometry") {
  SUBCASE("3-4-5 triangle") {
    const auto g = precompute_geometry(Scene("s", {box(1, "a", {0, 0, 0}), box(2, "b", {3, 4, 0})}));
    CHECK(g.distance(0, 1) == 5.0);
    CHECK(g.distance(1, 0) == 5.0);
    CHECK(g.distance(0, 0) == 0.0);
    CHECK(g.mean_diagonal == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
  }
  SUBCASE("single object") {
    const auto g = precompute_geometry(Scene("s", {box(1, "a", {1, 2, 3})}));
    CHECK(g.dist == std::vector<double>{0.0});
  }
  SUBCASE("floor and hull come from box extents") {
    const auto g = precompute_geometry(Scene("s", {box(1, "a", {0, 0, 0.5}), box(2, "b", {4, -2, 2.5})}));
    CHECK(g.floor_z == 0.0);
    CHECK(g.hull_min[0] == -0.5);
    CHECK(g.hull_max[0] == 4.5);
    CHECK(g.hull_min[1] == -2.5);
    CHECK(g.hull_max[1] == 0.5);
  }
  SUBCASE("dist matches delta and is symmetric on random scenes") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
      std::vector<SceneObject> objs;
      std::uniform_real_distribution<double> u(-10, 10);
      for (std::uint64_t k = 0; k < 6; ++k) objs.push_back(box(k, "x", {u(rng), u(rng), u(rng)}));
      const Scene scene("r", objs);
      const auto g = precompute_geometry(scene);
      const auto g2 = precompute_geometry(scene);
      CHECK(g.dist == g2.dist);
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
          const auto& d = g.delta[i * 6 + j];
          const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
          CHECK(g.distance(i, j) == g.distance(j, i));
          CHECK(std::abs(g.distance(i, j) - norm) <= 1e-12 * std::max(1.0, norm));
        }
    }
  }
}

TEST_CASE("load_scene_dir keys scenes by id") {
  TempDir dir;
  save_scene(Scene("b", {box(1, "a", {0, 0, 0})}), dir.path() / "x.json");
  save_scene(Scene("a", {box(1, "a", {0, 0, 0})}), dir.path() / "y.json");
  const auto scenes = load_scene_dir(dir.path());
  CHECK(scenes.size() == 2);
  CHECK(scenes.count("a") == 1);
  CHECK_THROWS_AS(load_scene_dir(dir.path() / "nope"), ValidationError);
}
