#include <doctest.h>

#include <cmath>
#include <thread>

#include "lasp/executor.hpp"
#include "lasp/synthetic.hpp"
#include "support.hpp"

using namespace lasp;
using namespace lasp::testing;

namespace {

// Chair 1 sits next to the table, chair 2 is across the room.
Scene chairs_and_table() {
  return Scene("room", {box(1, "chair", {1, 0, 0.5}), box(2, "chair", {5, 0, 0.5}),
                        box(3, "table", {2, 0, 0.5})});
}

const SymbolicExpression kNearTable{"chair", {RelationClause{Relation::Near, {{"table", {}}}, false}}};

}  // namespace

TEST_CASE("stable_softmax") {
  const std::vector<double> same{0.5, 0.5, 0.5};
  for (double v : stable_softmax(same, 100)) CHECK(v == doctest::Approx(1.0 / 3.0));

  const std::vector<double> hard{1.0, 0.0};
  const auto p = stable_softmax(hard, 100);
  CHECK(p[1] == doctest::Approx(std::exp(-100.0) / (1 + std::exp(-100.0))).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(3.72e-44).epsilon(1e-2));

  const std::vector<double> close{0.6, 0.55};
  CHECK(stable_softmax(close, 100)[0] == doctest::Approx(1 / (1 + std::exp(-5.0))).epsilon(1e-12));
  CHECK(stable_softmax(close, 100)[0] == doctest::Approx(0.99331).epsilon(1e-5));

  // Large inputs do not overflow.
  const std::vector<double> big{1e6, 1e6 - 1};
  const auto q = stable_softmax(big);
  CHECK(q[0] == doctest::Approx(1 / (1 + std::exp(-1.0))));
  CHECK(stable_softmax(std::vector<double>{}).empty());
}

TEST_CASE("category feature") {
  const Scene scene = chairs_and_table();
  const std::vector<double> sim{1, 1, 0};
  const auto f = compute_category_feature(scene, sim, "chair");
  CHECK(f.data == brute_category(scene, "chair"));
  const std::vector<double> short_sim{1};
  CHECK_THROWS_AS(compute_category_feature(scene, short_sim), ValidationError);
}

TEST_CASE("chair near the table") {
  const Scene scene = chairs_and_table();
  FeatureCache cache(scene, EncoderRegistry());
  const auto s = execute(kNearTable, scene, cache);
  CHECK(scene[s.argmax()].id == 1);
  const auto oracle = brute_scores(kNearTable, scene);
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.data[i] == doctest::Approx(oracle[i]).epsilon(1e-12));

  auto negated = kNearTable;
  negated.relations[0].negative = true;
  CHECK(scene[execute(negated, scene, cache).argmax()].id == 2);
}

TEST_CASE("no relations gives the category feature") {
  const Scene scene = chairs_and_table();
  FeatureCache cache(scene, EncoderRegistry());
  const auto s = execute(SymbolicExpression{"table", {}}, scene, cache);
  CHECK(s.data == cache.category("table")->data);
  CHECK(scene[s.argmax()].id == 3);
}

TEST_CASE("trace records each root step") {
  const Scene scene = chairs_and_table();
  FeatureCache cache(scene, EncoderRegistry());
  SymbolicExpression e{"chair",
                       {RelationClause{Relation::Near, {{"table", {}}}, false},
                        RelationClause{Relation::OnTheFloor, {}, true}}};
  ExecutionTrace trace;
  const auto s = execute(e, scene, cache, &trace);
  REQUIRE(trace.steps.size() == 3);
  CHECK(trace.steps[0].first == "category:chair");
  CHECK(trace.steps[1].first == "near");
  CHECK(trace.steps[2].first == "not_on_the_floor");
  CHECK(trace.steps[2].second == s.data);
}

TEST_CASE("conjunction never raises a score") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const Scene scene = random_scene(rng, 6, "s");
    FeatureCache cache(scene, EncoderRegistry());
    auto e = random_expression(rng, 2);
    const auto before = execute(e, scene, cache).data;
    e.relations.push_back(RelationClause{Relation::Large, {}, rng() % 2 == 0});
    const auto after = execute(e, scene, cache).data;
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] <= before[i]);
  }
}

TEST_CASE("matching score argsort is stable and descending") {
  const auto s = make_matching_score({0.2, 0.5, 0.2, 0.9});
  CHECK(s.argsort == std::vector<std::size_t>{3, 1, 0, 2});
  CHECK(s.argmax() == 3);
}

TEST_CASE("rank_candidates") {
  const Scene scene("s", {box(10, "a", {0, 0, 0}), box(11, "a", {2, 0, 0}), box(12, "a", {4, 0, 0})});
  CHECK(rank_candidates(make_matching_score({0.9, 0.1, 0.05}), scene, 5, 0.9) ==
        std::vector<std::uint64_t>{10});
  CHECK(rank_candidates(make_matching_score({1.0 / 3, 1.0 / 3, 1.0 / 3}), scene, 5, 0.9) ==
        std::vector<std::uint64_t>{10, 11, 12});
  CHECK(rank_candidates(make_matching_score({0.3, 0.4, 0.3}), scene, 1, 0.0) ==
        std::vector<std::uint64_t>{11});
  CHECK_THROWS_AS(rank_candidates(make_matching_score({0.3, 0.4, 0.3}), scene, 0, 0.9), ValidationError);
  // The argmax survives any threshold.
  CHECK(rank_candidates(make_matching_score({0.5, 0.4, 0.3}), scene, 3, 2.0) ==
        std::vector<std::uint64_t>{10});
}

TEST_CASE("feature cache") {
  const Scene scene = chairs_and_table();
  FeatureCache cache(scene, EncoderRegistry());

  SUBCASE("rejects a different scene") {
    const Scene other("other", {box(1, "chair", {0, 0, 0})});
    CHECK_THROWS_AS(execute(kNearTable, other, cache), ValidationError);
  }
  SUBCASE("concurrent requests share one feature") {
    std::vector<std::shared_ptr<const RelationFeature>> got(8);
    std::vector<std::shared_ptr<const CategoryFeature>> cats(8);
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        got[t] = cache.relation(Relation::Between);
        cats[t] = cache.category("chair");
      });
    }
    for (auto& th : threads) th.join();
    for (int t = 1; t < 8; ++t) {
      CHECK(got[t].get() == got[0].get());
      CHECK(cats[t].get() == cats[0].get());
    }
  }
  SUBCASE("unknown category warns and is uniform") {
    CHECK(cache.warnings().empty());
    const auto f = cache.category("piano");
    for (double v : f->data) CHECK(v == doctest::Approx(1.0 / 3.0));
    REQUIRE(cache.warnings().size() == 1);
    CHECK(cache.warnings()[0].find("piano") != std::string::npos);
    cache.category("piano");
    CHECK(cache.warnings().size() == 1);
  }
  SUBCASE("registry snapshot is taken at construction") {
    EncoderRegistry reg;
    FeatureCache snap(scene, reg);
    const auto before = snap.relation(Relation::Near)->data;
    reg.install(perturbed_near(0.0));
    CHECK(snap.relation(Relation::Near)->data == before);
  }
}

TEST_CASE("condition_level_eval") {
  const Scene scene = chairs_and_table();
  EncoderRegistry reg;

  SUBCASE("perfect") {
    const auto m = condition_level_eval({{&scene, kNearTable, 1}}, reg);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.conditions == 1);
    CHECK(m.warnings.empty());
  }
  SUBCASE("one hit and one miss") {
    // Both predict chair 1. Chair 1: precision 1/2, recall 1. Chair 2: never
    // predicted, recall 0.
    const auto m = condition_level_eval({{&scene, kNearTable, 1}, {&scene, kNearTable, 2}}, reg);
    CHECK(m.precision == doctest::Approx(0.5));
    CHECK(m.recall == doctest::Approx(0.5));
  }
  SUBCASE("empty") {
    const auto m = condition_level_eval({{&scene, SymbolicExpression{"chair", {}}, 1}}, reg);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.conditions == 0);
    CHECK(m.warnings.size() == 1);
  }
  SUBCASE("unknown ground truth") {
    CHECK_THROWS_AS(condition_level_eval({{&scene, kNearTable, 99}}, reg), ValidationError);
  }
}
