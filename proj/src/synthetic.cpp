#include "lasp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>

#include <fmt/format.h>

#include "lasp/encoders.hpp"
#include "lasp/executor.hpp"

namespace lasp {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

const std::vector<std::string> kLabels = {"chair", "table", "lamp", "box", "shelf", "plant"};

}  // namespace

Scene random_scene(std::mt19937_64& rng, std::size_t n_objects, std::string scene_id) {
  std::vector<SceneObject> objects;
  for (std::size_t k = 0; k < n_objects; ++k) {
    SceneObject obj;
    obj.id = k + 1;
    obj.label = kLabels[pick(rng, kLabels.size())];
    const Vec3 size{uniform(rng, 0.3, 1.5), uniform(rng, 0.3, 1.5), uniform(rng, 0.3, 1.5)};
    double x = uniform(rng, 0, 6), y = uniform(rng, 0, 6), bottom = 0;
    const double mode = uniform(rng, 0, 1);
    if (mode > 0.75 && !objects.empty()) {
      const auto& support = objects[pick(rng, objects.size())].bbox;
      x = support.center[0] + uniform(rng, -0.2, 0.2);
      y = support.center[1] + uniform(rng, -0.2, 0.2);
      bottom = support.top();
    } else if (mode > 0.5) {
      bottom = uniform(rng, 0.5, 2.0);
    }
    obj.bbox = {{x, y, bottom + size[2] / 2}, size};
    objects.push_back(std::move(obj));
  }
  return Scene(std::move(scene_id), std::move(objects));
}

TestSuite make_synthetic_suite(const SuiteSpec& spec, const EncoderDefinition& labeler) {
  if (labeler.relation != spec.relation) {
    throw ValidationError(fmt::format("labeler encodes {}, suite wants {}",
                                      relation_name(labeler.relation), relation_name(spec.relation)));
  }
  const int rank = arity(spec.relation);
  if (spec.n_objects < static_cast<std::size_t>(rank) + 1 || spec.n_scenes == 0) {
    throw ValidationError("suite scenes are too small for the relation");
  }
  std::mt19937_64 rng(spec.seed);
  TestSuite suite;
  suite.relation = spec.relation;
  std::vector<std::pair<const Scene*, RelationFeature>> pool;
  for (std::size_t s = 0; s < spec.n_scenes; ++s) {
    auto scene = random_scene(rng, spec.n_objects, fmt::format("{}_{:02}", relation_name(spec.relation), s));
    const std::string id = scene.id();
    suite.scenes.emplace(id, std::move(scene));
  }
  // Deterministic scene order regardless of hash-map layout.
  std::vector<std::string> ids;
  for (const auto& [id, _] : suite.scenes) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) {
    const Scene& scene = suite.scenes.at(id);
    pool.emplace_back(&scene, eval_encoder(labeler, scene, precompute_geometry(scene)));
  }

  const std::size_t n = spec.n_objects;
  const std::size_t max_attempts = spec.n_cases * 500;
  for (std::size_t attempt = 0; attempt < max_attempts && suite.cases.size() < spec.n_cases; ++attempt) {
    const auto& [scene, f] = pool[attempt % pool.size()];
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < n; ++k) order[k] = k;
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t t = order[0], d = order[1];
    double ft = 0, fd = 0;
    TestCase tc{spec.relation, scene->id(), (*scene)[t].id, (*scene)[d].id, std::nullopt, std::nullopt};
    if (rank == 1) {
      ft = f.at(t);
      fd = f.at(d);
    } else if (rank == 2) {
      const std::size_t a = order[2];
      ft = f.at(t, a);
      fd = f.at(d, a);
      tc.anchor = (*scene)[a].id;
    } else {
      const std::size_t a = order[2], b = order[3];
      ft = f.at(t, a, b);
      fd = f.at(d, a, b);
      tc.anchor = (*scene)[a].id;
      tc.anchor2 = (*scene)[b].id;
    }
    if (ft > 1e-3 && ft > (1 + spec.margin) * fd) suite.cases.push_back(tc);
  }
  if (suite.cases.size() < spec.n_cases) {
    throw std::runtime_error(fmt::format("could only find {} of {} separable cases for {}",
                                         suite.cases.size(), spec.n_cases,
                                         relation_name(spec.relation)));
  }
  return suite;
}

const Scene& Dataset::scene(const std::string& id) const {
  for (const auto& s : scenes) {
    if (s.id() == id) return s;
  }
  throw ValidationError("dataset has no scene " + id);
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "scenes");
  for (const auto& scene : data.scenes) save_scene(scene, dir / "scenes" / (scene.id() + ".json"));
  std::ofstream out(dir / "expressions.jsonl");
  if (!out) throw std::runtime_error("cannot write " + (dir / "expressions.jsonl").string());
  for (const auto& item : data.items) {
    nlohmann::ordered_json line;
    line["scene_id"] = item.scene_id;
    line["utterance"] = item.utterance;
    line["expression"] = expression_to_json(item.expression);
    line["target"] = item.target;
    out << line.dump() << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  auto scenes = load_scene_dir(dir / "scenes");
  std::vector<std::string> ids;
  for (const auto& [id, _] : scenes) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids) data.scenes.push_back(scenes.at(id));

  std::ifstream in(dir / "expressions.jsonl");
  if (!in) throw ValidationError("cannot read " + (dir / "expressions.jsonl").string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(fmt::format("expressions.jsonl:{}: {}", lineno, e.what()));
    }
    try {
      BenchItem item;
      item.scene_id = doc.at("scene_id").get<std::string>();
      item.utterance = doc.value("utterance", std::string{});
      item.expression = expression_from_json(doc.at("expression"));
      item.target = doc.at("target").get<std::uint64_t>();
      if (!data.scene(item.scene_id).contains(item.target)) {
        throw ValidationError(fmt::format("target {} not in scene {}", item.target, item.scene_id));
      }
      data.items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("expressions.jsonl:{}: {}", lineno, e.what()));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("expressions.jsonl:{}: {}", lineno, e.what()));
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Mini benchmark

namespace {

constexpr double kRoom = 8.0;

struct Builder {
  std::mt19937_64& rng;
  std::vector<SceneObject> objects;
  std::size_t target = 0;

  explicit Builder(std::mt19937_64& r) : rng(r) {
    add("wall", kRoom / 2, 0, {kRoom, 0.1, 2.5});
    add("wall", kRoom / 2, kRoom, {kRoom, 0.1, 2.5});
    add("wall", 0, kRoom / 2, {0.1, kRoom, 2.5});
    add("wall", kRoom, kRoom / 2, {0.1, kRoom, 2.5});
  }

  std::size_t add(const std::string& label, double x, double y, Vec3 size, double bottom = 0) {
    SceneObject obj;
    obj.label = label;
    obj.bbox = {{x, y, bottom + size[2] / 2}, size};
    objects.push_back(std::move(obj));
    return objects.size() - 1;
  }

  std::size_t add_target(const std::string& label, double x, double y, Vec3 size, double bottom = 0) {
    target = add(label, x, y, size, bottom);
    return target;
  }

  // Shuffles positions so the target's index carries no information.
  std::pair<Scene, std::uint64_t> finish(const std::string& scene_id) {
    std::vector<std::size_t> perm(objects.size());
    for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<SceneObject> out;
    std::uint64_t target_id = 0;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      out.push_back(objects[perm[k]]);
      out.back().id = k + 1;
      if (perm[k] == target) target_id = k + 1;
    }
    return {Scene(scene_id, std::move(out)), target_id};
  }
};

struct Draft {
  std::vector<SceneObject> objects;
  std::size_t target = 0;
  SymbolicExpression expression;
  std::string utterance;
};

Vec3 small_size(std::mt19937_64& rng) {
  const double s = uniform(rng, 0.4, 0.6);
  return {s, s, uniform(rng, 0.4, 0.7)};
}

bool inside(double x, double y, double pad = 0.6) {
  return x > pad && x < kRoom - pad && y > pad && y < kRoom - pad;
}

// Rejection-samples a point in the room satisfying the predicate.
std::pair<double, double> sample_point(std::mt19937_64& rng,
                                       const std::function<bool(double, double)>& ok) {
  for (int attempt = 0; attempt < 2000; ++attempt) {
    const double x = uniform(rng, 0.6, kRoom - 0.6), y = uniform(rng, 0.6, kRoom - 0.6);
    if (ok(x, y)) return {x, y};
  }
  throw std::runtime_error("placement failed");
}

double dist2d(double ax, double ay, double bx, double by) { return std::hypot(ax - bx, ay - by); }

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double ex = bx - ax, ey = by - ay;
  const double t = std::clamp(((px - ax) * ex + (py - ay) * ey) / (ex * ex + ey * ey), 0.0, 1.0);
  return dist2d(px, py, ax + t * ex, ay + t * ey);
}

SymbolicExpression leaf(std::string category) { return {std::move(category), {}}; }

SymbolicExpression with(std::string category, Relation r, std::vector<SymbolicExpression> anchors,
                        bool negative = false) {
  return {std::move(category), {RelationClause{r, std::move(anchors), negative}}};
}

const std::vector<std::string> kTargets = {"chair", "box", "lamp", "plant", "stool", "bag"};
const std::vector<std::string> kAnchors = {"table", "desk", "bed", "sofa", "door", "cabinet"};

std::string phrase_for(Relation r) {
  switch (r) {
    case Relation::Far: return "far from";
    case Relation::Left: return "left of";
    case Relation::Right: return "right of";
    case Relation::Front: return "in front of";
    default: return relation_phrase(r);
  }
}

// Places a target and distractors around an anchor in the viewer's frame.
// The viewer stands near the room centre looking at the anchor; offsets are
// (along the view direction, along the viewer's right).
void directional(Builder& b, std::mt19937_64& rng, const std::string& target, int group,
                 const std::function<std::pair<double, double>()>& target_offset,
                 const std::function<std::pair<double, double>()>& distractor_offset,
                 const std::string& anchor) {
  const double theta = uniform(rng, 0, 2 * std::numbers::pi);
  const double vx = std::cos(theta), vy = std::sin(theta);
  const double rx = vy, ry = -vx;
  const double px = kRoom / 2 + 2.2 * vx, py = kRoom / 2 + 2.2 * vy;
  b.add(anchor, px, py, {0.8, 0.8, 0.9});
  auto place = [&](const std::pair<double, double>& off) {
    return std::pair{px + off.first * vx + off.second * rx, py + off.first * vy + off.second * ry};
  };
  for (int attempt = 0;; ++attempt) {
    if (attempt > 500) throw std::runtime_error("placement failed");
    const auto [x, y] = place(target_offset());
    if (inside(x, y)) {
      b.add_target(target, x, y, small_size(rng));
      break;
    }
  }
  for (int placed = 1, attempt = 0; placed < group; ++attempt) {
    if (attempt > 2000) throw std::runtime_error("placement failed");
    const auto [x, y] = place(distractor_offset());
    if (!inside(x, y)) continue;
    b.add(target, x, y, small_size(rng));
    ++placed;
  }
}

Draft build(Relation r, bool negative, int variant, std::mt19937_64& rng) {
  Builder b(rng);
  Draft draft;
  const int group = 4 + static_cast<int>(pick(rng, 3));  // 4..6 same-category objects
  std::string t = kTargets[pick(rng, kTargets.size())];
  std::string a = kAnchors[pick(rng, kAnchors.size())];
  const auto floor_distractors = [&](int count, const std::function<bool(double, double)>& ok) {
    for (int k = 0; k < count; ++k) {
      const auto [x, y] = sample_point(rng, ok);
      b.add(t, x, y, small_size(rng));
    }
  };

  if (variant == 1) {
    // Nested: the target sits on the anchor that is itself near a landmark.
    const std::string lm = "window";
    const double x1 = uniform(rng, 1.5, 2.5), y1 = uniform(rng, 1.5, 6.5);
    const double x2 = uniform(rng, 5.5, 6.5), y2 = uniform(rng, 1.5, 6.5);
    const bool flip = pick(rng, 2) == 1;
    const double tx = flip ? x2 : x1, ty = flip ? y2 : y1;
    const double ox = flip ? x1 : x2, oy = flip ? y1 : y2;
    b.add(a, tx, ty, {1.2, 0.8, 0.75});
    b.add(a, ox, oy, {1.2, 0.8, 0.75});
    b.add(lm, tx + (flip ? 1.2 : -1.2), ty, {0.3, 1.0, 1.0}, 0.8);
    b.add_target(t, tx, ty, {0.3, 0.3, 0.35}, 0.75);
    b.add(t, ox, oy, {0.3, 0.3, 0.35}, 0.75);
    floor_distractors(group - 2, [&](double x, double y) {
      return dist2d(x, y, tx, ty) > 2 && dist2d(x, y, ox, oy) > 2;
    });
    draft.expression = with(t, Relation::Above, {with(a, Relation::Near, {leaf(lm)})});
    draft.utterance = fmt::format("the {} on the {} near the {}", t, a, lm);
  } else if (variant == 2) {
    // Nested: near the anchor that is against the wall.
    const double wy = uniform(rng, 2, 6);
    const double cx = uniform(rng, 4.5, 5.5), cy = uniform(rng, 3.5, 4.5);
    b.add(a, 0.05 + 0.6, wy, {1.2, 0.8, 0.75});
    b.add(a, cx, cy, {1.2, 0.8, 0.75});
    b.add_target(t, 1.9, wy + uniform(rng, -0.3, 0.3), small_size(rng));
    b.add(t, cx + 1.2, cy + uniform(rng, -0.3, 0.3), small_size(rng));
    floor_distractors(group - 2, [&](double x, double y) {
      return dist2d(x, y, 0.65, wy) > 3.5 && dist2d(x, y, cx, cy) > 2.5;
    });
    draft.expression = with(t, Relation::Near, {with(a, Relation::AgainstTheWall, {})});
    draft.utterance = fmt::format("the {} near the {} against the wall", t, a);
  } else if (variant == 3) {
    // Conjunction: large and near.
    const auto [px, py] = sample_point(rng, [](double x, double y) { return inside(x, y, 2.2); });
    b.add(a, px, py, {1.0, 1.0, 0.8});
    b.add_target(t, px + 1.3, py, {1.1, 1.1, 0.9});
    b.add(t, px - 1.3, py, {0.45, 0.45, 0.5});
    b.add(t, px, py + 1.3, {0.45, 0.45, 0.5});
    const auto [fx, fy] = sample_point(rng, [&](double x, double y) { return dist2d(x, y, px, py) > 4; });
    b.add(t, fx, fy, {1.1, 1.1, 0.9});
    floor_distractors(group - 4, [&](double x, double y) { return dist2d(x, y, px, py) > 3.5; });
    draft.expression = {t, {RelationClause{Relation::Large, {}, false},
                            RelationClause{Relation::Near, {leaf(a)}, false}}};
    draft.utterance = fmt::format("the large {} near the {}", t, a);
  } else {
    const std::string neg = negative ? "that is not " : "";
    switch (r) {
      case Relation::Near:
      case Relation::Far: {
        // Positive near and negative far share a layout: target close, rest away.
        const bool close = (r == Relation::Near) != negative;
        const auto [px, py] = sample_point(rng, [](double x, double y) {
          return (x < 2.5 || x > 5.5) && (y < 2.5 || y > 5.5);
        });
        b.add(a, px, py, {1.2, 0.8, 0.75});
        const double cx = kRoom - px, cy = kRoom - py;  // opposite corner
        if (close) {
          const double th = uniform(rng, 0, 2 * std::numbers::pi);
          const double x = std::clamp(px + 1.1 * std::cos(th), 0.7, kRoom - 0.7);
          const double y = std::clamp(py + 1.1 * std::sin(th), 0.7, kRoom - 0.7);
          b.add_target(t, x, y, small_size(rng));
          floor_distractors(group - 1, [&](double x2, double y2) { return dist2d(x2, y2, px, py) > 3.5; });
        } else {
          b.add_target(t, cx + uniform(rng, -0.4, 0.4), cy + uniform(rng, -0.4, 0.4), small_size(rng));
          floor_distractors(group - 1, [&](double x2, double y2) {
            const double d = dist2d(x2, y2, px, py);
            return d > 0.9 && d < 2.2;
          });
        }
        draft.expression = with(t, r, {leaf(a)}, negative);
        draft.utterance = fmt::format("the {} {}{} the {}", t, neg, phrase_for(r), a);
        break;
      }
      case Relation::Above: {
        const auto [px, py] = sample_point(rng, [](double x, double y) { return inside(x, y, 1.5); });
        b.add(a, px, py, {1.2, 0.8, 0.75});
        if (negative) {
          // Everything else rests on the anchor; the target stays on the floor.
          for (int k = 0; k < group - 1; ++k) {
            b.add(t, px - 0.4 + 0.8 * k / std::max(1, group - 2), py + uniform(rng, -0.2, 0.2),
                  {0.2, 0.2, 0.3}, 0.75);
          }
          const auto [x, y] = sample_point(rng, [&](double x2, double y2) { return dist2d(x2, y2, px, py) > 2.5; });
          b.add_target(t, x, y, small_size(rng));
        } else {
          b.add_target(t, px + uniform(rng, -0.2, 0.2), py, {0.3, 0.3, 0.35}, 0.75);
          const auto [sx, sy] = sample_point(rng, [&](double x, double y) { return dist2d(x, y, px, py) > 2.5; });
          b.add("shelf", sx, sy, {1.0, 0.6, 0.75});
          b.add(t, sx, sy, {0.3, 0.3, 0.35}, 0.75);
          floor_distractors(group - 2, [&](double x, double y) {
            return dist2d(x, y, px, py) > 2 && dist2d(x, y, sx, sy) > 1;
          });
        }
        draft.expression = with(t, r, {leaf(a)}, negative);
        draft.utterance = fmt::format("the {} {}{} the {}", t, neg, phrase_for(r), a);
        break;
      }
      case Relation::Below: {
        a = "shelf";
        const auto [px, py] = sample_point(rng, [](double x, double y) { return inside(x, y, 1.5); });
        b.add(a, px, py, {1.0, 0.8, 0.4}, 1.0);
        b.add_target(t, px, py + uniform(rng, -0.1, 0.1), {0.5, 0.5, 0.8});
        floor_distractors(group - 1, [&](double x, double y) { return dist2d(x, y, px, py) > 2.2; });
        draft.expression = with(t, r, {leaf(a)});
        draft.utterance = fmt::format("the {} below the {}", t, a);
        break;
      }
      case Relation::Left:
      case Relation::Right: {
        // side = +1 puts the target on the viewer's right of the anchor.
        const double side = ((r == Relation::Right) != negative) ? 1.0 : -1.0;
        directional(
            b, rng, t, group, [&] { return std::pair{uniform(rng, -0.2, 0.2), side * 1.2}; },
            [&] { return std::pair{uniform(rng, -1.6, 1.6), -side * uniform(rng, 0.4, 2.2)}; }, a);
        draft.expression = with(t, r, {leaf(a)}, negative);
        draft.utterance = fmt::format("the {} {}{} the {}", t, neg, phrase_for(r), a);
        break;
      }
      case Relation::Front:
      case Relation::Behind: {
        const double side = r == Relation::Behind ? 1.0 : -1.0;
        directional(
            b, rng, t, group, [&] { return std::pair{side * 1.2, uniform(rng, -0.2, 0.2)}; },
            [&] { return std::pair{-side * uniform(rng, 0.4, 1.8), uniform(rng, -2.0, 2.0)}; }, a);
        draft.expression = with(t, r, {leaf(a)});
        draft.utterance = fmt::format("the {} {} the {}", t, phrase_for(r), a);
        break;
      }
      case Relation::Between: {
        std::string a2 = kAnchors[pick(rng, kAnchors.size())];
        while (a2 == a) a2 = kAnchors[pick(rng, kAnchors.size())];
        const double th = uniform(rng, 0, std::numbers::pi);
        const double ax = 4 - 1.6 * std::cos(th), ay = 4 - 1.6 * std::sin(th);
        const double bx = 4 + 1.6 * std::cos(th), by = 4 + 1.6 * std::sin(th);
        b.add(a, ax, ay, {0.8, 0.8, 0.8});
        b.add(a2, bx, by, {0.8, 0.8, 0.8});
        b.add_target(t, 4 + uniform(rng, -0.2, 0.2), 4 + uniform(rng, -0.2, 0.2), small_size(rng));
        floor_distractors(group - 1, [&](double x, double y) {
          return segment_distance(x, y, ax, ay, bx, by) > 1.8;
        });
        draft.expression = with(t, r, {leaf(a), leaf(a2)});
        draft.utterance = fmt::format("the {} between the {} and the {}", t, a, a2);
        break;
      }
      case Relation::Large:
      case Relation::Small: {
        const double scale = r == Relation::Large ? 1.7 : 0.55;
        const auto [x, y] = sample_point(rng, [](double, double) { return true; });
        const Vec3 base{0.6, 0.6, 0.6};
        b.add_target(t, x, y, {base[0] * scale, base[1] * scale, base[2] * scale});
        floor_distractors(group - 1, [&](double x2, double y2) { return dist2d(x2, y2, x, y) > 1.2; });
        for (std::size_t k = 0; k < b.objects.size(); ++k) {
          if (k != b.target && b.objects[k].label == t) {
            b.objects[k].bbox.size = {0.6, 0.6, 0.6};
            b.objects[k].bbox.center[2] = 0.3;
          }
        }
        draft.expression = with(t, r, {});
        draft.utterance = fmt::format("the {} {}", relation_phrase(r), t);
        break;
      }
      case Relation::High:
      case Relation::Low:
      case Relation::OnTheFloor: {
        // Elevated objects rest on shelves; floor objects stand alone.
        const bool target_up = (r == Relation::High) != negative;
        const auto [x, y] = sample_point(rng, [](double, double) { return true; });
        if (target_up) {
          b.add("shelf", x, y, {0.8, 0.8, 1.4});
          b.add_target(t, x, y, small_size(rng), 1.4);
          floor_distractors(group - 1, [&](double x2, double y2) { return dist2d(x2, y2, x, y) > 1.2; });
        } else {
          b.add_target(t, x, y, small_size(rng));
          for (int k = 1; k < group; ++k) {
            const auto [sx, sy] = sample_point(rng, [&](double x2, double y2) { return dist2d(x2, y2, x, y) > 1.2; });
            const double h = uniform(rng, 0.8, 1.2);
            b.add("shelf", sx, sy, {0.8, 0.8, h});
            b.add(t, sx, sy, small_size(rng), h);
          }
        }
        draft.expression = with(t, r, {}, negative);
        draft.utterance = r == Relation::OnTheFloor
                              ? fmt::format("the {} {}on the floor", t, neg)
                              : fmt::format("the {} {}", relation_phrase(r), t);
        break;
      }
      case Relation::AgainstTheWall: {
        const auto s = small_size(rng);
        b.add_target(t, 0.05 + s[0] / 2, uniform(rng, 2, 6), s);
        floor_distractors(group - 1, [](double x, double y) { return inside(x, y, 2.6); });
        draft.expression = with(t, r, {});
        draft.utterance = fmt::format("the {} against the wall", t);
        break;
      }
      case Relation::AtTheCorner: {
        const auto s = small_size(rng);
        const bool hx = pick(rng, 2) == 1, hy = pick(rng, 2) == 1;
        b.add_target(t, hx ? kRoom - 0.05 - s[0] / 2 : 0.05 + s[0] / 2,
                     hy ? kRoom - 0.05 - s[1] / 2 : 0.05 + s[1] / 2, s);
        // One distractor against the middle of a wall, the rest in the open.
        const auto s2 = small_size(rng);
        b.add(t, kRoom / 2 + uniform(rng, -1, 1), 0.05 + s2[1] / 2, s2);
        floor_distractors(group - 2, [](double x, double y) { return inside(x, y, 2.6); });
        draft.expression = with(t, r, {});
        draft.utterance = fmt::format("the {} at the corner", t);
        break;
      }
    }
  }
  draft.objects = std::move(b.objects);
  draft.target = b.target;
  return draft;
}

// Direct evaluation with the native encoders, independent of the cache and
// interpreter used by the executor.
std::vector<double> direct_score(const SymbolicExpression& expr, const Scene& scene,
                                 const PairGeometry& geom) {
  const std::size_t n = scene.size();
  std::vector<double> sim(n);
  for (std::size_t i = 0; i < n; ++i) {
    sim[i] = normalize_label(scene[i].label) == normalize_label(expr.category) ? 1.0 : 0.0;
  }
  std::vector<double> score = stable_softmax(sim, 100.0);
  for (const auto& clause : expr.relations) {
    const auto rel = native_feature(clause.relation, scene, geom);
    std::vector<std::vector<double>> anchors;
    for (const auto& anchor : clause.anchors) anchors.push_back(direct_score(anchor, scene, geom));
    std::vector<double> f(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (rel.rank == 1) {
        f[i] = rel.at(i);
      } else {
        for (std::size_t j = 0; j < n; ++j) {
          if (rel.rank == 2) {
            f[i] += rel.at(i, j) * anchors[0][j];
          } else {
            for (std::size_t k = 0; k < n; ++k) f[i] += rel.at(i, j, k) * anchors[0][j] * anchors[1][k];
          }
        }
      }
    }
    f = stable_softmax(f);
    if (clause.negative) {
      const double m = *std::max_element(f.begin(), f.end());
      for (double& v : f) v = m - v;
    }
    for (std::size_t i = 0; i < n; ++i) score[i] *= f[i];
  }
  return score;
}

bool unambiguous(const Scene& scene, std::uint64_t target, const SymbolicExpression& expr) {
  const auto score = direct_score(expr, scene, precompute_geometry(scene));
  const std::size_t t = scene.index_of(target);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (i != t && !(score[t] > 1.005 * score[i])) return false;
  }
  return true;
}

}  // namespace

Dataset generate_mini_benchmark(std::uint64_t seed) {
  struct Slot {
    Relation relation;
    bool negative;
    int variant;
  };
  std::vector<Slot> slots;
  for (int rep = 0; rep < 2; ++rep) {
    for (Relation r : all_relations()) slots.push_back({r, false, 0});
  }
  for (Relation r : {Relation::Near, Relation::Above, Relation::OnTheFloor, Relation::Left}) {
    slots.push_back({r, true, 0});
  }
  slots.push_back({Relation::Above, false, 1});
  slots.push_back({Relation::Above, false, 1});
  slots.push_back({Relation::Near, false, 2});
  slots.push_back({Relation::Near, false, 3});

  std::mt19937_64 rng(seed);
  Dataset data;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const std::string id = fmt::format("mb_{:03}", k);
    bool done = false;
    for (int attempt = 0; attempt < 200 && !done; ++attempt) {
      Draft draft;
      try {
        draft = build(slots[k].relation, slots[k].negative, slots[k].variant, rng);
      } catch (const std::runtime_error&) {
        continue;
      }
      Builder shuffler(rng);
      shuffler.objects = std::move(draft.objects);
      shuffler.target = draft.target;
      auto [scene, target] = shuffler.finish(id);
      if (!unambiguous(scene, target, draft.expression)) continue;
      data.items.push_back({id, draft.utterance, draft.expression, target});
      data.scenes.push_back(std::move(scene));
      done = true;
    }
    if (!done) {
      throw std::runtime_error(fmt::format("could not build an unambiguous scene for {}",
                                           relation_name(slots[k].relation)));
    }
  }
  return data;
}

}  // namespace lasp
