#pragma once

#include "lasp/dsl.hpp"
#include "lasp/expression.hpp"
#include "lasp/scene.hpp"

namespace lasp {

/// Reference implementation of the builtin encoder for a relation, computed
/// directly in C++ rather than through the interpreter.
///
/// Conventions: the viewer for left/right/front/behind stands at the scene's
/// xy centroid facing the anchor. Every formula uses guarded_div so the
/// interpreted export matches to rounding.
RelationFeature native_feature(Relation relation, const Scene& scene, const PairGeometry& geom);

/// The builtin encoder as a DSL tree. Evaluating it with eval_encoder
/// reproduces native_feature within 1e-9.
EncoderDefinition encoder_to_dsl(Relation relation);

}  // namespace lasp
