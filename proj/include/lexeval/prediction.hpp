#pragma once

// Predicted scene representations. Dense predictions carry one feature per
// point; object-centric predictions carry one feature per instance and are
// flattened so each claimed point reads its owner's feature.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lexeval/common.hpp"

namespace lexeval {

enum class PredictionMode { kDense, kObject };

struct PredictedInstance {
  InstanceId id = 0;
  std::vector<std::uint32_t> points;  // indices into the shared cloud, ascending
  std::vector<float> feature;
  std::optional<double> confidence;
};

struct Prediction {
  static constexpr std::uint32_t kNoFeature = std::numeric_limits<std::uint32_t>::max();

  PredictionMode mode = PredictionMode::kDense;
  std::vector<Point3> points;
  // Dense: one row per point. Object: one row per instance.
  Matrix features;
  // Row of `features` read by each point; kNoFeature for points no
  // instance claims.
  std::vector<std::uint32_t> feature_row;
  std::vector<PredictedInstance> instances;
  std::vector<std::string> warnings;

  std::size_t dim() const { return features.cols(); }
};

// Throws DomainError unless features has one row per point.
Prediction make_dense_prediction(std::vector<Point3> points, Matrix features);

// Resolves points claimed by several instances to the highest confidence
// (missing confidence ranks lowest), ties to the lower instance id, and
// records a warning per contested instance pair. Instance masks keep their
// declared points (sorted, deduplicated) for retrieval and NMS; only the
// per-point feature view is resolved.
Prediction make_object_prediction(std::vector<Point3> points,
                                  std::vector<PredictedInstance> instances);

}  // namespace lexeval
