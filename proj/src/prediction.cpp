#include "lexeval/prediction.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace lexeval {
namespace {

// True when instance a outranks b for a contested point.
bool outranks(const PredictedInstance& a, const PredictedInstance& b) {
  const double ca = a.confidence.value_or(-std::numeric_limits<double>::infinity());
  const double cb = b.confidence.value_or(-std::numeric_limits<double>::infinity());
  if (ca != cb) return ca > cb;
  return a.id < b.id;
}

}  // namespace

Prediction make_dense_prediction(std::vector<Point3> points, Matrix features) {
  if (features.rows() != points.size()) {
    throw DomainError("dense prediction has " + std::to_string(points.size()) + " points but " +
                      std::to_string(features.rows()) + " feature rows");
  }
  Prediction p;
  p.mode = PredictionMode::kDense;
  p.points = std::move(points);
  p.features = std::move(features);
  p.feature_row.resize(p.points.size());
  for (std::size_t i = 0; i < p.feature_row.size(); ++i) {
    p.feature_row[i] = static_cast<std::uint32_t>(i);
  }
  return p;
}

Prediction make_object_prediction(std::vector<Point3> points,
                                  std::vector<PredictedInstance> instances) {
  Prediction p;
  p.mode = PredictionMode::kObject;
  p.points = std::move(points);
  if (instances.empty()) {
    p.feature_row.assign(p.points.size(), Prediction::kNoFeature);
    return p;
  }
  const std::size_t dim = instances.front().feature.size();
  if (dim == 0) throw DomainError("instance features are empty");
  std::set<InstanceId> ids;
  for (const PredictedInstance& inst : instances) {
    if (!ids.insert(inst.id).second) {
      throw DomainError("duplicate predicted instance id " + std::to_string(inst.id));
    }
    if (inst.feature.size() != dim) {
      throw DomainError("instance " + std::to_string(inst.id) + " feature has dimension " +
                        std::to_string(inst.feature.size()) + ", expected " + std::to_string(dim));
    }
    if (inst.points.empty()) {
      throw DomainError("instance " + std::to_string(inst.id) + " has no points");
    }
  }
  for (PredictedInstance& inst : instances) {
    std::sort(inst.points.begin(), inst.points.end());
    inst.points.erase(std::unique(inst.points.begin(), inst.points.end()), inst.points.end());
    for (std::uint32_t idx : inst.points) {
      if (idx >= p.points.size()) {
        throw DomainError("instance " + std::to_string(inst.id) + " references point " +
                          std::to_string(idx) + " beyond the cloud of " +
                          std::to_string(p.points.size()));
      }
    }
  }

  std::vector<std::uint32_t> owner(p.points.size(), Prediction::kNoFeature);
  std::map<std::pair<InstanceId, InstanceId>, std::size_t> contested;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    for (std::uint32_t idx : instances[k].points) {
      std::uint32_t& o = owner[idx];
      if (o == Prediction::kNoFeature) {
        o = static_cast<std::uint32_t>(k);
        continue;
      }
      if (o == k) continue;
      const PredictedInstance& current = instances[o];
      const PredictedInstance& challenger = instances[k];
      const bool take = outranks(challenger, current);
      const InstanceId winner = take ? challenger.id : current.id;
      const InstanceId loser = take ? current.id : challenger.id;
      ++contested[{winner, loser}];
      if (take) o = static_cast<std::uint32_t>(k);
    }
  }
  for (const auto& [pair, count] : contested) {
    p.warnings.push_back(std::to_string(count) + " points claimed by instances " +
                         std::to_string(pair.first) + " and " + std::to_string(pair.second) +
                         " resolved to " + std::to_string(pair.first));
  }

  p.features = Matrix(instances.size(), dim);
  for (std::size_t k = 0; k < instances.size(); ++k) {
    std::copy(instances[k].feature.begin(), instances[k].feature.end(), p.features.row(k).begin());
  }
  p.feature_row = std::move(owner);
  p.instances = std::move(instances);
  return p;
}

}  // namespace lexeval
