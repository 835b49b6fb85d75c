#pragma once

#include <adafuse/data/dataset.hpp>
#include <adafuse/ensemble/train.hpp>
#include <adafuse/eval/metrics.hpp>

namespace adafuse {

inline MetricsReport evaluate_model(const EnsembleModel& model, const Dataset& ds) {
  if (model.class_count != ds.class_count) {
    throw ContractError("evaluate_model: model has " + std::to_string(model.class_count) +
                        " classes, dataset has " + std::to_string(ds.class_count));
  }
  MetricsReport r = evaluate_probabilities(predict_proba(model, ds.x), ds.y);
  r.class_names = ds.class_names;
  return r;
}

}  // namespace adafuse
