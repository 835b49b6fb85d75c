#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/ensemble/plan.hpp>

#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace adafuse {

/// Object keys serialize in sorted order.
using Json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

namespace detail {

/// Rejects any key of `obj` outside `allowed`; `where` names the object in errors.
inline void check_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ParseError(where + ": unknown key '" + key + "'");
  }
}

inline const Json& field(const Json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing key '" + key + "'");
  return *it;
}

template <class T>
T get_as(const Json& obj, const char* key, const std::string& where) {
  try {
    return field(obj, key, where).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + "." + key + ": " + e.what());
  }
}

inline Json matrix_to_json(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = m.storage();
  return j;
}

inline Matrix matrix_from_json(const Json& j, const std::string& where) {
  check_keys(j, {"rows", "cols", "data"}, where);
  const auto rows = get_as<std::size_t>(j, "rows", where);
  const auto cols = get_as<std::size_t>(j, "cols", where);
  const auto data = get_as<std::vector<double>>(j, "data", where);
  if (data.size() != rows * cols) {
    throw ParseError(where + ": data has " + std::to_string(data.size()) + " values, expected " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.values().begin());
  return m;
}

inline Json affine_to_json(const Affine& a) { return {{"weight", matrix_to_json(a.weight)}, {"bias", matrix_to_json(a.bias)}}; }

inline Affine affine_from_json(const Json& j, const std::string& where) {
  check_keys(j, {"weight", "bias"}, where);
  Affine a{matrix_from_json(field(j, "weight", where), where + ".weight"),
           matrix_from_json(field(j, "bias", where), where + ".bias")};
  if (a.bias.rows() != 1 || a.bias.cols() != a.weight.cols()) {
    throw ParseError(where + ": bias shape " + shape_string(a.bias) + " does not match weight " +
                     shape_string(a.weight));
  }
  return a;
}

inline Json learner_to_json(const Learner& learner) {
  return std::visit(
      overloaded{
          [](const MlpModel& m) {
            Json layers = Json::array();
            for (const auto& l : m.layers) layers.push_back(affine_to_json(l));
            return Json{{"kind", "mlp"},
                        {"activation", std::string(to_string(m.activation))},
                        {"input_dim", m.input_dim},
                        {"class_count", m.class_count},
                        {"layers", layers}};
          },
          [](const DecisionStump& s) {
            return Json{{"kind", "stump"},         {"feature_index", s.feature_index},
                        {"threshold", s.threshold}, {"left_class", s.left_class},
                        {"right_class", s.right_class}, {"class_count", s.class_count},
                        {"weighted_error", s.weighted_error}, {"constant", s.constant}};
          },
          [](const MajorityClass& m) {
            return Json{{"kind", "majority"}, {"label", m.label}, {"class_count", m.class_count}};
          },
      },
      learner);
}

inline Learner learner_from_json(const Json& j, const std::string& where) {
  const auto kind = get_as<std::string>(j, "kind", where);
  if (kind == "mlp") {
    check_keys(j, {"kind", "activation", "input_dim", "class_count", "layers"}, where);
    MlpModel m;
    try {
      m.activation = parse_activation(get_as<std::string>(j, "activation", where));
    } catch (const ContractError& e) {
      throw ParseError(where + ": " + e.what());
    }
    m.input_dim = get_as<std::size_t>(j, "input_dim", where);
    m.class_count = get_as<std::size_t>(j, "class_count", where);
    const Json& layers = field(j, "layers", where);
    if (!layers.is_array() || layers.empty()) throw ParseError(where + ".layers: expected a nonempty array");
    std::size_t fan_in = m.input_dim;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string w = where + ".layers[" + std::to_string(l) + "]";
      Affine a = affine_from_json(layers[l], w);
      if (a.weight.rows() != fan_in) throw ParseError(w + ": weight has " + std::to_string(a.weight.rows()) +
                                                      " rows, expected " + std::to_string(fan_in));
      fan_in = a.weight.cols();
      m.layers.push_back(std::move(a));
    }
    if (fan_in != m.class_count) throw ParseError(where + ": output layer width does not match class_count");
    return m;
  }
  if (kind == "stump") {
    check_keys(j, {"kind", "feature_index", "threshold", "left_class", "right_class", "class_count",
                   "weighted_error", "constant"},
               where);
    DecisionStump s;
    s.feature_index = get_as<std::size_t>(j, "feature_index", where);
    s.threshold = get_as<double>(j, "threshold", where);
    s.left_class = get_as<std::size_t>(j, "left_class", where);
    s.right_class = get_as<std::size_t>(j, "right_class", where);
    s.class_count = get_as<std::size_t>(j, "class_count", where);
    s.weighted_error = get_as<double>(j, "weighted_error", where);
    s.constant = get_as<bool>(j, "constant", where);
    if (s.left_class >= s.class_count || s.right_class >= s.class_count) {
      throw ParseError(where + ": stump class out of range");
    }
    return s;
  }
  if (kind == "majority") {
    check_keys(j, {"kind", "label", "class_count"}, where);
    MajorityClass m{get_as<std::size_t>(j, "label", where), get_as<std::size_t>(j, "class_count", where)};
    if (m.label >= m.class_count) throw ParseError(where + ": majority label out of range");
    return m;
  }
  throw ParseError(where + ": unknown learner kind '" + kind + "'");
}

inline Json fusion_to_json(const FusionParams& p) {
  Json j;
  j["kind"] = std::string(to_string(p.kind));
  j["source_dims"] = p.source_dims;
  j["common_dim"] = p.common_dim;
  Json adapters = Json::array();
  for (const auto& a : p.adapters) adapters.push_back(affine_to_json(a));
  j["adapters"] = adapters;
  switch (p.kind) {
    case FusionKind::Linear: j["projection"] = affine_to_json(p.projection); break;
    case FusionKind::Pca:
      j["pca"] = {{"mean", matrix_to_json(p.pca.mean)},
                  {"components", matrix_to_json(p.pca.components)},
                  {"eigenvalues", p.pca.eigenvalues}};
      break;
    case FusionKind::Attention:
      j["score"] = affine_to_json(p.score);
      j["score_context"] = matrix_to_json(p.score_context);
      break;
    case FusionKind::Gated: {
      Json gates = Json::array();
      for (const auto& g : p.gates) gates.push_back(affine_to_json(g));
      j["gates"] = gates;
      break;
    }
    default: break;
  }
  return j;
}

inline FusionParams fusion_from_json(const Json& j, const std::string& where) {
  check_keys(j, {"kind", "source_dims", "common_dim", "adapters", "projection", "pca", "score", "score_context",
                 "gates"},
             where);
  FusionParams p;
  try {
    p.kind = parse_fusion_kind(get_as<std::string>(j, "kind", where));
  } catch (const ContractError& e) {
    throw ParseError(where + ": " + e.what());
  }
  p.source_dims = get_as<std::vector<std::size_t>>(j, "source_dims", where);
  p.common_dim = get_as<std::size_t>(j, "common_dim", where);
  if (p.source_dims.empty()) throw ParseError(where + ": source_dims is empty");
  const Json& adapters = field(j, "adapters", where);
  if (!adapters.is_array()) throw ParseError(where + ".adapters: expected an array");
  for (std::size_t i = 0; i < adapters.size(); ++i) {
    p.adapters.push_back(affine_from_json(adapters[i], where + ".adapters[" + std::to_string(i) + "]"));
  }
  auto shape_error = [&](const std::string& what) { throw ParseError(where + ": " + what); };
  if (!p.adapters.empty()) {
    if (p.adapters.size() != p.source_dims.size()) shape_error("adapter count does not match sources");
    for (std::size_t i = 0; i < p.adapters.size(); ++i) {
      if (p.adapters[i].weight.rows() != p.source_dims[i] || p.adapters[i].weight.cols() != p.common_dim) {
        shape_error("adapter " + std::to_string(i) + " shape " + shape_string(p.adapters[i].weight));
      }
    }
  }
  const std::size_t total = std::accumulate(p.source_dims.begin(), p.source_dims.end(), std::size_t{0});
  const std::size_t width = p.adapters.empty() ? p.source_dims.front() : p.common_dim;
  switch (p.kind) {
    case FusionKind::Concat: break;
    case FusionKind::Sum:
    case FusionKind::Product:
      if (p.adapters.empty() && !detail::equal_dims(p.source_dims)) shape_error("unequal sources need adapters");
      break;
    case FusionKind::Linear:
      p.projection = affine_from_json(field(j, "projection", where), where + ".projection");
      if (p.projection.weight.rows() != total) shape_error("projection rows do not match source dims");
      break;
    case FusionKind::Pca: {
      const Json& pj = field(j, "pca", where);
      check_keys(pj, {"mean", "components", "eigenvalues"}, where + ".pca");
      p.pca.mean = matrix_from_json(field(pj, "mean", where), where + ".pca.mean");
      p.pca.components = matrix_from_json(field(pj, "components", where), where + ".pca.components");
      p.pca.eigenvalues = get_as<std::vector<double>>(pj, "eigenvalues", where + ".pca");
      if (p.pca.components.rows() != total || p.pca.mean.cols() != total ||
          p.pca.eigenvalues.size() != p.pca.components.cols()) {
        shape_error("pca shapes do not match source dims");
      }
      break;
    }
    case FusionKind::Attention:
      if (p.adapters.empty()) shape_error("attention needs adapters");
      p.score = affine_from_json(field(j, "score", where), where + ".score");
      p.score_context = matrix_from_json(field(j, "score_context", where), where + ".score_context");
      if (p.score.weight.rows() != width || p.score_context.rows() != p.score.weight.cols() ||
          p.score_context.cols() != width) {
        shape_error("attention shapes are inconsistent");
      }
      break;
    case FusionKind::Gated: {
      if (p.adapters.empty()) shape_error("gated fusion needs adapters");
      const Json& gates = field(j, "gates", where);
      if (!gates.is_array() || gates.size() != p.source_dims.size()) shape_error("gate count does not match sources");
      for (std::size_t i = 0; i < gates.size(); ++i) {
        p.gates.push_back(affine_from_json(gates[i], where + ".gates[" + std::to_string(i) + "]"));
        if (p.gates[i].weight.rows() != p.source_dims.size() * p.common_dim || p.gates[i].weight.cols() != p.common_dim) {
          shape_error("gate " + std::to_string(i) + " shape " + shape_string(p.gates[i].weight));
        }
      }
      break;
    }
  }
  return p;
}

inline std::size_t learner_input_dim(const Learner& l) {
  if (const auto* m = std::get_if<MlpModel>(&l)) return m->input_dim;
  return 0;
}

}  // namespace detail

inline Json model_to_json(const EnsembleModel& model) {
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["strategy"] = std::string(to_string(model.strategy));
  j["class_count"] = model.class_count;
  j["input_dim"] = model.input_dim;
  j["vote"] = std::string(to_string(model.vote));
  Json members = Json::array();
  Json seeds = Json::array();
  for (const auto& m : model.members) {
    Json mj;
    mj["learner"] = detail::learner_to_json(m.learner);
    mj["view"] = m.view ? Json::array({m.view->begin, m.view->end}) : Json(nullptr);
    mj["bootstrap_indices"] = m.bootstrap_indices;
    mj["alpha"] = m.alpha;
    mj["error"] = m.error;
    members.push_back(std::move(mj));
    seeds.push_back(m.seed);
  }
  j["base_learners"] = members;
  if (model.fusion) j["fusion"] = detail::fusion_to_json(*model.fusion);
  if (model.meta_head) j["meta_head"] = detail::affine_to_json(*model.meta_head);
  j["seed_provenance"] = {{"master_seed", model.master_seed}, {"learner_seeds", seeds}};
  j["warnings"] = model.warnings;
  return j;
}

inline EnsembleModel model_from_json(const Json& j) {
  const std::string where = "model";
  detail::check_keys(j, {"format_version", "strategy", "class_count", "input_dim", "vote", "base_learners",
                         "fusion", "meta_head", "seed_provenance", "warnings"},
                     where);
  const int version = detail::get_as<int>(j, "format_version", where);
  if (version != kModelFormatVersion) {
    throw ParseError("model: unsupported format_version " + std::to_string(version) + " (expected " +
                     std::to_string(kModelFormatVersion) + ")");
  }
  EnsembleModel model;
  try {
    model.strategy = parse_strategy(detail::get_as<std::string>(j, "strategy", where));
    model.vote = parse_vote_mode(detail::get_as<std::string>(j, "vote", where));
  } catch (const ContractError& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
  model.class_count = detail::get_as<std::size_t>(j, "class_count", where);
  model.input_dim = detail::get_as<std::size_t>(j, "input_dim", where);
  if (model.class_count < 2) throw ParseError("model: class_count must be >= 2");

  const Json& prov = detail::field(j, "seed_provenance", where);
  detail::check_keys(prov, {"master_seed", "learner_seeds"}, "model.seed_provenance");
  model.master_seed = detail::get_as<std::uint64_t>(prov, "master_seed", "model.seed_provenance");
  const auto seeds = detail::get_as<std::vector<std::uint64_t>>(prov, "learner_seeds", "model.seed_provenance");

  const Json& members = detail::field(j, "base_learners", where);
  if (!members.is_array() || members.empty()) throw ParseError("model.base_learners: expected a nonempty array");
  if (seeds.size() != members.size()) throw ParseError("model.seed_provenance: learner_seeds length mismatch");
  for (std::size_t i = 0; i < members.size(); ++i) {
    const std::string w = "model.base_learners[" + std::to_string(i) + "]";
    detail::check_keys(members[i], {"learner", "view", "bootstrap_indices", "alpha", "error"}, w);
    BaseMember m;
    m.learner = detail::learner_from_json(detail::field(members[i], "learner", w), w + ".learner");
    const Json& view = detail::field(members[i], "view", w);
    if (!view.is_null()) {
      const auto span = detail::get_as<std::vector<std::size_t>>(members[i], "view", w);
      if (span.size() != 2 || span[0] >= span[1] || span[1] > model.input_dim) throw ParseError(w + ": bad view");
      m.view = ViewSpan{span[0], span[1]};
    }
    m.bootstrap_indices = detail::get_as<std::vector<std::size_t>>(members[i], "bootstrap_indices", w);
    m.alpha = detail::get_as<double>(members[i], "alpha", w);
    m.error = detail::get_as<double>(members[i], "error", w);
    m.seed = seeds[i];
    if (learner_class_count(m.learner) != model.class_count) throw ParseError(w + ": class_count mismatch");
    const std::size_t expected_in = m.view ? m.view->width() : model.input_dim;
    const std::size_t in = detail::learner_input_dim(m.learner);
    if (in != 0 && in != expected_in) throw ParseError(w + ": learner input_dim does not match its view");
    if (const auto* s = std::get_if<DecisionStump>(&m.learner); s && s->feature_index >= expected_in) {
      throw ParseError(w + ": stump feature index out of range");
    }
    model.members.push_back(std::move(m));
  }
  if (j.contains("fusion")) model.fusion = detail::fusion_from_json(j["fusion"], "model.fusion");
  if (j.contains("meta_head")) model.meta_head = detail::affine_from_json(j["meta_head"], "model.meta_head");
  model.warnings = detail::get_as<std::vector<std::string>>(j, "warnings", where);

  switch (model.strategy) {
    case Strategy::Bagging:
    case Strategy::AdaBoost:
      if (model.fusion || model.meta_head) throw ParseError("model: bagging/adaboost models carry no fusion or head");
      break;
    case Strategy::Stacking:
      if (!model.meta_head || model.fusion) throw ParseError("model: stacking needs a meta_head and no fusion");
      if (model.meta_head->weight.rows() != model.members.size() * model.class_count) {
        throw ParseError("model.meta_head: rows do not match members x classes");
      }
      break;
    case Strategy::Adaptive: {
      if (!model.meta_head || !model.fusion) throw ParseError("model: adaptive needs fusion and meta_head");
      if (model.fusion->source_count() != model.members.size()) {
        throw ParseError("model.fusion: source count does not match base learners");
      }
      for (std::size_t i = 0; i < model.members.size(); ++i) {
        if (!std::holds_alternative<MlpModel>(model.members[i].learner) ||
            learner_feature_dim(model.members[i].learner) != model.fusion->source_dims[i]) {
          throw ParseError("model.fusion: source " + std::to_string(i) + " does not match its base learner");
        }
      }
      if (model.meta_head->weight.rows() != model.fusion->output_dim()) {
        throw ParseError("model.meta_head: rows do not match fusion output");
      }
      break;
    }
  }
  if (model.meta_head && model.meta_head->weight.cols() != model.class_count) {
    throw ParseError("model.meta_head: columns do not match class_count");
  }
  return model;
}

/// Doubles are written in shortest round-trip form, so load(save(m)) == m exactly.
inline void save_model(const EnsembleModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_model: cannot open '" + path + "' for writing");
  out << model_to_json(model).dump(2) << '\n';
  if (!out) throw Error("save_model: write failed for '" + path + "'");
}

inline EnsembleModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("load_model: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  Json j;
  try {
    j = Json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("load_model: '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace adafuse
