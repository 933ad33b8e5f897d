#pragma once

// Model checkpoints: one JSON document with a format tag, version, vocabulary,
// shapes and row-major weights written as C99 hex floats ("%a"), so that
// load(save(m)) == m bit for bit.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>

#include "attriq/models.hpp"
#include "json.hpp"

namespace attriq {

inline constexpr const char* kCheckpointFormat = "attriq-model";
inline constexpr int kCheckpointVersion = 1;

inline std::string hex_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hex_float(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw DataError("checkpoint: bad float '" + s + "'");
  return v;
}

inline nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json data = nlohmann::json::array();
  for (double v : t.data) data.push_back(hex_float(v));
  return {{"shape", t.shape}, {"data", std::move(data)}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  Shape shape = j.at("shape").get<Shape>();
  std::vector<double> data;
  for (const auto& v : j.at("data")) data.push_back(v.is_string() ? parse_hex_float(v.get<std::string>()) : v.get<double>());
  return Tensor(std::move(shape), std::move(data));
}

using AnyModel = std::variant<ClassifierModel, TableQAModel>;

namespace detail {

template <class Model>
nlohmann::json params_to_json(const Model& m) {
  nlohmann::json p = nlohmann::json::object();
  for (const auto& [name, t] : m.parameters()) p[name] = tensor_to_json(*t);
  return p;
}

template <class Model>
void params_from_json(Model& m, const nlohmann::json& p) {
  for (auto& [name, t] : m.parameters()) {
    if (!p.contains(name)) throw DataError("checkpoint: missing parameter " + name);
    *t = tensor_from_json(p.at(name));
  }
}

}  // namespace detail

inline nlohmann::json model_to_json(const AnyModel& model) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        j["kind"] = std::is_same_v<M, ClassifierModel> ? "classifier" : "tableqa";
        j["dim"] = m.dim;
        j["vocab"] = m.vocab.tokens();
        if constexpr (std::is_same_v<M, ClassifierModel>) {
          j["classes"] = m.classes;
        } else {
          nlohmann::json ops = nlohmann::json::array();
          for (Operator op : kOperators) ops.push_back(std::string(operator_name(op)));
          j["operators"] = ops;
          j["steps"] = kSteps;
        }
        j["params"] = detail::params_to_json(m);
      },
      model);
  return j;
}

inline AnyModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != kCheckpointFormat) throw DataError("checkpoint: not an attriq model file");
    if (j.value("version", 0) != kCheckpointVersion)
      throw DataError("checkpoint: unsupported version " + std::to_string(j.value("version", 0)));
    const std::string kind = j.at("kind").get<std::string>();
    Vocabulary vocab = Vocabulary::from_tokens(j.at("vocab").get<std::vector<std::string>>());
    const std::size_t dim = j.at("dim").get<std::size_t>();
    if (kind == "classifier") {
      ClassifierModel m = ClassifierModel::zeros(std::move(vocab), j.at("classes").get<std::vector<std::string>>(), dim);
      detail::params_from_json(m, j.at("params"));
      m.validate();
      return m;
    }
    if (kind == "tableqa") {
      auto ops = j.at("operators").get<std::vector<std::string>>();
      if (ops.size() != kOperatorCount) throw DataError("checkpoint: operator list does not match this build");
      for (std::size_t i = 0; i < ops.size(); ++i)
        if (ops[i] != operator_name(kOperators[i])) throw DataError("checkpoint: operator order does not match this build");
      if (j.at("steps").get<std::size_t>() != kSteps) throw DataError("checkpoint: step count must be 4");
      TableQAModel m = TableQAModel::zeros(std::move(vocab), dim);
      detail::params_from_json(m, j.at("params"));
      m.validate();
      return m;
    }
    throw DataError("checkpoint: unknown model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_model(const AnyModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << model_to_json(model).dump(1) << '\n';
}

inline AnyModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return model_from_json(nlohmann::json::parse(ss.str()));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace attriq
