#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "scalelab/estimator.hpp"
#include "scalelab/forecast.hpp"
#include "scalelab/io_util.hpp"

namespace scalelab {

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw ParseError("checkpoint: bad matrix");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(i)].size()) != cols) {
      throw ParseError("checkpoint: ragged matrix");
    }
    for (Eigen::Index jj = 0; jj < cols; ++jj) {
      m(i, jj) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(jj)].get<double>();
    }
  }
  return m;
}

}  // namespace detail

inline nlohmann::json estimator_to_json(const CpuEstimator& est) {
  return nlohmann::json{{"w_b", est.w_b},
                        {"w_k", est.w_k},
                        {"sigma_b", est.sigma_b},
                        {"sigma_k", est.sigma_k}};
}

inline CpuEstimator estimator_from_json(const nlohmann::json& j) {
  CpuEstimator est;
  est.w_b = j.at("w_b").get<double>();
  est.w_k = j.at("w_k").get<std::vector<double>>();
  est.sigma_b = j.at("sigma_b").get<double>();
  est.sigma_k = j.at("sigma_k").get<std::vector<double>>();
  est.validate();
  return est;
}

inline nlohmann::json model_to_json(const ForecastModel& model) {
  nlohmann::json fourier;
  fourier["periods"] = model.fourier.periods;
  fourier["order"] = model.fourier.order;
  nlohmann::json per_lra = nlohmann::json::array();
  for (const auto& co : model.fourier.per_lra) {
    per_lra.push_back(nlohmann::json{{"a", co.a}, {"b", co.b}});
  }
  fourier["per_lra"] = std::move(per_lra);

  const LocalBlock& lb = model.local;
  nlohmann::json local;
  local["context"] = lb.context;
  local["horizon"] = lb.horizon;
  local["d_model"] = lb.d_model;
  local["w_in"] = detail::matrix_to_json(lb.w_in);
  local["b_in"] = detail::matrix_to_json(lb.b_in);
  local["w_eq"] = detail::matrix_to_json(lb.w_eq);
  local["w_ek"] = detail::matrix_to_json(lb.w_ek);
  local["w_ev"] = detail::matrix_to_json(lb.w_ev);
  local["w_dq"] = detail::matrix_to_json(lb.w_dq);
  local["w_dk"] = detail::matrix_to_json(lb.w_dk);
  local["w_dv"] = detail::matrix_to_json(lb.w_dv);
  local["w_out"] = detail::matrix_to_json(lb.w_out);
  local["b_out"] = lb.b_out;

  return nlohmann::json{{"quantile", model.quantile},
                        {"seed", model.seed},
                        {"final_train_loss", model.final_train_loss},
                        {"fourier", std::move(fourier)},
                        {"local", std::move(local)}};
}

inline ForecastModel model_from_json(const nlohmann::json& j) {
  ForecastModel model;
  model.quantile = j.at("quantile").get<double>();
  model.seed = j.at("seed").get<std::uint64_t>();
  model.final_train_loss = j.at("final_train_loss").get<double>();

  const auto& jf = j.at("fourier");
  model.fourier.periods = jf.at("periods").get<std::vector<double>>();
  model.fourier.order = jf.at("order").get<int>();
  for (const auto& co : jf.at("per_lra")) {
    FourierBlock::Coefficients c;
    c.a = co.at("a").get<std::vector<std::vector<double>>>();
    c.b = co.at("b").get<std::vector<std::vector<double>>>();
    model.fourier.per_lra.push_back(std::move(c));
  }

  const auto& jl = j.at("local");
  LocalBlock& lb = model.local;
  lb.context = jl.at("context").get<int>();
  lb.horizon = jl.at("horizon").get<int>();
  lb.d_model = jl.at("d_model").get<int>();
  lb.w_in = detail::matrix_from_json(jl.at("w_in"));
  lb.b_in = detail::matrix_from_json(jl.at("b_in"));
  lb.w_eq = detail::matrix_from_json(jl.at("w_eq"));
  lb.w_ek = detail::matrix_from_json(jl.at("w_ek"));
  lb.w_ev = detail::matrix_from_json(jl.at("w_ev"));
  lb.w_dq = detail::matrix_from_json(jl.at("w_dq"));
  lb.w_dk = detail::matrix_from_json(jl.at("w_dk"));
  lb.w_dv = detail::matrix_from_json(jl.at("w_dv"));
  lb.w_out = detail::matrix_from_json(jl.at("w_out"));
  lb.b_out = jl.at("b_out").get<double>();
  return model;
}

/// Versioned checkpoint holding the forecast model and (optionally) the
/// estimator state. JSON doubles round-trip exactly, so save/load is
/// lossless.
inline void save_checkpoint(const std::filesystem::path& path, const ForecastModel& model,
                            const CpuEstimator* estimator = nullptr) {
  nlohmann::json doc;
  doc["format"] = "scalelab-checkpoint";
  doc["version"] = 1;
  doc["forecast"] = model_to_json(model);
  if (estimator) doc["estimator"] = estimator_to_json(*estimator);
  write_file(path, doc.dump(1) + "\n");
}

struct Checkpoint {
  ForecastModel model;
  std::optional<CpuEstimator> estimator;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "scalelab-checkpoint" || doc.value("version", 0) != 1) {
    throw ParseError("checkpoint " + path.string() + ": unknown format/version");
  }
  Checkpoint out;
  out.model = model_from_json(doc.at("forecast"));
  if (doc.contains("estimator")) out.estimator = estimator_from_json(doc.at("estimator"));
  return out;
}

}  // namespace scalelab
