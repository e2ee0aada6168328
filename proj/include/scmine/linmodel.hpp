#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scmine/error.hpp"
#include "scmine/io.hpp"
#include "scmine/sparse.hpp"

// Regularized linear classifiers trained by deterministic full-batch
// optimization: gradient descent with backtracking line search for smooth
// objectives, proximal gradient (ISTA with backtracking) for L1. Training
// starts from zero weights, so identical inputs give bit-identical models.
//
// "Ridge" throughout means L2-regularized logistic regression.

namespace scmine::linmodel {

enum class Penalty { L2, L1, HingeL2 };

inline const char* to_string(Penalty p) {
  switch (p) {
    case Penalty::L2: return "l2";
    case Penalty::L1: return "l1";
    case Penalty::HingeL2: return "hinge_l2";
  }
  return "l2";
}

inline Penalty penalty_from_string(std::string_view s) {
  if (s == "l2" || s == "ridge") return Penalty::L2;
  if (s == "l1" || s == "lasso") return Penalty::L1;
  if (s == "hinge_l2" || s == "svm") return Penalty::HingeL2;
  throw Error("unknown penalty '" + std::string(s) + "'");
}

struct TrainConfig {
  int max_iter = 1000;
  double tol = 1e-6;        // sup-norm tolerance on the (composite) gradient
  double step_init = 1.0;   // initial line-search step
  double armijo_c = 1e-4;   // sufficient-decrease constant
  std::uint64_t seed = 0;   // unused by the deterministic solver, kept for config snapshots
};

struct LinearModel {
  std::vector<double> weights;
  double intercept = 0.0;
  Penalty penalty = Penalty::L2;
  double lambda = 0.0;
  int iterations = 0;
  double final_objective = 0.0;
};

namespace detail {

// ln(1 + exp(-m)) without overflow.
inline double softplus_neg(double margin) {
  if (margin > 0.0) return std::log1p(std::exp(-margin));
  return -margin + std::log1p(std::exp(margin));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Gradient {
  std::vector<double> w;
  double b = 0.0;
};

// Unpenalized data terms.
inline double data_loss(const std::vector<double>& w, double b, const SparseMatrix& X,
                        const std::vector<int>& y, bool hinge) {
  const double n = static_cast<double>(X.n_rows);
  double loss = 0.0;
  for (std::size_t i = 0; i < X.n_rows; ++i) {
    const double margin = y[i] * (X.dot_row(i, w) + b);
    loss += hinge ? std::max(0.0, 1.0 - margin) : softplus_neg(margin);
  }
  return loss / n;
}

inline Gradient data_grad(const std::vector<double>& w, double b, const SparseMatrix& X,
                          const std::vector<int>& y, bool hinge) {
  const double n = static_cast<double>(X.n_rows);
  Gradient g;
  g.w.assign(w.size(), 0.0);
  for (std::size_t i = 0; i < X.n_rows; ++i) {
    const double margin = y[i] * (X.dot_row(i, w) + b);
    double coeff;
    if (hinge) {
      coeff = (1.0 - margin > 0.0) ? -static_cast<double>(y[i]) / n : 0.0;
    } else {
      coeff = -static_cast<double>(y[i]) * sigmoid(-margin) / n;
    }
    if (coeff != 0.0) {
      X.axpy_row(i, coeff, g.w);
      g.b += coeff;
    }
  }
  return g;
}

inline double l2_sq(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += v * v;
  return s;
}

inline double l1_norm(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += std::abs(v);
  return s;
}

}  // namespace detail

// Full objective and (sub)gradient at (w, b). Logistic + L2:
// (1/N) sum ln(1+exp(-y f)) + lambda/2 ||w||^2. Logistic + L1: lambda ||w||_1
// with the sign subgradient reported (sign(0) = 0). Hinge:
// (1/N) sum max(0, 1 - y f) + lambda/2 ||w||^2. Intercept unpenalized.
inline std::pair<double, detail::Gradient> loss_and_grad(const std::vector<double>& w, double b,
                                                         const SparseMatrix& X,
                                                         const std::vector<int>& y,
                                                         Penalty penalty, double lambda) {
  if (y.size() != X.n_rows) throw Error("loss_and_grad: label count != row count");
  if (w.size() != X.n_cols) throw Error("loss_and_grad: weight count != column count");
  const bool hinge = penalty == Penalty::HingeL2;
  double obj = detail::data_loss(w, b, X, y, hinge);
  auto grad = detail::data_grad(w, b, X, y, hinge);
  switch (penalty) {
    case Penalty::L2:
    case Penalty::HingeL2:
      obj += 0.5 * lambda * detail::l2_sq(w);
      for (std::size_t j = 0; j < w.size(); ++j) grad.w[j] += lambda * w[j];
      break;
    case Penalty::L1:
      obj += lambda * detail::l1_norm(w);
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (w[j] > 0.0) grad.w[j] += lambda;
        else if (w[j] < 0.0) grad.w[j] -= lambda;
      }
      break;
  }
  return {obj, std::move(grad)};
}

namespace detail {

inline LinearModel train_smooth(const SparseMatrix& X, const std::vector<int>& y, Penalty penalty,
                                double lambda, const TrainConfig& cfg) {
  LinearModel model;
  model.penalty = penalty;
  model.lambda = lambda;
  model.weights.assign(X.n_cols, 0.0);

  auto objective = [&](const std::vector<double>& w, double b) {
    return data_loss(w, b, X, y, penalty == Penalty::HingeL2) + 0.5 * lambda * l2_sq(w);
  };

  double step = cfg.step_init;
  double f = objective(model.weights, model.intercept);
  std::vector<double> w_next(X.n_cols);
  int iter = 0;
  for (; iter < cfg.max_iter; ++iter) {
    auto [obj, g] = loss_and_grad(model.weights, model.intercept, X, y, penalty, lambda);
    f = obj;
    double g_inf = std::abs(g.b);
    double g_sq = g.b * g.b;
    for (double v : g.w) {
      g_inf = std::max(g_inf, std::abs(v));
      g_sq += v * v;
    }
    if (g_inf <= cfg.tol) break;

    bool accepted = false;
    double t = std::min(step * 2.0, 1e4);
    double b_next = 0.0;
    while (t >= 1e-20) {
      for (std::size_t j = 0; j < w_next.size(); ++j) w_next[j] = model.weights[j] - t * g.w[j];
      b_next = model.intercept - t * g.b;
      if (objective(w_next, b_next) <= f - cfg.armijo_c * t * g_sq) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // no descent step found (subgradient kink)
    model.weights.swap(w_next);
    model.intercept = b_next;
    step = t;
  }
  model.iterations = iter;
  model.final_objective = objective(model.weights, model.intercept);
  return model;
}

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// ISTA with backtracking on the smooth part; monotone in the composite
// objective.
inline LinearModel train_l1(const SparseMatrix& X, const std::vector<int>& y, double lambda,
                            const TrainConfig& cfg) {
  LinearModel model;
  model.penalty = Penalty::L1;
  model.lambda = lambda;
  model.weights.assign(X.n_cols, 0.0);

  auto smooth = [&](const std::vector<double>& w, double b) {
    return data_loss(w, b, X, y, /*hinge=*/false);
  };

  double step = cfg.step_init;
  std::vector<double> w_next(X.n_cols);
  int iter = 0;
  for (; iter < cfg.max_iter; ++iter) {
    const double f = smooth(model.weights, model.intercept);
    auto g = data_grad(model.weights, model.intercept, X, y, /*hinge=*/false);

    double t = std::min(step * 2.0, 1e4);
    double b_next = model.intercept;
    for (;;) {
      for (std::size_t j = 0; j < w_next.size(); ++j)
        w_next[j] = soft_threshold(model.weights[j] - t * g.w[j], t * lambda);
      b_next = model.intercept - t * g.b;
      double quad = 0.0, lin = 0.0;
      for (std::size_t j = 0; j < w_next.size(); ++j) {
        const double d = w_next[j] - model.weights[j];
        lin += g.w[j] * d;
        quad += d * d;
      }
      const double db = b_next - model.intercept;
      lin += g.b * db;
      quad += db * db;
      if (smooth(w_next, b_next) <= f + lin + quad / (2.0 * t) || t < 1e-20) break;
      t *= 0.5;
    }

    double move_inf = std::abs(b_next - model.intercept);
    for (std::size_t j = 0; j < w_next.size(); ++j)
      move_inf = std::max(move_inf, std::abs(w_next[j] - model.weights[j]));
    model.weights.swap(w_next);
    model.intercept = b_next;
    step = t;
    if (move_inf / t <= cfg.tol) {
      ++iter;
      break;
    }
  }
  model.iterations = iter;
  model.final_objective =
      smooth(model.weights, model.intercept) + lambda * l1_norm(model.weights);
  return model;
}

}  // namespace detail

inline LinearModel train(const SparseMatrix& X, const std::vector<int>& y, Penalty penalty,
                         double lambda, const TrainConfig& cfg = {}) {
  if (y.size() != X.n_rows) throw Error("train: label count != row count");
  bool has_pos = false, has_neg = false;
  for (int v : y) {
    if (v > 0) has_pos = true;
    else has_neg = true;
  }
  if (!has_pos || !has_neg) throw Error("train: need at least one positive and one negative example");
  if (penalty == Penalty::L1) return detail::train_l1(X, y, lambda, cfg);
  return detail::train_smooth(X, y, penalty, lambda, cfg);
}

// sigmoid(w.x + b). For hinge models this is a monotone score, not a
// calibrated probability.
inline std::vector<double> predict_proba(const LinearModel& model, const SparseMatrix& X) {
  if (model.weights.size() != X.n_cols) throw Error("predict_proba: column count mismatch");
  std::vector<double> p(X.n_rows);
  for (std::size_t i = 0; i < X.n_rows; ++i)
    p[i] = detail::sigmoid(X.dot_row(i, model.weights) + model.intercept);
  return p;
}

struct OvRModel {
  std::vector<std::string> class_names;  // excludes "other"
  std::vector<LinearModel> models;       // one per class
  double other_threshold = 0.5;
};

// One binary model per kept class (y = +1 iff label == class). Documents
// labeled anything else, including "other", are negatives. Per-class
// problems are independent and train concurrently; assembly order is fixed.
inline OvRModel train_ovr(const SparseMatrix& X, const std::vector<std::string>& labels,
                          const std::vector<std::string>& class_names, Penalty penalty,
                          double lambda, const TrainConfig& cfg = {},
                          double other_threshold = 0.5) {
  if (labels.size() != X.n_rows) throw Error("train_ovr: label count != row count");
  if (class_names.size() < 1) throw Error("train_ovr: no classes");
  OvRModel ovr;
  ovr.class_names = class_names;
  ovr.other_threshold = other_threshold;

  std::vector<std::future<LinearModel>> futures;
  futures.reserve(class_names.size());
  for (const auto& cls : class_names) {
    futures.push_back(std::async(std::launch::async, [&, cls] {
      std::vector<int> y(labels.size());
      std::size_t positives = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        y[i] = labels[i] == cls ? 1 : -1;
        if (y[i] > 0) ++positives;
      }
      if (positives == 0) throw Error("train_ovr: class '" + cls + "' has no positive examples");
      return train(X, y, penalty, lambda, cfg);
    }));
  }
  for (auto& f : futures) ovr.models.push_back(f.get());
  return ovr;
}

struct OvRPrediction {
  std::vector<std::vector<double>> scores;  // row x class
  std::vector<std::string> assigned;        // argmax class or "other"
};

inline OvRPrediction predict_ovr(const OvRModel& ovr, const SparseMatrix& X,
                                 const std::string& other_name = "other") {
  OvRPrediction out;
  out.scores.assign(X.n_rows, std::vector<double>(ovr.class_names.size(), 0.0));
  for (std::size_t c = 0; c < ovr.models.size(); ++c) {
    auto p = predict_proba(ovr.models[c], X);
    for (std::size_t i = 0; i < X.n_rows; ++i) out.scores[i][c] = p[i];
  }
  out.assigned.resize(X.n_rows);
  for (std::size_t i = 0; i < X.n_rows; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < ovr.class_names.size(); ++c)
      if (out.scores[i][c] > out.scores[i][best]) best = c;  // ties keep class order
    out.assigned[i] =
        out.scores[i][best] >= ovr.other_threshold ? ovr.class_names[best] : other_name;
  }
  return out;
}

inline nlohmann::json model_to_json(const LinearModel& m) {
  nlohmann::json weights = nlohmann::json::array();
  for (std::size_t j = 0; j < m.weights.size(); ++j)
    if (m.weights[j] != 0.0) weights.push_back({j, m.weights[j]});
  return nlohmann::json{{"penalty", to_string(m.penalty)},
                        {"lambda", m.lambda},
                        {"intercept", m.intercept},
                        {"n_features", m.weights.size()},
                        {"weights", std::move(weights)},
                        {"iterations", m.iterations},
                        {"final_objective", m.final_objective}};
}

inline LinearModel model_from_json(const nlohmann::json& j) {
  LinearModel m;
  m.penalty = penalty_from_string(j.at("penalty").get<std::string>());
  m.lambda = j.at("lambda").get<double>();
  m.intercept = j.at("intercept").get<double>();
  m.weights.assign(j.at("n_features").get<std::size_t>(), 0.0);
  for (const auto& e : j.at("weights")) m.weights.at(e[0].get<std::size_t>()) = e[1].get<double>();
  m.iterations = j.value("iterations", 0);
  m.final_objective = j.value("final_objective", 0.0);
  return m;
}

inline nlohmann::json ovr_to_json(const OvRModel& ovr) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : ovr.models) models.push_back(model_to_json(m));
  return nlohmann::json{{"class_names", ovr.class_names},
                        {"other_threshold", ovr.other_threshold},
                        {"models", std::move(models)}};
}

inline OvRModel ovr_from_json(const nlohmann::json& j) {
  OvRModel ovr;
  ovr.class_names = j.at("class_names").get<std::vector<std::string>>();
  ovr.other_threshold = j.at("other_threshold").get<double>();
  for (const auto& mj : j.at("models")) ovr.models.push_back(model_from_json(mj));
  if (ovr.models.size() != ovr.class_names.size())
    throw Error("model file: class/model count mismatch");
  return ovr;
}

}  // namespace scmine::linmodel
