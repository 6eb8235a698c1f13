#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ngt/decomp.hpp"
#include "ngt/prng.hpp"

namespace ngt {

struct TrainConfig {
  std::size_t epochs = 20;
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::uint64_t shuffle_seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["epochs"] = epochs;
    j["learning_rate"] = learning_rate;
    j["batch_size"] = batch_size;
    j["shuffle_seed"] = shuffle_seed;
    return j;
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", std::size_t{20});
    c.learning_rate = j.value("learning_rate", 1e-4);
    c.batch_size = j.value("batch_size", std::size_t{32});
    c.shuffle_seed = j.value("shuffle_seed", std::uint64_t{0});
    return c;
  }
};

/// Fully connected k -> 48 -> 64 -> 32 -> 1 network, ReLU between layers,
/// sigmoid on the single output unit.
struct MlpModel {
  std::vector<std::size_t> layer_dims;          // [k, 48, 64, 32, 1]
  std::vector<std::vector<double>> weights;     // row-major out x in per layer
  std::vector<std::vector<double>> biases;      // out per layer
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return layer_dims.empty() ? 0 : layer_dims.front(); }
  std::size_t layer_count() const { return weights.size(); }
};

inline constexpr std::size_t kHiddenDims[3] = {48, 64, 32};

/// Seeded uniform init scaled by 1/sqrt(fan_in): U(-sqrt(3/fan_in),
/// +sqrt(3/fan_in)), which has variance exactly 1/fan_in. Biases start at 0.
inline MlpModel init_model(std::size_t k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("input dimension must be >= 1");
  MlpModel m;
  m.seed = seed;
  m.layer_dims = {k, kHiddenDims[0], kHiddenDims[1], kHiddenDims[2], 1};
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    std::size_t fan_in = m.layer_dims[l];
    std::size_t fan_out = m.layer_dims[l + 1];
    double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    std::vector<double> w(fan_out * fan_in);
    for (auto& x : w) x = rng.uniform(-bound, bound);
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::vector<double>(fan_out, 0.0));
  }
  return m;
}

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) {
    double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

struct ForwardTrace {
  std::vector<std::vector<double>> activations;      // a0 = x ... a_{L-1}
  std::vector<std::vector<double>> preactivations;   // z1 ... z_L
  double p = 0.5;
};

inline ForwardTrace forward_trace(const MlpModel& m, const std::vector<double>& x) {
  if (x.size() != m.input_dim())
    throw std::invalid_argument("forward: input dimension mismatch");
  ForwardTrace tr;
  tr.activations.push_back(x);
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    std::size_t in = m.layer_dims[l];
    std::size_t out = m.layer_dims[l + 1];
    const auto& a = tr.activations.back();
    std::vector<double> z(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = m.biases[l][o];
      const double* wrow = m.weights[l].data() + o * in;
      for (std::size_t i = 0; i < in; ++i) s += wrow[i] * a[i];
      z[o] = s;
    }
    bool last = (l + 1 == m.layer_count());
    std::vector<double> act(out);
    if (last) {
      tr.p = sigmoid(z[0]);
      act[0] = tr.p;
    } else {
      for (std::size_t o = 0; o < out; ++o) act[o] = std::max(z[o], 0.0);
    }
    tr.preactivations.push_back(std::move(z));
    tr.activations.push_back(std::move(act));
  }
  return tr;
}

}  // namespace detail

inline double forward(const MlpModel& m, const std::vector<double>& x) {
  return detail::forward_trace(m, x).p;
}

/// -(y ln p + (1-y) ln(1-p)) with p clamped to [1e-12, 1-1e-12].
inline double bce_loss(double p, int y) {
  const double eps = 1e-12;
  p = std::clamp(p, eps, 1.0 - eps);
  return -(y ? std::log(p) : std::log(1.0 - p));
}

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const MlpModel& m) {
    Gradients g;
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
      g.weights.emplace_back(m.weights[l].size(), 0.0);
      g.biases.emplace_back(m.biases[l].size(), 0.0);
    }
    return g;
  }
};

/// Backpropagation over one batch. Gradients are SUMS over the batch members
/// (not means); the returned value is the summed BCE loss.
inline double batch_loss_and_gradients(const MlpModel& m,
                                       const std::vector<std::vector<double>>& xs,
                                       const std::vector<int>& ys,
                                       const std::vector<std::size_t>& batch,
                                       Gradients& grads) {
  grads = Gradients::zeros_like(m);
  double loss_sum = 0.0;
  const std::size_t layers = m.layer_count();
  for (std::size_t idx : batch) {
    detail::ForwardTrace tr = detail::forward_trace(m, xs[idx]);
    loss_sum += bce_loss(tr.p, ys[idx]);

    // Output delta for sigmoid + BCE collapses to p - y.
    std::vector<double> delta(1, tr.p - static_cast<double>(ys[idx]));
    for (std::size_t l = layers; l-- > 0;) {
      std::size_t in = m.layer_dims[l];
      std::size_t out = m.layer_dims[l + 1];
      const auto& a_prev = tr.activations[l];
      for (std::size_t o = 0; o < out; ++o) {
        double d = delta[o];
        if (d == 0.0) continue;
        grads.biases[l][o] += d;
        double* grow = grads.weights[l].data() + o * in;
        for (std::size_t i = 0; i < in; ++i) grow[i] += d * a_prev[i];
      }
      if (l == 0) break;
      std::vector<double> delta_prev(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        double d = delta[o];
        if (d == 0.0) continue;
        const double* wrow = m.weights[l].data() + o * in;
        for (std::size_t i = 0; i < in; ++i) delta_prev[i] += wrow[i] * d;
      }
      const auto& z_prev = tr.preactivations[l - 1];
      for (std::size_t i = 0; i < in; ++i)
        if (z_prev[i] <= 0.0) delta_prev[i] = 0.0;
      delta = std::move(delta_prev);
    }
  }
  return loss_sum;
}

struct TrainResult {
  std::vector<double> epoch_mean_loss;
};

/// Mini-batch SGD, w <- w - lr * grad, grad summed over the batch. Shuffling
/// is driven by one generator seeded with shuffle_seed, so results are a pure
/// function of (data order, seeds, config). epochs = 0 leaves the model
/// bitwise untouched.
inline TrainResult train(MlpModel& m, const std::vector<std::vector<double>>& xs,
                         const std::vector<int>& ys, const TrainConfig& cfg) {
  if (xs.size() != ys.size())
    throw std::invalid_argument("train: feature/label count mismatch");
  if (xs.empty()) throw std::invalid_argument("train: empty training set");
  for (const auto& x : xs)
    if (x.size() != m.input_dim())
      throw std::invalid_argument("train: feature length does not match model input");
  bool has_pos = false, has_neg = false;
  for (int y : ys) (y ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw std::invalid_argument("degenerate training set");
  if (cfg.learning_rate <= 0.0)
    throw std::invalid_argument("train: learning rate must be positive");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");

  TrainResult result;
  Rng rng(cfg.shuffle_seed);
  std::vector<std::size_t> order(xs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Gradients grads;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
      loss_sum += batch_loss_and_gradients(m, xs, ys, batch, grads);
      for (std::size_t l = 0; l < m.layer_count(); ++l) {
        for (std::size_t i = 0; i < m.weights[l].size(); ++i)
          m.weights[l][i] -= cfg.learning_rate * grads.weights[l][i];
        for (std::size_t i = 0; i < m.biases[l].size(); ++i)
          m.biases[l][i] -= cfg.learning_rate * grads.biases[l][i];
      }
    }
    double mean_loss = loss_sum / static_cast<double>(xs.size());
    if (!std::isfinite(mean_loss))
      throw std::runtime_error("train: loss went non-finite at epoch " +
                               std::to_string(epoch + 1));
    result.epoch_mean_loss.push_back(mean_loss);
  }
  return result;
}

inline TrainResult train(MlpModel& m, const std::vector<FeatureVector>& data,
                         const TrainConfig& cfg) {
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  xs.reserve(data.size());
  ys.reserve(data.size());
  for (const auto& fv : data) {
    xs.push_back(fv.values);
    ys.push_back(fv.label);
  }
  return train(m, xs, ys, cfg);
}

struct Prediction {
  double probability = 0.5;
  int label = 1;  // p >= 0.5 predicts the positive (hallucinated) class
};

inline Prediction predict(const MlpModel& m, const std::vector<double>& x) {
  Prediction pr;
  pr.probability = forward(m, x);
  pr.label = pr.probability >= 0.5 ? 1 : 0;
  return pr;
}

/// Per-dimension z-score fitted on training features. Dimensions with nearly
/// zero spread divide by 1 instead.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(const std::vector<std::vector<double>>& xs) {
    if (xs.empty()) throw std::invalid_argument("standardizer: empty feature set");
    std::size_t d = xs.front().size();
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 0.0);
    for (const auto& x : xs) {
      if (x.size() != d) throw std::invalid_argument("standardizer: ragged features");
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += x[j];
    }
    for (double& v : s.mean) v /= static_cast<double>(xs.size());
    for (const auto& x : xs)
      for (std::size_t j = 0; j < d; ++j) {
        double c = x[j] - s.mean[j];
        s.stddev[j] += c * c;
      }
    for (double& v : s.stddev) {
      v = std::sqrt(v / static_cast<double>(xs.size()));
      if (v < 1e-12) v = 1.0;
    }
    return s;
  }

  std::vector<double> transform(const std::vector<double>& x) const {
    if (x.size() != mean.size())
      throw std::invalid_argument("standardizer: dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / stddev[j];
    return out;
  }
};

/// Standardization statistics + network weights persisted together so a saved
/// model scores raw feature vectors exactly as the training run did.
struct TrainedClassifier {
  Standardizer scaler;
  MlpModel model;

  Prediction predict(const std::vector<double>& raw) const {
    return ngt::predict(model, scaler.transform(raw));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["layer_dims"] = model.layer_dims;
    j["weights"] = model.weights;
    j["biases"] = model.biases;
    j["init_seed"] = model.seed;
    j["scaler_mean"] = scaler.mean;
    j["scaler_stddev"] = scaler.stddev;
    return j;
  }

  static TrainedClassifier from_json(const nlohmann::json& j) {
    TrainedClassifier c;
    c.model.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    c.model.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    c.model.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    c.model.seed = j.value("init_seed", std::uint64_t{0});
    c.scaler.mean = j.at("scaler_mean").get<std::vector<double>>();
    c.scaler.stddev = j.at("scaler_stddev").get<std::vector<double>>();
    return c;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write model file " + path);
    os << to_json().dump(2) << '\n';
  }

  static TrainedClassifier load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read model file " + path);
    nlohmann::json j;
    is >> j;
    return from_json(j);
  }
};

/// Fit the scaler on the raw training features, then train the network on the
/// standardized copies.
inline TrainedClassifier train_classifier(const std::vector<FeatureVector>& data,
                                          const TrainConfig& cfg,
                                          std::uint64_t init_seed,
                                          TrainResult* trace = nullptr) {
  if (data.empty()) throw std::invalid_argument("train: empty training set");
  std::vector<std::vector<double>> raw;
  std::vector<int> ys;
  for (const auto& fv : data) {
    raw.push_back(fv.values);
    ys.push_back(fv.label);
  }
  TrainedClassifier clf;
  clf.scaler = Standardizer::fit(raw);
  std::vector<std::vector<double>> xs;
  xs.reserve(raw.size());
  for (const auto& x : raw) xs.push_back(clf.scaler.transform(x));
  clf.model = init_model(raw.front().size(), init_seed);
  TrainResult tr = train(clf.model, xs, ys, cfg);
  if (trace) *trace = std::move(tr);
  return clf;
}

}  // namespace ngt
