#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "biascope/matrix.hpp"

namespace biascope {

struct TrainConfig {
  double lr = 0.2;
  std::size_t max_epochs = 500;
  std::size_t patience = 25;
  // The full-batch trainer draws no random numbers (zero initialization);
  // the seed is carried for API symmetry with stochastic trainers.
  std::uint64_t seed = 0;
};

/// Multinomial logistic model over a fixed class space [0, K). Classes
/// absent from the training data are recorded and receive probability 0.
struct PredictorModel {
  std::size_t n_classes = 0;
  std::size_t n_features = 0;
  Matrix weights;             // K x d
  std::vector<double> bias;   // K
  std::vector<bool> class_present;
  std::size_t epochs_run = 0;
  double final_val_loss = 0.0;

  /// Stable softmax over present classes; absent classes get exactly 0.
  void predict_proba(std::span<const double> x,
                     std::span<double> out_probs) const {
    double max_logit = -std::numeric_limits<double>::infinity();
    std::vector<double> logits(n_classes, 0.0);
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (!class_present[c]) continue;
      double z = bias[c];
      const auto w = weights.row(c);
      for (std::size_t j = 0; j < n_features; ++j) z += w[j] * x[j];
      logits[c] = z;
      max_logit = std::max(max_logit, z);
    }
    double total = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      out_probs[c] =
          class_present[c] ? std::exp(logits[c] - max_logit) : 0.0;
      total += out_probs[c];
    }
    for (std::size_t c = 0; c < n_classes; ++c) out_probs[c] /= total;
  }

  /// Lowest class code among the maxima, so ties resolve deterministically.
  static std::int32_t argmax_class(std::span<const double> probs) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c)
      if (probs[c] > probs[best]) best = c;
    return static_cast<std::int32_t>(best);
  }
};

/// Weighted mean cross-entropy: sum_i w_i * (-ln p_i[y_i]) / sum_i w_i.
inline double weighted_cross_entropy(const PredictorModel& model,
                                     const Matrix& x,
                                     std::span<const std::int32_t> codes,
                                     std::span<const double> weights) {
  if (x.rows != codes.size() || x.rows != weights.size())
    throw std::invalid_argument("cross_entropy: length mismatch");
  double loss = 0.0, weight_total = 0.0;
  std::vector<double> probs(model.n_classes);
  for (std::size_t i = 0; i < x.rows; ++i) {
    model.predict_proba(x.row(i), probs);
    const double p = probs[static_cast<std::size_t>(codes[i])];
    loss += weights[i] * -std::log(std::max(p, 1e-300));
    weight_total += weights[i];
  }
  return loss / weight_total;
}

/// Inverse-frequency class weights over `codes` within a fixed class space:
/// w_i = 1 / count(class of i). Absent classes get weight 0 wherever used.
inline std::vector<double> inverse_frequency_weights(
    std::span<const std::int32_t> codes, std::size_t n_classes) {
  std::vector<double> class_count(n_classes, 0.0);
  for (std::int32_t c : codes) {
    if (c < 0 || static_cast<std::size_t>(c) >= n_classes)
      throw std::invalid_argument("weights: code outside class space");
    class_count[static_cast<std::size_t>(c)] += 1.0;
  }
  std::vector<double> weights(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i)
    weights[i] = 1.0 / class_count[static_cast<std::size_t>(codes[i])];
  return weights;
}

/// Full-batch gradient descent on class-weighted cross-entropy, with early
/// stopping on the validation loss (class weights from the training data).
/// Parameters returned are those of the best validation epoch. If the
/// validation set is empty, the training loss takes its place.
inline PredictorModel train_baseline(const Matrix& x_train,
                                     std::span<const std::int32_t> a_train,
                                     const Matrix& x_val,
                                     std::span<const std::int32_t> a_val,
                                     std::size_t n_classes,
                                     const TrainConfig& config) {
  if (x_train.rows != a_train.size())
    throw std::invalid_argument("train: feature/code length mismatch");
  if (x_val.rows != a_val.size())
    throw std::invalid_argument("train: validation length mismatch");
  if (x_train.rows == 0) throw std::invalid_argument("train: no rows");
  if (n_classes < 2)
    throw std::invalid_argument("train: class space must have >= 2 classes");

  PredictorModel model;
  model.n_classes = n_classes;
  model.n_features = x_train.cols;
  model.weights = Matrix(n_classes, x_train.cols);
  model.bias.assign(n_classes, 0.0);
  model.class_present.assign(n_classes, false);
  for (std::int32_t c : a_train) {
    if (c < 0 || static_cast<std::size_t>(c) >= n_classes)
      throw std::invalid_argument("train: code outside class space");
    model.class_present[static_cast<std::size_t>(c)] = true;
  }
  if (std::count(model.class_present.begin(), model.class_present.end(),
                 true) < 2)
    throw std::invalid_argument("train: single-class training data");

  const std::vector<double> train_weights =
      inverse_frequency_weights(a_train, n_classes);
  const double train_weight_total =
      std::accumulate(train_weights.begin(), train_weights.end(), 0.0);

  // Validation rows reuse the training class weights; a validation-only
  // class would get weight 0, so fall back to weight 1 for those rows.
  std::vector<double> train_class_count(n_classes, 0.0);
  for (std::int32_t c : a_train)
    train_class_count[static_cast<std::size_t>(c)] += 1.0;
  std::vector<double> val_weights(a_val.size());
  for (std::size_t i = 0; i < a_val.size(); ++i) {
    const double count = train_class_count[static_cast<std::size_t>(a_val[i])];
    val_weights[i] = count > 0 ? 1.0 / count : 1.0;
  }

  const bool has_val = x_val.rows > 0;
  auto eval_loss = [&]() {
    return has_val ? weighted_cross_entropy(model, x_val, a_val, val_weights)
                   : weighted_cross_entropy(model, x_train, a_train,
                                            train_weights);
  };

  Matrix best_weights = model.weights;
  std::vector<double> best_bias = model.bias;
  double best_loss = eval_loss();
  std::size_t since_best = 0;

  Matrix grad_w(n_classes, x_train.cols);
  std::vector<double> grad_b(n_classes);
  std::vector<double> probs(n_classes);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::fill(grad_w.data.begin(), grad_w.data.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t i = 0; i < x_train.rows; ++i) {
      model.predict_proba(x_train.row(i), probs);
      const auto xi = x_train.row(i);
      const double wi = train_weights[i];
      for (std::size_t c = 0; c < n_classes; ++c) {
        if (!model.class_present[c]) continue;
        const double delta =
            wi * (probs[c] -
                  (static_cast<std::size_t>(a_train[i]) == c ? 1.0 : 0.0));
        grad_b[c] += delta;
        auto gw = grad_w.row(c);
        for (std::size_t j = 0; j < x_train.cols; ++j)
          gw[j] += delta * xi[j];
      }
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
      model.bias[c] -= config.lr * grad_b[c] / train_weight_total;
      auto w = model.weights.row(c);
      const auto gw = grad_w.row(c);
      for (std::size_t j = 0; j < x_train.cols; ++j)
        w[j] -= config.lr * gw[j] / train_weight_total;
    }

    const double loss = eval_loss();
    if (!std::isfinite(loss))
      throw std::runtime_error("train: non-finite loss at epoch " +
                               std::to_string(epoch) +
                               " (learning rate too high?)");
    model.epochs_run = epoch;
    if (loss < best_loss) {
      best_loss = loss;
      best_weights = model.weights;
      best_bias = model.bias;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  model.weights = std::move(best_weights);
  model.bias = std::move(best_bias);
  model.final_val_loss = best_loss;
  return model;
}

}  // namespace biascope
