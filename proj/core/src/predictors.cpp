#include "cwc/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "cwc/errors.hpp"

namespace cwc {

namespace {

template <typename T>
void check_targets(std::size_t rows, std::span<const ClassIndex> targets, std::size_t classes,
                   const char* what) {
  if (targets.size() != rows) {
    throw ConfigError(std::string(what) + ": " + std::to_string(targets.size()) +
                      " targets for " + std::to_string(rows) + " rows");
  }
  for (ClassIndex t : targets) {
    if (t >= classes) {
      throw ConfigError(std::string(what) + ": target " + std::to_string(t) + " >= " +
                        std::to_string(classes) + " classes");
    }
  }
}

double sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& values, const char* what) {
  if (!values.allFinite()) {
    throw NumericalError(std::string(what) + ": non-finite input features");
  }
}

template <typename T>
std::span<T> as_span(RowMatrix<T>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename T>
std::span<T> as_span(ColVector<T>& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
template <typename T>
std::span<const T> as_span(const RowMatrix<T>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename T>
std::span<const T> as_span(const ColVector<T>& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

AdamState dense_adam(const DenseParams<float>& params, AdamConfig optimizer) {
  const std::size_t sizes[] = {static_cast<std::size_t>(params.weights.size()),
                               static_cast<std::size_t>(params.bias.size())};
  return AdamState(sizes, optimizer);
}

}  // namespace

template <typename T>
SoftmaxGradients<T> softmax_cross_entropy(const RowMatrix<T>& weights, const ColVector<T>& bias,
                                          const Eigen::Ref<const RowMatrix<T>>& features,
                                          std::span<const ClassIndex> targets) {
  const auto rows = static_cast<std::size_t>(features.rows());
  const auto classes = static_cast<std::size_t>(weights.rows());
  check_targets<T>(rows, targets, classes, "softmax_cross_entropy");
  if (weights.cols() != features.cols() || bias.size() != weights.rows()) {
    throw ConfigError("softmax head expects " + std::to_string(weights.cols()) +
                      " features, got " + std::to_string(features.cols()));
  }
  RowMatrix<T> logits = features * weights.transpose();
  logits.rowwise() += bias.transpose();

  SoftmaxGradients<T> out;
  RowMatrix<T> grad_logits(logits.rows(), logits.cols());
  const double inv_n = 1.0 / static_cast<double>(rows);
  double loss = 0.0;
  for (Eigen::Index n = 0; n < logits.rows(); ++n) {
    const double peak = static_cast<double>(logits.row(n).maxCoeff());
    double total = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      total += std::exp(static_cast<double>(logits(n, j)) - peak);
    }
    const auto target = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(n)]);
    loss += peak + std::log(total) - static_cast<double>(logits(n, target));
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double p = std::exp(static_cast<double>(logits(n, j)) - peak) / total;
      grad_logits(n, j) = static_cast<T>((p - (j == target ? 1.0 : 0.0)) * inv_n);
    }
  }
  out.loss = static_cast<T>(loss * inv_n);
  out.grad_weights = grad_logits.transpose() * features;
  out.grad_bias = grad_logits.colwise().sum().transpose();
  return out;
}

SoftmaxHead::SoftmaxHead(std::size_t features, std::size_t classes, AdamConfig optimizer)
    : weights_(RowMatrix<float>::Zero(static_cast<Eigen::Index>(classes),
                                      static_cast<Eigen::Index>(features))),
      bias_(ColVector<float>::Zero(static_cast<Eigen::Index>(classes))) {
  const std::size_t sizes[] = {features * classes, classes};
  adam_ = AdamState(sizes, optimizer);
}

float SoftmaxHead::train_step(const FeatureTensor& features,
                              std::span<const ClassIndex> targets) {
  const auto rows = flatten_rows(features);
  require_finite(rows, "softmax head");
  SoftmaxGradients<float> grads = softmax_cross_entropy<float>(weights_, bias_, rows, targets);
  if (!std::isfinite(grads.loss)) {
    throw NumericalError("softmax head: non-finite loss");
  }
  const ParameterSlot slots[] = {{as_span(weights_), as_span(std::as_const(grads.grad_weights))},
                                 {as_span(bias_), as_span(std::as_const(grads.grad_bias))}};
  adam_step(slots, adam_, "softmax head");
  return grads.loss;
}

std::vector<Prediction> SoftmaxHead::predict(const FeatureTensor& features) const {
  const auto rows = flatten_rows(features);
  if (static_cast<std::size_t>(rows.cols()) != this->features()) {
    throw ConfigError("softmax head expects " + std::to_string(this->features()) +
                      " features, got " + std::to_string(rows.cols()));
  }
  RowMatrix<float> logits = rows * weights_.transpose();
  logits.rowwise() += bias_.transpose();
  std::vector<Prediction> out(features.n());
  for (std::size_t n = 0; n < out.size(); ++n) {
    const auto row = logits.row(static_cast<Eigen::Index>(n));
    out[n].scores.assign(row.data(), row.data() + row.size());
    out[n].label = argmax_lowest(std::span<const float>(out[n].scores));
  }
  return out;
}

template <typename T>
DenseGoodnessResult<T> dense_goodness_loss(const DenseParams<T>& params,
                                           const Eigen::Ref<const RowMatrix<T>>& x,
                                           std::span<const OverlayView> views,
                                           std::size_t classes, T theta) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index features = x.cols();
  const Eigen::Index units = params.weights.rows();
  bool overlay = false;
  std::size_t total_rows = 0;
  for (const OverlayView& view : views) {
    if (view.positive.size() != static_cast<std::size_t>(rows) ||
        (!view.labels.empty() && view.labels.size() != static_cast<std::size_t>(rows))) {
      throw ConfigError("overlay view does not match the " + std::to_string(rows) +
                        " input rows");
    }
    overlay = overlay || !view.labels.empty();
    total_rows += view.positive.size();
  }
  const Eigen::Index expected_cols =
      features + (overlay ? static_cast<Eigen::Index>(classes) : Eigen::Index{0});
  if (params.weights.cols() != expected_cols || params.bias.size() != units) {
    throw ConfigError("dense layer of shape " + std::to_string(params.weights.rows()) + "x" +
                      std::to_string(params.weights.cols()) + " given " +
                      std::to_string(expected_cols) + " inputs");
  }
  if (total_rows == 0) {
    throw ConfigError("dense goodness loss needs at least one row");
  }

  RowMatrix<T> base = x * params.weights.leftCols(features).transpose();
  base.rowwise() += params.bias.transpose();

  DenseGoodnessResult<T> out;
  RowMatrix<T> grad_pre_sum = RowMatrix<T>::Zero(rows, units);
  RowMatrix<T> grad_overlay = RowMatrix<T>::Zero(units, overlay ? static_cast<Eigen::Index>(classes) : 0);
  const double inv_rows = 1.0 / static_cast<double>(total_rows);
  const double inv_units = 1.0 / static_cast<double>(units);
  double loss = 0.0;

  for (const OverlayView& view : views) {
    RowMatrix<T> hidden = base;
    if (!view.labels.empty()) {
      for (Eigen::Index n = 0; n < rows; ++n) {
        const ClassIndex label = view.labels[static_cast<std::size_t>(n)];
        if (label >= classes) {
          throw ConfigError("overlay label " + std::to_string(label) + " >= " +
                            std::to_string(classes) + " classes");
        }
        hidden.row(n) += params.weights.col(features + static_cast<Eigen::Index>(label)).transpose();
      }
    }
    hidden = hidden.cwiseMax(T{0});
    ColVector<T> goodness = hidden.rowwise().squaredNorm() * static_cast<T>(inv_units);

    RowMatrix<T> grad_pre(rows, units);
    for (Eigen::Index n = 0; n < rows; ++n) {
      const double g = static_cast<double>(goodness(n));
      const bool positive = view.positive[static_cast<std::size_t>(n)] != 0;
      const double arg = positive ? static_cast<double>(theta) - g : g - static_cast<double>(theta);
      loss += softplus(arg);
      const double d_goodness = (positive ? -sigmoid(arg) : sigmoid(arg)) * inv_rows;
      grad_pre.row(n) = hidden.row(n) * static_cast<T>(2.0 * d_goodness * inv_units);
    }
    grad_pre_sum += grad_pre;
    if (!view.labels.empty()) {
      for (Eigen::Index n = 0; n < rows; ++n) {
        grad_overlay.col(static_cast<Eigen::Index>(view.labels[static_cast<std::size_t>(n)])) +=
            grad_pre.row(n).transpose();
      }
    }
    out.goodness.push_back(std::move(goodness));
    out.hidden.push_back(std::move(hidden));
  }

  out.loss = static_cast<T>(loss * inv_rows);
  out.grad_weights.resize(units, expected_cols);
  out.grad_weights.leftCols(features).noalias() = grad_pre_sum.transpose() * x;
  if (overlay) {
    out.grad_weights.rightCols(static_cast<Eigen::Index>(classes)) = grad_overlay;
  }
  out.grad_bias = grad_pre_sum.colwise().sum().transpose();
  return out;
}

template <typename T>
RowMatrix<T> normalize_rows(const RowMatrix<T>& rows) {
  RowMatrix<T> out = rows;
  for (Eigen::Index n = 0; n < out.rows(); ++n) {
    const T norm = out.row(n).norm();
    if (norm > T{0}) {
      out.row(n) /= norm;
    }
  }
  return out;
}

GoodnessHead::GoodnessHead(std::size_t features, std::size_t classes, GoodnessHeadConfig config,
                           AdamConfig optimizer, std::uint64_t seed)
    : features_(features), classes_(classes), config_(config), rng_(seed) {
  if (classes < 2 || config.hidden == 0) {
    throw ConfigError("goodness head needs >= 2 classes and >= 1 hidden unit");
  }
  const Eigen::Index hidden = static_cast<Eigen::Index>(config.hidden);
  const Eigen::Index inputs[] = {static_cast<Eigen::Index>(features + classes), hidden};
  for (std::size_t l = 0; l < 2; ++l) {
    const float bound = std::sqrt(6.0f / static_cast<float>(inputs[l]));
    std::uniform_real_distribution<float> dist(-bound, bound);
    layers_[l].weights.resize(hidden, inputs[l]);
    for (Eigen::Index i = 0; i < layers_[l].weights.size(); ++i) {
      layers_[l].weights.data()[i] = dist(rng_);
    }
    layers_[l].bias = ColVector<float>::Zero(hidden);
    adam_[l] = dense_adam(layers_[l], optimizer);
  }
}

float GoodnessHead::train_step(const FeatureTensor& features,
                               std::span<const ClassIndex> targets) {
  check_targets<float>(features.n(), targets, classes_, "goodness head");
  std::uniform_int_distribution<ClassIndex> pick(0, static_cast<ClassIndex>(classes_ - 2));
  std::vector<ClassIndex> negatives(targets.size());
  for (std::size_t n = 0; n < targets.size(); ++n) {
    const ClassIndex r = pick(rng_);
    negatives[n] = r >= targets[n] ? r + 1 : r;
  }
  return train_step(features, targets, negatives);
}

float GoodnessHead::train_step(const FeatureTensor& features, std::span<const ClassIndex> targets,
                               std::span<const ClassIndex> negatives) {
  check_targets<float>(features.n(), targets, classes_, "goodness head");
  check_targets<float>(features.n(), negatives, classes_, "goodness head negatives");
  const auto flat = flatten_rows(features);
  require_finite(flat, "goodness head");
  if (static_cast<std::size_t>(flat.cols()) != features_) {
    throw ConfigError("goodness head expects " + std::to_string(features_) +
                      " features, got " + std::to_string(flat.cols()));
  }
  const RowMatrix<float> x = normalize_rows<float>(flat);
  const std::size_t n = features.n();

  const OverlayView first_views[] = {
      {std::vector<ClassIndex>(targets.begin(), targets.end()), std::vector<std::uint8_t>(n, 1)},
      {std::vector<ClassIndex>(negatives.begin(), negatives.end()),
       std::vector<std::uint8_t>(n, 0)},
  };
  DenseGoodnessResult<float> first =
      dense_goodness_loss<float>(layers_[0], x, first_views, classes_, config_.theta);

  RowMatrix<float> second_input(static_cast<Eigen::Index>(2 * n),
                                static_cast<Eigen::Index>(config_.hidden));
  second_input.topRows(static_cast<Eigen::Index>(n)) = normalize_rows(first.hidden[0]);
  second_input.bottomRows(static_cast<Eigen::Index>(n)) = normalize_rows(first.hidden[1]);
  std::vector<std::uint8_t> second_signs(2 * n, 0);
  std::fill(second_signs.begin(), second_signs.begin() + static_cast<std::ptrdiff_t>(n), 1);
  const OverlayView second_views[] = {{{}, std::move(second_signs)}};
  DenseGoodnessResult<float> second =
      dense_goodness_loss<float>(layers_[1], second_input, second_views, 0, config_.theta);

  if (!std::isfinite(first.loss) || !std::isfinite(second.loss)) {
    throw NumericalError("goodness head: non-finite loss");
  }
  DenseGoodnessResult<float>* results[] = {&first, &second};
  for (std::size_t l = 0; l < 2; ++l) {
    const ParameterSlot slots[] = {
        {as_span(layers_[l].weights), as_span(std::as_const(results[l]->grad_weights))},
        {as_span(layers_[l].bias), as_span(std::as_const(results[l]->grad_bias))}};
    adam_step(slots, adam_[l], "goodness head layer " + std::to_string(l + 1));
  }
  return first.loss + second.loss;
}

std::vector<Prediction> GoodnessHead::predict(const FeatureTensor& features) const {
  const auto flat = flatten_rows(features);
  if (static_cast<std::size_t>(flat.cols()) != features_) {
    throw ConfigError("goodness head expects " + std::to_string(features_) +
                      " features, got " + std::to_string(flat.cols()));
  }
  const RowMatrix<float> x = normalize_rows<float>(flat);
  const Eigen::Index rows = x.rows();
  const auto feature_cols = static_cast<Eigen::Index>(features_);
  const float inv_units = 1.0f / static_cast<float>(config_.hidden);
  const DenseParams<float>& first = layers_[0];
  const DenseParams<float>& second = layers_[1];

  RowMatrix<float> base = x * first.weights.leftCols(feature_cols).transpose();
  base.rowwise() += first.bias.transpose();

  RowMatrix<float> scores(rows, static_cast<Eigen::Index>(classes_));
  for (std::size_t label = 0; label < classes_; ++label) {
    RowMatrix<float> hidden = base;
    hidden.rowwise() +=
        first.weights.col(feature_cols + static_cast<Eigen::Index>(label)).transpose();
    hidden = hidden.cwiseMax(0.0f);
    const ColVector<float> g1 = hidden.rowwise().squaredNorm() * inv_units;

    RowMatrix<float> hidden2 = normalize_rows(hidden) * second.weights.transpose();
    hidden2.rowwise() += second.bias.transpose();
    hidden2 = hidden2.cwiseMax(0.0f);
    const ColVector<float> g2 = hidden2.rowwise().squaredNorm() * inv_units;

    scores.col(static_cast<Eigen::Index>(label)) = g1 + g2;
    passes_ += static_cast<std::uint64_t>(rows);
  }

  std::vector<Prediction> out(static_cast<std::size_t>(rows));
  for (std::size_t n = 0; n < out.size(); ++n) {
    const auto row = scores.row(static_cast<Eigen::Index>(n));
    out[n].scores.assign(row.data(), row.data() + row.size());
    out[n].label = argmax_lowest(std::span<const float>(out[n].scores));
  }
  return out;
}

std::vector<Prediction> ga_predict(const FeatureTensor& final_activation, std::size_t classes) {
  const GoodnessMatrix goodness = compute_goodness(final_activation, classes);
  std::vector<Prediction> out(goodness.rows());
  for (std::size_t n = 0; n < out.size(); ++n) {
    const auto row = goodness.row(n);
    out[n].scores.assign(row.begin(), row.end());
    out[n].label = argmax_lowest(row);
  }
  return out;
}

template SoftmaxGradients<float> softmax_cross_entropy(const RowMatrix<float>&,
                                                       const ColVector<float>&,
                                                       const Eigen::Ref<const RowMatrix<float>>&,
                                                       std::span<const ClassIndex>);
template SoftmaxGradients<double> softmax_cross_entropy(const RowMatrix<double>&,
                                                        const ColVector<double>&,
                                                        const Eigen::Ref<const RowMatrix<double>>&,
                                                        std::span<const ClassIndex>);
template DenseGoodnessResult<float> dense_goodness_loss(const DenseParams<float>&,
                                                        const Eigen::Ref<const RowMatrix<float>>&,
                                                        std::span<const OverlayView>, std::size_t,
                                                        float);
template DenseGoodnessResult<double> dense_goodness_loss(
    const DenseParams<double>&, const Eigen::Ref<const RowMatrix<double>>&,
    std::span<const OverlayView>, std::size_t, double);
template RowMatrix<float> normalize_rows(const RowMatrix<float>&);
template RowMatrix<double> normalize_rows(const RowMatrix<double>&);

}  // namespace cwc
