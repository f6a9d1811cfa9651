#include "cwc/goodness.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cwc/errors.hpp"
#include "reduce.hpp"

namespace cwc {

LabelMask::LabelMask(std::span<const ClassIndex> targets, std::size_t classes)
    : targets_(targets.begin(), targets.end()), classes_(classes) {
  if (classes_ == 0) {
    throw ConfigError("label mask needs at least one class");
  }
  for (std::size_t n = 0; n < targets_.size(); ++n) {
    if (targets_[n] >= classes_) {
      throw ConfigError("target " + std::to_string(targets_[n]) + " at row " +
                        std::to_string(n) + " outside [0, " + std::to_string(classes_) + ")");
    }
  }
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

namespace {

double sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t subset_size(const Shape4& shape, std::size_t classes) {
  if (classes == 0 || shape.c % classes != 0) {
    throw ConfigError("channel count C=" + std::to_string(shape.c) +
                      " is not divisible by class count J=" + std::to_string(classes));
  }
  return shape.c / classes;
}

template <typename T>
void require_finite(const BasicTensor<T>& activations, const char* what) {
  for (T v : activations.data()) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string(what) + ": non-finite activation");
    }
  }
}

template <typename T>
void check_batch(const BasicTensor<T>& activations, std::span<const ClassIndex> targets) {
  if (targets.size() != activations.n()) {
    throw ConfigError("loss got " + std::to_string(targets.size()) + " targets for batch " +
                      activations.shape().to_string());
  }
}

// dL/dY = dL/dG[n, c / S] * 2Y / (S*H*W)
template <typename T>
BasicTensor<T> chain_through_goodness(const BasicTensor<T>& activations,
                                      const BasicGoodnessMatrix<T>& grad_goodness,
                                      std::size_t subset) {
  BasicTensor<T> grad(activations.shape());
  const T scale = T{2} / static_cast<T>(subset * activations.h() * activations.w());
  for (std::size_t n = 0; n < activations.n(); ++n) {
    for (std::size_t c = 0; c < activations.c(); ++c) {
      const T factor = grad_goodness(n, c / subset) * scale;
      auto src = activations.plane(n, c);
      auto dst = grad.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = factor * src[i];
      }
    }
  }
  return grad;
}

}  // namespace

template <typename T>
BasicGoodnessMatrix<T> compute_goodness(const BasicTensor<T>& activations, std::size_t classes) {
  const std::size_t subset = subset_size(activations.shape(), classes);
  const double denom = static_cast<double>(subset * activations.h() * activations.w());
  BasicGoodnessMatrix<T> goodness(activations.n(), classes);
  for (std::size_t n = 0; n < activations.n(); ++n) {
    for (std::size_t j = 0; j < classes; ++j) {
      double sum = 0.0;
      for (std::size_t s = 0; s < subset; ++s) {
        sum += detail::sum_squares(activations.plane(n, j * subset + s));
      }
      goodness(n, j) = static_cast<T>(sum / denom);
    }
  }
  return goodness;
}

template <typename T>
std::vector<T> positive_goodness(const BasicGoodnessMatrix<T>& goodness, const LabelMask& mask) {
  if (goodness.rows() != mask.rows() || goodness.classes() != mask.classes()) {
    throw ConfigError("goodness matrix and label mask disagree in shape");
  }
  std::vector<T> out(goodness.rows());
  for (std::size_t n = 0; n < goodness.rows(); ++n) {
    out[n] = goodness(n, mask.targets()[n]);
  }
  return out;
}

template <typename T>
std::vector<T> negative_goodness(const BasicGoodnessMatrix<T>& goodness, const LabelMask& mask) {
  if (goodness.rows() != mask.rows() || goodness.classes() != mask.classes()) {
    throw ConfigError("goodness matrix and label mask disagree in shape");
  }
  std::vector<T> out(goodness.rows(), T{0});
  for (std::size_t n = 0; n < goodness.rows(); ++n) {
    T sum{0};
    for (std::size_t j = 0; j < goodness.classes(); ++j) {
      if (mask(n, j) == 0) {
        sum += goodness(n, j);
      }
    }
    out[n] = sum;
  }
  return out;
}

template <typename T>
ClassIndex argmax_lowest(std::span<const T> scores) {
  ClassIndex best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > scores[best]) {
      best = static_cast<ClassIndex>(j);
    }
  }
  return best;
}

std::string_view to_string(LossKind kind) {
  return kind == LossKind::CwC ? "cwc" : "pvn";
}

template <typename T>
BasicLossOutput<T> loss_pvn(const BasicTensor<T>& activations,
                            std::span<const ClassIndex> targets, T theta, std::size_t classes) {
  check_batch(activations, targets);
  if (classes < 2) {
    throw ConfigError("PvN loss needs at least two classes");
  }
  if (!(theta > T{0})) {
    throw ConfigError("PvN threshold must be positive");
  }
  require_finite(activations, "loss_pvn");
  const std::size_t subset = subset_size(activations.shape(), classes);

  const LabelMask mask(targets, classes);
  BasicLossOutput<T> out;
  out.goodness = compute_goodness(activations, classes);
  const auto positive = positive_goodness(out.goodness, mask);
  const auto negative = negative_goodness(out.goodness, mask);

  const std::size_t n_rows = activations.n();
  const double others = static_cast<double>(classes - 1);
  const double norm = 1.0 / (2.0 * static_cast<double>(n_rows));
  double loss = 0.0;
  BasicGoodnessMatrix<T> grad_goodness(n_rows, classes);
  for (std::size_t n = 0; n < n_rows; ++n) {
    const double pos_arg = static_cast<double>(theta) - positive[n];
    const double neg_arg = negative[n] / others - static_cast<double>(theta);
    loss += softplus(pos_arg) + softplus(neg_arg);
    const double d_pos = -sigmoid(pos_arg) * norm;
    const double d_neg = sigmoid(neg_arg) * norm / others;
    for (std::size_t j = 0; j < classes; ++j) {
      grad_goodness(n, j) = static_cast<T>(mask(n, j) ? d_pos : d_neg);
    }
  }
  out.loss = static_cast<T>(loss * norm);
  out.grad_activations = chain_through_goodness(activations, grad_goodness, subset);
  return out;
}

template <typename T>
BasicLossOutput<T> loss_cwc(const BasicTensor<T>& activations,
                            std::span<const ClassIndex> targets, std::size_t classes) {
  check_batch(activations, targets);
  require_finite(activations, "loss_cwc");
  const std::size_t subset = subset_size(activations.shape(), classes);

  const LabelMask mask(targets, classes);
  BasicLossOutput<T> out;
  out.goodness = compute_goodness(activations, classes);

  const std::size_t n_rows = activations.n();
  const double inv_n = 1.0 / static_cast<double>(n_rows);
  double loss = 0.0;
  BasicGoodnessMatrix<T> grad_goodness(n_rows, classes);
  std::vector<double> prob(classes);
  for (std::size_t n = 0; n < n_rows; ++n) {
    auto row = out.goodness.row(n);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      prob[j] = std::exp(static_cast<double>(row[j]) - peak);
      total += prob[j];
    }
    const ClassIndex target = targets[n];
    loss += peak + std::log(total) - static_cast<double>(row[target]);
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = prob[j] / total;
      grad_goodness(n, j) = static_cast<T>((p - (j == target ? 1.0 : 0.0)) * inv_n);
    }
  }
  out.loss = static_cast<T>(loss * inv_n);
  out.grad_activations = chain_through_goodness(activations, grad_goodness, subset);
  return out;
}

template <typename T>
BasicLossOutput<T> local_loss(LossKind kind, const BasicTensor<T>& activations,
                              std::span<const ClassIndex> targets, T theta, std::size_t classes) {
  return kind == LossKind::CwC ? loss_cwc(activations, targets, classes)
                               : loss_pvn(activations, targets, theta, classes);
}

#define CWC_INSTANTIATE_GOODNESS(T)                                                         \
  template BasicGoodnessMatrix<T> compute_goodness(const BasicTensor<T>&, std::size_t);    \
  template std::vector<T> positive_goodness(const BasicGoodnessMatrix<T>&, const LabelMask&); \
  template std::vector<T> negative_goodness(const BasicGoodnessMatrix<T>&, const LabelMask&); \
  template ClassIndex argmax_lowest(std::span<const T>);                                     \
  template BasicLossOutput<T> loss_pvn(const BasicTensor<T>&, std::span<const ClassIndex>,  \
                                       T, std::size_t);                                      \
  template BasicLossOutput<T> loss_cwc(const BasicTensor<T>&, std::span<const ClassIndex>,  \
                                       std::size_t);                                         \
  template BasicLossOutput<T> local_loss(LossKind, const BasicTensor<T>&,                  \
                                         std::span<const ClassIndex>, T, std::size_t);

CWC_INSTANTIATE_GOODNESS(float)
CWC_INSTANTIATE_GOODNESS(double)

#undef CWC_INSTANTIATE_GOODNESS

}  // namespace cwc
