#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cwc/errors.hpp"
#include "cwc/network.hpp"
#include "cwc/predictors.hpp"
#include "oracles.hpp"

namespace cwc {
namespace {

using testing::random_targets;
using testing::random_tensor;

template <typename T>
RowMatrix<T> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                           T lo = T{-1}, T hi = T{1}) {
  std::uniform_real_distribution<T> dist(lo, hi);
  RowMatrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = dist(rng);
  }
  return m;
}

template <typename T>
ColVector<T> random_vector(Eigen::Index size, std::mt19937_64& rng) {
  const RowMatrix<T> m = random_matrix<T>(size, 1, rng);
  return Eigen::Map<const ColVector<T>>(m.data(), size);
}

// ---------------------------------------------------------------------------

TEST(SoftmaxHead, ZeroWeightsStartAtLogJ) {
  SoftmaxHead head(12, 10, {});
  std::mt19937_64 rng(31);
  const FeatureTensor x = random_tensor<float>(Shape4{5, 3, 2, 2}, rng);
  const auto targets = random_targets(5, 10, rng);
  EXPECT_NEAR(head.train_step(x, targets), std::log(10.0), 1e-6);
}

TEST(SoftmaxHead, OverfitsOneExample) {
  SoftmaxHead head(8, 10, {});
  std::mt19937_64 rng(32);
  const FeatureTensor x = random_tensor<float>(Shape4{1, 2, 2, 2}, rng);
  const ClassIndex target[] = {6};
  std::vector<float> losses;
  for (int step = 0; step < 300; ++step) {
    losses.push_back(head.train_step(x, target));
  }
  for (std::size_t i = 150; i < losses.size(); ++i) {
    EXPECT_LE(losses[i], losses[i - 1] + 1e-6f);
  }
  EXPECT_LT(losses.back(), 0.01f);
  EXPECT_EQ(head.predict(x)[0].label, 6u);
}

TEST(SoftmaxHead, PredictionInvariantToALogitShift) {
  std::mt19937_64 rng(33);
  SoftmaxHead head(8, 4, {});
  head.weights() = random_matrix<float>(4, 8, rng);
  head.bias() = random_vector<float>(4, rng);
  const FeatureTensor x = random_tensor<float>(Shape4{6, 2, 2, 2}, rng);
  const auto before = head.predict(x);
  head.bias().array() += 37.5f;
  const auto after = head.predict(x);
  for (std::size_t n = 0; n < 6; ++n) {
    EXPECT_EQ(before[n].label, after[n].label);
    EXPECT_EQ(after[n].scores.size(), 4u);
  }
}

TEST(SoftmaxHead, RejectsWrongWidthAndNonFiniteFeatures) {
  SoftmaxHead head(8, 4, {});
  const ClassIndex target[] = {0};
  EXPECT_THROW(head.train_step(FeatureTensor(Shape4{1, 3, 2, 2}), target), ConfigError);
  FeatureTensor bad(Shape4{1, 2, 2, 2});
  bad.data()[3] = NAN;
  EXPECT_THROW(head.train_step(bad, target), NumericalError);
  const ClassIndex out_of_range[] = {4};
  EXPECT_THROW(head.train_step(FeatureTensor(Shape4{1, 2, 2, 2}), out_of_range), ConfigError);
}

TEST(SoftmaxCrossEntropy, GradientMatchesCentralDifferencesAt64Bit) {
  std::mt19937_64 rng(34);
  for (int instance = 0; instance < 24; ++instance) {
    const Eigen::Index classes = 2 + instance % 5;
    const Eigen::Index features = 3 + instance % 4;
    RowMatrix<double> w = random_matrix<double>(classes, features, rng);
    ColVector<double> b = random_vector<double>(classes, rng);
    const RowMatrix<double> x = random_matrix<double>(4, features, rng, -2.0, 2.0);
    const auto targets = random_targets(4, static_cast<std::size_t>(classes), rng);
    auto loss = [&] {
      return softmax_cross_entropy<double>(w, b, x, targets).loss;
    };
    const auto grads = softmax_cross_entropy<double>(w, b, x, targets);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      coords.push_back(w.data() + i);
      analytic.push_back(grads.grad_weights.data()[i]);
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      coords.push_back(b.data() + i);
      analytic.push_back(grads.grad_bias(i));
    }
    const auto numeric = testing::central_differences(coords, loss);
    EXPECT_LE(testing::relative_error(analytic, numeric), 1e-4) << "instance " << instance;
  }
}

// ---------------------------------------------------------------------------

TEST(DenseGoodness, ThresholdGoodnessGivesLog2) {
  // One unit with pre-activation sqrt(theta): g = theta for every row.
  DenseParams<double> p{RowMatrix<double>::Zero(1, 3), ColVector<double>::Constant(1, std::sqrt(2.0))};
  const RowMatrix<double> x = RowMatrix<double>::Ones(4, 3);
  const OverlayView views[] = {{{}, std::vector<std::uint8_t>(4, 1)},
                               {{}, std::vector<std::uint8_t>(4, 0)}};
  EXPECT_NEAR(dense_goodness_loss<double>(p, x, views, 0, 2.0).loss, std::log(2.0), 1e-12);
}

TEST(DenseGoodness, ZeroInputZeroWeightsPositiveLoss) {
  DenseParams<double> p{RowMatrix<double>::Zero(5, 6 + 3), ColVector<double>::Zero(5)};
  const RowMatrix<double> x = RowMatrix<double>::Zero(2, 6);
  const OverlayView views[] = {{{0, 2}, {1, 1}}};
  const auto out = dense_goodness_loss<double>(p, x, views, 3, 2.0);
  EXPECT_NEAR(out.loss, std::log1p(std::exp(2.0)), 1e-12);
  EXPECT_EQ(out.goodness[0](0), 0.0);
}

TEST(DenseGoodness, OverlayAddsTheLabelColumn) {
  std::mt19937_64 rng(35);
  DenseParams<double> p{random_matrix<double>(4, 5 + 3, rng), random_vector<double>(4, rng)};
  const RowMatrix<double> x = random_matrix<double>(2, 5, rng);
  const OverlayView views[] = {{{1, 2}, {1, 0}}};
  const auto out = dense_goodness_loss<double>(p, x, views, 3, 2.0);
  for (Eigen::Index n = 0; n < 2; ++n) {
    Eigen::VectorXd input = Eigen::VectorXd::Zero(8);
    input.head(5) = x.row(n).transpose();
    input(5 + static_cast<Eigen::Index>(views[0].labels[static_cast<std::size_t>(n)])) = 1.0;
    const Eigen::VectorXd h = (p.weights * input + p.bias).cwiseMax(0.0);
    EXPECT_NEAR(out.goodness[0](n), h.squaredNorm() / 4.0, 1e-12);
  }
}

void check_dense_gradient(bool overlay, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int instance = 0; instance < 24; ++instance) {
    const std::size_t classes = overlay ? 2 + instance % 3 : 0;
    const Eigen::Index features = 3 + instance % 3;
    const Eigen::Index units = 2 + instance % 4;
    DenseParams<double> p{
        random_matrix<double>(units, features + static_cast<Eigen::Index>(classes), rng),
        random_vector<double>(units, rng)};
    const RowMatrix<double> x = random_matrix<double>(3, features, rng, -2.0, 2.0);
    std::vector<OverlayView> views;
    if (overlay) {
      views.push_back({random_targets(3, classes, rng), {1, 1, 1}});
      views.push_back({random_targets(3, classes, rng), {0, 0, 0}});
    } else {
      views.push_back({{}, {1, 0, 1}});
    }
    const double theta = 0.25 + 0.25 * (instance % 4);
    auto loss = [&] { return dense_goodness_loss<double>(p, x, views, classes, theta).loss; };
    const auto out = dense_goodness_loss<double>(p, x, views, classes, theta);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) {
      coords.push_back(p.weights.data() + i);
      analytic.push_back(out.grad_weights.data()[i]);
    }
    for (Eigen::Index i = 0; i < p.bias.size(); ++i) {
      coords.push_back(p.bias.data() + i);
      analytic.push_back(out.grad_bias(i));
    }
    const auto numeric = testing::central_differences(coords, loss);
    EXPECT_LE(testing::relative_error(analytic, numeric), 1e-4) << "instance " << instance;
  }
}

TEST(DenseGoodness, GradientMatchesCentralDifferencesWithOverlay) { check_dense_gradient(true, 36); }

TEST(DenseGoodness, GradientMatchesCentralDifferencesWithoutOverlay) {
  check_dense_gradient(false, 37);
}

TEST(DenseGoodness, RejectsMismatchedViewsAndLabels) {
  DenseParams<float> p{RowMatrix<float>::Zero(2, 4 + 2), ColVector<float>::Zero(2)};
  const RowMatrix<float> x = RowMatrix<float>::Zero(2, 4);
  const OverlayView short_view[] = {{{0}, {1}}};
  EXPECT_THROW(dense_goodness_loss<float>(p, x, short_view, 2, 2.0f), ConfigError);
  const OverlayView bad_label[] = {{{0, 2}, {1, 1}}};
  EXPECT_THROW(dense_goodness_loss<float>(p, x, bad_label, 2, 2.0f), ConfigError);
}

TEST(NormalizeRows, UnitLengthAndZeroRowsStayZero) {
  RowMatrix<double> m(2, 3);
  m << 3, 0, 4, 0, 0, 0;
  const RowMatrix<double> out = normalize_rows(m);
  EXPECT_NEAR(out.row(0).norm(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.6);
  EXPECT_EQ(out.row(1).norm(), 0.0);
}

// ---------------------------------------------------------------------------

GoodnessHeadConfig small_head() { return {32, 2.0f}; }

TEST(GoodnessHead, ZeroWeightsTieToTheFirstClass) {
  GoodnessHead head(8, 4, small_head(), {}, 1);
  for (auto& layer : head.layers()) {
    layer.weights.setZero();
  }
  std::mt19937_64 rng(38);
  const auto preds = head.predict(random_tensor<float>(Shape4{3, 2, 2, 2}, rng));
  for (const Prediction& p : preds) {
    EXPECT_EQ(p.label, 0u);
    ASSERT_EQ(p.scores.size(), 4u);
    EXPECT_EQ(p.scores[0], p.scores[3]);
  }
}

TEST(GoodnessHead, EnumeratesJPassesPerSample) {
  GoodnessHead head(8, 7, small_head(), {}, 2);
  EXPECT_EQ(head.predict(FeatureTensor(Shape4{5, 2, 2, 2}, 1.0f)).size(), 5u);
  EXPECT_EQ(head.passes_evaluated(), 35u);
}

TEST(GoodnessHead, OverfitsOnePair) {
  std::mt19937_64 rng(39);
  GoodnessHead head(8, 5, small_head(), {}, 3);
  const FeatureTensor x = random_tensor<float>(Shape4{1, 2, 2, 2}, rng);
  const ClassIndex target[] = {3};
  float first = 0.0f;
  float last = 0.0f;
  for (int step = 0; step < 300; ++step) {
    last = head.train_step(x, target);
    if (step == 0) {
      first = last;
    }
  }
  EXPECT_LT(last, first);
  EXPECT_EQ(head.predict(x)[0].label, 3u);
}

TEST(GoodnessHead, LearnsASeparableProblem) {
  // Class j lights up feature j.
  std::mt19937_64 rng(40);
  GoodnessHead head(4, 4, small_head(), {}, 4);
  auto batch = [&](std::size_t n) {
    const auto targets = random_targets(n, 4, rng);
    FeatureTensor x = random_tensor<float>(Shape4{n, 4, 1, 1}, rng, 0.0f, 0.2f);
    for (std::size_t i = 0; i < n; ++i) {
      x(i, targets[i], 0, 0) += 1.0f;
    }
    return std::pair{x, targets};
  };
  for (int step = 0; step < 400; ++step) {
    auto [x, t] = batch(32);
    head.train_step(x, t);
  }
  auto [x, t] = batch(200);
  std::size_t correct = 0;
  const auto preds = head.predict(x);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    correct += preds[i].label == t[i];
  }
  EXPECT_GE(correct, 180u);
}

TEST(GoodnessHead, ScalingTheFeaturesDoesNotChangeScores) {
  std::mt19937_64 rng(41);
  GoodnessHead head(8, 3, small_head(), {}, 5);
  const FeatureTensor x = random_tensor<float>(Shape4{4, 2, 2, 2}, rng);
  FeatureTensor scaled = x;
  for (float& v : scaled.data()) {
    v *= 8.0f;
  }
  const auto a = head.predict(x);
  const auto b = head.predict(scaled);
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(a[n].scores[j], b[n].scores[j], 1e-5f * std::max(1.0f, a[n].scores[j]));
    }
  }
}

TEST(GoodnessHead, ExplicitNegativesAreDeterministic) {
  std::mt19937_64 rng(42);
  GoodnessHead a(8, 3, small_head(), {}, 6);
  GoodnessHead b(8, 3, small_head(), {}, 6);
  const FeatureTensor x = random_tensor<float>(Shape4{2, 2, 2, 2}, rng);
  const ClassIndex targets[] = {0, 2};
  const ClassIndex negatives[] = {1, 0};
  EXPECT_EQ(a.train_step(x, targets, negatives), b.train_step(x, targets, negatives));
  EXPECT_EQ(a.layers()[1].weights, b.layers()[1].weights);
  EXPECT_THROW(a.train_step(FeatureTensor(Shape4{2, 1, 2, 2}), targets, negatives), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(GlobalAveraging, PicksTheLargestBlock) {
  const FeatureTensor y(Shape4{1, 2, 1, 1}, std::vector<float>{2, 3});
  const auto p = ga_predict(y, 2);
  EXPECT_EQ(p[0].label, 1u);
  EXPECT_EQ(p[0].scores, (std::vector<float>{4, 9}));
  EXPECT_EQ(ga_predict(FeatureTensor(Shape4{1, 6, 2, 2}, 0.5f), 3)[0].label, 0u);
  EXPECT_THROW(ga_predict(FeatureTensor(Shape4{1, 5, 1, 1}), 2), ConfigError);
}

TEST(GlobalAveraging, AgreesWithComputeGoodnessAndPermutesWithBlocks) {
  std::mt19937_64 rng(43);
  const FeatureTensor y = random_tensor<float>(Shape4{20, 8, 3, 3}, rng, 0.0f, 1.0f);
  const GoodnessMatrix g = compute_goodness(y, 4);
  const auto preds = ga_predict(y, 4);
  // Reverse the block order: block j moves to 3 - j.
  FeatureTensor reversed(y.shape());
  for (std::size_t n = 0; n < 20; ++n) {
    for (std::size_t c = 0; c < 8; ++c) {
      const std::size_t to = (3 - c / 2) * 2 + c % 2;
      std::copy(y.plane(n, c).begin(), y.plane(n, c).end(), reversed.plane(n, to).begin());
    }
  }
  const auto flipped = ga_predict(reversed, 4);
  for (std::size_t n = 0; n < 20; ++n) {
    EXPECT_EQ(preds[n].label, argmax_lowest(g.row(n)));
    EXPECT_EQ(flipped[n].label, 3 - preds[n].label);
  }
}

TEST(Heads, TrainingNeverTouchesTheBackbone) {
  std::mt19937_64 rng(44);
  NetworkConfig config = NetworkConfig::cfse(InputShape{1, 8, 8});
  const Network net = build_network(config, 9);
  std::vector<std::uint64_t> before;
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    before.push_back(net.fingerprint(i));
  }
  SoftmaxHead softmax(config.flattened_features(), 10, {});
  GoodnessHead goodness(config.flattened_features(), 10, small_head(), {}, 10);
  for (int step = 0; step < 3; ++step) {
    const FeatureTensor batch = random_tensor<float>(Shape4{6, 1, 8, 8}, rng);
    const auto targets = random_targets(6, 10, rng);
    const InferenceResult r = net.infer(batch);
    softmax.train_step(r.features, targets);
    goodness.train_step(r.features, targets);
  }
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    EXPECT_EQ(net.fingerprint(i), before[i]);
  }
}

}  // namespace
}  // namespace cwc
