#include <gtest/gtest.h>

#include <sstream>

#include "mmia/nn/adam.hpp"
#include "mmia/nn/angular_margin.hpp"
#include "mmia/nn/losses.hpp"
#include "mmia/nn/sequential.hpp"
#include "mmia/nn/serialize.hpp"
#include "support/gradcheck.hpp"

using namespace mmia;
using namespace mmia::nn;
using mmia::testing::check_gradients;
using mmia::testing::random_matrix;
using mmia::testing::snapshot_grads;

namespace {

Sequential<double> small_conv_net(Rng& rng) {
  Sequential<double> net;
  auto& c1 = net.emplace<Conv2d<double>>(SpatialShape{2, 6, 6}, 3, 3, 2, rng);
  net.emplace<LeakyRelu<double>>(c1.output_width(), 0.2);
  auto& up = net.emplace<Upsample2x<double>>(c1.output_shape());
  auto& c2 = net.emplace<Conv2d<double>>(up.output_shape(), 2, 3, 1, rng);
  net.emplace<Sigmoid<double>>(c2.output_width());
  net.emplace<Dense<double>>(c2.output_width(), 4, rng);
  return net;
}

// Weighted sum of outputs keeps the loss sensitive to every output entry.
double weighted_sum(const Matrix<double>& y, const Matrix<double>& w) { return y.cwiseProduct(w).sum(); }

}  // namespace

TEST(Layers, ConvStackGradientsMatchFiniteDifferences) {
  Rng rng(11);
  auto net = small_conv_net(rng);
  const Matrix<double> x = random_matrix(3, 72, rng);
  const Matrix<double> w = random_matrix(3, 4, rng);
  net.zero_grad();
  net.forward(x, Phase::train);
  const Matrix<double> dx = net.backward(w);
  const auto params = net.params();
  const auto result = check_gradients(params, snapshot_grads(params),
                                      [&] { return weighted_sum(net.infer(x), w); }, 40, 3);
  EXPECT_LT(result.worst_relative_error, 1e-5);

  // Input gradient too.
  Matrix<double> xp = x;
  const double h = 1e-5;
  for (int i : {0, 17, 40, 71}) {
    xp(1, i) += h;
    const double up = weighted_sum(net.infer(xp), w);
    xp(1, i) -= 2 * h;
    const double down = weighted_sum(net.infer(xp), w);
    xp(1, i) += h;
    EXPECT_NEAR(dx(1, i), (up - down) / (2 * h), 1e-6);
  }
}

TEST(Layers, ConvMatchesDirectConvolution) {
  Rng rng(5);
  Conv2d<double> conv(SpatialShape{1, 4, 4}, 1, 3, 1, rng);
  Matrix<double> x = random_matrix(1, 16, rng);
  const auto y = conv.infer(x);
  const auto& kernel = conv.params()[0]->value;
  const double bias = conv.params()[1]->value(0, 0);
  for (int oy = 0; oy < 4; ++oy) {
    for (int ox = 0; ox < 4; ++ox) {
      double acc = bias;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = oy + ky - 1, ix = ox + kx - 1;
          if (iy >= 0 && iy < 4 && ix >= 0 && ix < 4) acc += kernel(0, ky * 3 + kx) * x(0, iy * 4 + ix);
        }
      }
      EXPECT_NEAR(y(0, oy * 4 + ox), acc, 1e-12);
    }
  }
}

TEST(Layers, ForwardAndInferAgreeOutsideDropout) {
  Rng rng(2);
  auto net = small_conv_net(rng);
  const Matrix<double> x = random_matrix(2, 72, rng);
  EXPECT_EQ(net.forward(x, Phase::train), net.infer(x));
}

TEST(Layers, DropoutTrainsStochasticallyAndInfersDeterministically) {
  Dropout<float> drop(100, 0.5, 9);
  const Matrix<float> x = Matrix<float>::Ones(1, 100);
  const auto a = drop.forward(x, Phase::train);
  const auto b = drop.forward(x, Phase::train);
  EXPECT_NE(a, b);
  EXPECT_EQ(drop.forward(x, Phase::infer), x);
  EXPECT_EQ(drop.infer(x), drop.infer(x));
  EXPECT_THROW(Dropout<float>(4, 1.0, 1), PreconditionError);
}

TEST(Layers, WidthMismatchIsShapeError) {
  Rng rng(1);
  Dense<float> d(4, 2, rng);
  EXPECT_THROW(d.infer(Matrix<float>::Zero(1, 5)), ShapeError);
}

TEST(AngularMargin, ChebyshevPsiMatchesClosedForm) {
  Rng rng(3);
  AngularMarginHead<double> head(4, 3, 4, rng);
  for (double theta = 0.01; theta < 3.14; theta += 0.05) {
    const double c = std::cos(theta);
    const int k = std::min(3, static_cast<int>(std::floor(4 * theta / 3.14159265358979323846)));
    const double expected = ((k % 2 == 0) ? 1.0 : -1.0) * std::cos(4 * theta) - 2 * k;
    EXPECT_NEAR(head.psi_and_slope(c).first, expected, 1e-9);
  }
}

TEST(AngularMargin, GradientsMatchFiniteDifferences) {
  for (int margin : {1, 2, 4}) {
    Rng rng(17 + margin);
    AngularMarginHead<double> head(5, 4, margin, rng);
    Matrix<double> x = random_matrix(6, 5, rng);
    const std::vector<int> targets{0, 1, 2, 3, 1, 0};
    const double lambda = 3.0;
    auto loss = [&] {
      AngularMarginHead<double> copy = head;
      return softmax_cross_entropy(copy.forward(x, targets, lambda), targets).loss;
    };
    head.params()[0]->grad.setZero();
    const auto ce = softmax_cross_entropy(head.forward(x, targets, lambda), targets);
    const Matrix<double> dx = head.backward(ce.grad);
    const auto params = head.params();
    const auto result = check_gradients(params, snapshot_grads(params), loss, 20, 5);
    EXPECT_LT(result.worst_relative_error, 1e-5) << "margin " << margin;
    const double h = 1e-6;
    for (int i = 0; i < 5; ++i) {
      x(2, i) += h;
      const double up = loss();
      x(2, i) -= 2 * h;
      const double down = loss();
      x(2, i) += h;
      EXPECT_NEAR(dx(2, i), (up - down) / (2 * h), 1e-6) << "margin " << margin;
    }
  }
}

TEST(Losses, CrossEntropyOfUniformLogitsIsLogK) {
  const Matrix<double> logits = Matrix<double>::Zero(3, 5);
  EXPECT_NEAR(softmax_cross_entropy(logits, {0, 1, 4}).loss, std::log(5.0), 1e-12);
}

TEST(Adam, ReducesQuadraticLoss) {
  Rng rng(4);
  Dense<double> d(3, 1, rng);
  Adam<double> opt(d.params(), {0.05});
  const Matrix<double> x = random_matrix(16, 3, rng);
  const Matrix<double> target = x * Eigen::Vector3d(1, -2, 0.5);
  double first = 0, last = 0;
  for (int it = 0; it < 300; ++it) {
    opt.zero_grad();
    const Matrix<double> err = d.forward(x, Phase::train) - target;
    const double loss = err.squaredNorm() / 16;
    if (it == 0) first = loss;
    last = loss;
    d.backward(err * (2.0 / 16));
    opt.step();
  }
  EXPECT_LT(last, first * 1e-3);
}

TEST(Serialize, WeightsRoundTripBitExactly) {
  Rng rng(8);
  Sequential<float> net;
  net.emplace<Conv2d<float>>(SpatialShape{1, 4, 4}, 2, 3, 1, rng);
  net.emplace<Dense<float>>(32, 3, rng);
  std::stringstream buf;
  write_params(buf, net.params());
  Rng other_rng(99);
  Sequential<float> copy;
  copy.emplace<Conv2d<float>>(SpatialShape{1, 4, 4}, 2, 3, 1, other_rng);
  copy.emplace<Dense<float>>(32, 3, other_rng);
  read_params(buf, copy.params(), "memory");
  Matrix<float> x = Matrix<float>::Random(2, 16);
  EXPECT_EQ(net.infer(x), copy.infer(x));

  Sequential<float> wrong;
  wrong.emplace<Dense<float>>(16, 3, other_rng);
  std::stringstream buf2;
  write_params(buf2, net.params());
  EXPECT_THROW(read_params(buf2, wrong.params(), "memory"), IngestError);
}
