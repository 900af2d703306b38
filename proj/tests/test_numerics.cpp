#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "sfbc/numerics/adam.hpp"
#include "sfbc/numerics/checkpoint.hpp"
#include "sfbc/numerics/mlp.hpp"
#include "sfbc/numerics/random.hpp"
#include "sfbc/numerics/standardize.hpp"

using namespace sfbc;
using namespace sfbc::numerics;

namespace {

MlpParams single_layer(const Matrix& w, const Vector& b) {
  MlpParams p;
  p.layers.push_back({w, b});
  return p;
}

// Random smooth MLP with 1..4 layers of at most 16 units.
struct RandomNet {
  MlpSpec spec;
  MlpParams params;
};

RandomNet random_net(Rng& rng) {
  std::uniform_int_distribution<int> layers(1, 4), width(1, 16), act(0, 2);
  const Activation smooth[] = {Activation::SiLU, Activation::Tanh, Activation::Identity};
  RandomNet n;
  const int depth = layers(rng);
  for (int i = 0; i <= depth; ++i) n.spec.layer_widths.push_back(width(rng));
  for (int i = 0; i + 1 < depth; ++i) n.spec.hidden_activations.push_back(smooth[act(rng)]);
  n.spec.validate();
  n.params = init_params(n.spec, rng);
  return n;
}

double mse_loss(const MlpSpec& spec, const MlpParams& p, const Matrix& x, const Matrix& y) {
  return mean_squared_error(forward(spec, p, x), y).loss;
}

}  // namespace

TEST(MlpForward, IdentityLayerPassesInputThrough) {
  const MlpSpec spec{{2, 2}, {}, Activation::Identity};
  const auto p = single_layer(Matrix::Identity(2, 2), Vector::Zero(2));
  Vector x(2);
  x << 1, 2;
  EXPECT_EQ(forward(spec, p, x), x);
}

TEST(MlpForward, ZeroWeightsGiveZeroOutput) {
  const auto spec = MlpSpec::uniform(3, 5, 2, 2, Activation::SiLU);
  Rng rng(1);
  auto p = init_params(spec, rng);
  for (auto& l : p.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  Vector x(3);
  x << 0.3, -7, 2;
  EXPECT_EQ(forward(spec, p, x), Vector::Zero(2));
}

TEST(MlpForward, MatchesIndependentOracle) {
  // Weights and expected output from tests/oracles/derive_goldens.py.
  const MlpSpec spec{{2, 3, 1}, {Activation::SiLU}, Activation::Identity};
  MlpParams p;
  Matrix w1(3, 2), w2(1, 3);
  Vector b1(3), b2(1);
  w1 << 0.3516626759625636, -0.5713535975234847, -0.3810959382366166, 0.5989321935496663,
      0.9916041977309336, -0.7155363694398964;
  b1 << -0.842548932476002, -0.6383523726062907, -0.28070621662129813;
  w2 << -0.6607615005859033, 0.1775186310794603, 0.23361502764755615;
  b2 << -0.7892286405032487;
  p.layers = {{w1, b1}, {w2, b2}};
  Vector x(2);
  x << 0.5, -0.5;
  EXPECT_NEAR(forward(spec, p, x)(0), -0.65043188646083228, 1e-14);
}

TEST(MlpForward, RejectsWrongInputWidth) {
  const auto spec = MlpSpec::uniform(3, 4, 1, 1, Activation::Tanh);
  Rng rng(2);
  const auto p = init_params(spec, rng);
  try {
    forward(spec, p, Vector(Vector::Zero(2)));
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(MlpForward, RejectsParamsThatDisagreeWithSpec) {
  const auto spec = MlpSpec::uniform(3, 4, 1, 1, Activation::Tanh);
  const auto other = MlpSpec::uniform(3, 5, 1, 1, Activation::Tanh);
  Rng rng(2);
  const auto p = init_params(other, rng);
  EXPECT_THROW(forward(spec, p, Vector(Vector::Zero(3))), Error);
}

TEST(MlpForward, IsBitwiseDeterministic) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto net = random_net(rng);
    const Matrix x = standard_normal(net.spec.input_width(), 7, rng);
    const Matrix a = forward(net.spec, net.params, x);
    const Matrix b = forward(net.spec, net.params, x);
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
  }
}

TEST(MlpSpec, RejectsDegenerateShapes) {
  EXPECT_THROW((MlpSpec{{3}, {}, Activation::Identity}.validate()), Error);
  EXPECT_THROW((MlpSpec{{3, 0, 1}, {Activation::ReLU}, Activation::Identity}.validate()), Error);
  EXPECT_THROW((MlpSpec{{3, 2, 1}, {}, Activation::Identity}.validate()), Error);
}

TEST(MlpGradients, DetachedTargetEqualToOutputGivesZeroGradients) {
  const auto spec = MlpSpec::uniform(4, 8, 2, 3, Activation::SiLU);
  Rng rng(4);
  const auto p = init_params(spec, rng);
  const Matrix x = standard_normal(4, 10, rng);
  const Matrix y = forward(spec, p, x);
  auto [loss, g] = mlp_gradients(spec, p, x, [&](const Matrix& out) { return mean_squared_error(out, y); });
  EXPECT_EQ(loss, 0.0);
  for (const auto& l : g.layers) {
    EXPECT_EQ(l.weight.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(MlpGradients, ScalarLinearModelMatchesClosedForm) {
  // loss = (w x - y)^2, dL/dw = 2 w x^2 - 2 x y
  const MlpSpec spec{{1, 1}, {}, Activation::Identity};
  const double w = 1.5, x = 2.0, y = 0.5;
  const auto p = single_layer(Matrix::Constant(1, 1, w), Vector::Zero(1));
  auto [loss, g] = mlp_gradients(spec, p, Matrix::Constant(1, 1, x), [&](const Matrix& out) {
    return mean_squared_error(out, Matrix::Constant(1, 1, y));
  });
  EXPECT_DOUBLE_EQ(loss, (w * x - y) * (w * x - y));
  EXPECT_DOUBLE_EQ(g.layers[0].weight(0, 0), 2 * w * x * x - 2 * x * y);
}

TEST(MlpGradients, MatchCentralFiniteDifferencesOnRandomNets) {
  Rng rng(5);
  const double h = 1e-5;
  int probes = 0;
  double worst = 0.0;
  while (probes < 100) {
    auto net = random_net(rng);
    const Matrix x = standard_normal(net.spec.input_width(), 5, rng);
    const Matrix y = standard_normal(net.spec.output_width(), 5, rng);
    auto [loss, grads] = mlp_gradients(net.spec, net.params, x,
                                       [&](const Matrix& out) { return mean_squared_error(out, y); });
    std::vector<double*> slots, gslots;
    net.params.for_each([&](double& v) { slots.push_back(&v); });
    grads.for_each([&](double& v) { gslots.push_back(&v); });
    std::uniform_int_distribution<std::size_t> pick(0, slots.size() - 1);
    for (int k = 0; k < 5 && probes < 100; ++k, ++probes) {
      const std::size_t i = pick(rng);
      const double keep = *slots[i];
      *slots[i] = keep + h;
      const double up = mse_loss(net.spec, net.params, x, y);
      *slots[i] = keep - h;
      const double down = mse_loss(net.spec, net.params, x, y);
      *slots[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double analytic = *gslots[i];
      const double rel = std::abs(fd - analytic) / std::max(1e-6, std::abs(fd) + std::abs(analytic));
      worst = std::max(worst, rel);
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Adam, ZeroGradientsLeaveParamsAndDecayMoments) {
  const auto spec = MlpSpec::uniform(2, 3, 1, 1, Activation::Tanh);
  Rng rng(6);
  auto p = init_params(spec, rng);
  const auto before = p;
  auto st = AdamState::for_params(p);
  st.first_moment.for_each([](double& v) { v = 1.0; });
  st.second_moment.for_each([](double& v) { v = 1.0; });
  for (int i = 0; i < 3; ++i) adam_update(st, p, p.zeros_like(), 0.1);
  EXPECT_EQ(st.step, 3u);
  EXPECT_NEAR(st.first_moment.layers[0].weight(0, 0), std::pow(0.9, 3), 1e-15);
  EXPECT_NEAR(st.second_moment.layers[0].weight(0, 0), std::pow(0.999, 3), 1e-15);
  // the decayed first moment still pushes the params; with zero moments nothing moves
  auto q = before;
  auto fresh = AdamState::for_params(q);
  for (int i = 0; i < 5; ++i) adam_update(fresh, q, q.zeros_like(), 0.1);
  EXPECT_EQ(q, before);
}

TEST(Adam, FirstStepWithoutAveragingMovesByLrTimesSign) {
  const MlpSpec spec{{1, 1}, {}, Activation::Identity};
  auto p = single_layer(Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 1.0));
  auto st = AdamState::for_params(p, 0.0, 0.0, 1e-8);
  auto g = p.zeros_like();
  g.layers[0].weight(0, 0) = 0.3;
  g.layers[0].bias(0) = -4.0;
  adam_update(st, p, g, 0.01);
  EXPECT_DOUBLE_EQ(p.layers[0].weight(0, 0), 2.0 - 0.01 * 0.3 / (0.3 + 1e-8));
  EXPECT_DOUBLE_EQ(p.layers[0].bias(0), 1.0 + 0.01 * 4.0 / (4.0 + 1e-8));
}

TEST(Adam, ThreeStepsOnSquareMatchHandSteppedOracle) {
  const MlpSpec spec{{1, 1}, {}, Activation::Identity};
  auto p = single_layer(Matrix::Constant(1, 1, 1.0), Vector::Zero(1));
  auto st = AdamState::for_params(p);
  const double expected[] = {0.90000000049999995, 0.80041222869179285, 0.70158627294603026};
  for (double want : expected) {
    auto g = p.zeros_like();
    g.layers[0].weight(0, 0) = 2.0 * p.layers[0].weight(0, 0);  // d/dw w^2
    adam_update(st, p, g, 0.1);
    EXPECT_NEAR(p.layers[0].weight(0, 0), want, 1e-15);
  }
}

TEST(Adam, NonFiniteGradientIsRejectedBeforeAnyChange) {
  const auto spec = MlpSpec::uniform(2, 3, 1, 1, Activation::Tanh);
  Rng rng(7);
  auto p = init_params(spec, rng);
  const auto before = p;
  auto st = AdamState::for_params(p);
  auto g = p.zeros_like();
  g.layers[1].bias(0) = std::nan("");
  try {
    adam_update(st, p, g, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
  }
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 0u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto spec = MlpSpec::uniform(5, 7, 2, 3, Activation::SiLU);
  Rng rng(8);
  const auto p = init_params(spec, rng);
  const auto arrays = to_named_arrays(p, "net.");
  const auto path = std::filesystem::temp_directory_path() / "sfbc_test_roundtrip.ckpt";
  write_checkpoint(path.string(), arrays);
  const auto back = read_checkpoint(path.string());
  EXPECT_EQ(back, arrays);
  EXPECT_EQ(from_named_arrays(back, spec, "net."), p);
  std::filesystem::remove(path);
}

TEST(Checkpoint, LayoutIsLittleEndianWithMagicAndVersion) {
  const std::string bytes = encode_checkpoint({{"w", {1}, {1.0}}});
  ASSERT_EQ(bytes.size(), 8u + 4 + 4 + 4 + 1 + 4 + 8 + 8);
  EXPECT_EQ(bytes.substr(0, 8), "SFBCCKPT");
  EXPECT_EQ(bytes[8], 1);  // version, low byte first
  EXPECT_EQ(bytes[12], 1);  // array count
  // 1.0 = 0x3FF0000000000000: last byte of the payload is 0x3F
  EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 0x3F);
}

TEST(Checkpoint, TruncatedOrForeignBytesAreParseErrors) {
  const std::string bytes = encode_checkpoint({{"w", {2, 2}, {1, 2, 3, 4}}});
  for (std::size_t cut : {3ul, 10ul, bytes.size() - 1}) {
    try {
      decode_checkpoint(bytes.substr(0, cut));
      FAIL() << "cut at " << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Parse);
    }
  }
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), Error);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), Error);
}

TEST(Checkpoint, ShapeMismatchOnLoadIsReported) {
  const auto spec = MlpSpec::uniform(5, 7, 1, 3, Activation::SiLU);
  const auto wider = MlpSpec::uniform(5, 8, 1, 3, Activation::SiLU);
  Rng rng(9);
  const auto arrays = to_named_arrays(init_params(spec, rng), "");
  EXPECT_THROW(from_named_arrays(arrays, wider, ""), Error);
}

TEST(Standardizer, CentersAndScalesRowsAndKeepsConstantRows) {
  Matrix x(2, 4);
  x << 1, 2, 3, 4, 5, 5, 5, 5;
  const auto s = Standardizer::fit(x);
  const Matrix z = s.apply(x);
  EXPECT_NEAR(z.row(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(z.row(0).squaredNorm() / 4, 1.0, 1e-14);
  EXPECT_EQ(s.scale(1), 1.0);
  EXPECT_EQ(z.row(1), Eigen::RowVectorXd::Zero(4));
  EXPECT_EQ(Standardizer{}.apply(x), x);
}

TEST(DeriveSeed, StreamsDifferAndAreStable) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(42, 7), derive_seed(42, 7));
}
