#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include <fsgap/nn.hpp>
#include <fsgap/rng.hpp>

using namespace fsgap;

namespace {

errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return errc::invalid_argument;
}

Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = rng.normal();
  return x;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd x(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) x(i, j) = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("cross entropy values and gradients", "[nn]") {
  Eigen::VectorXd logits(2);
  logits << 0.0, 0.0;
  auto lg = nn::ce_loss(logits, 0);
  CHECK(lg.loss == Catch::Approx(std::log(2.0)).margin(1e-15));
  CHECK(lg.dlogits(0) == Catch::Approx(-0.5).margin(1e-15));
  CHECK(lg.dlogits(1) == Catch::Approx(0.5).margin(1e-15));

  // max-subtraction keeps huge logits finite
  logits << 1000.0, 0.0;
  lg = nn::ce_loss(logits, 0);
  CHECK(lg.loss >= 0.0);
  CHECK(lg.loss <= 1e-300);
  CHECK(std::isfinite(lg.dlogits(0)));

  CHECK(code_of([&] { nn::ce_loss(logits, 2); }) == errc::invalid_argument);
  CHECK(code_of([&] { nn::ce_loss(logits, -1); }) == errc::invalid_argument);

  // gradient matches central differences on random logits
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd z = random_vector(4, rng);
    const auto base = nn::ce_loss(z, 1);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      Eigen::VectorXd up = z, down = z;
      up(i) += h;
      down(i) -= h;
      const double numeric = (nn::ce_loss(up, 1).loss - nn::ce_loss(down, 1).loss) / (2 * h);
      CHECK(base.dlogits(i) == Catch::Approx(numeric).margin(1e-6));
    }
  }
}

TEST_CASE("loss is nonnegative and vanishes only with infinite margin", "[nn]") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto z = random_vector(3, rng);
    CHECK(nn::ce_loss(z, static_cast<Eigen::Index>(rng.below(3))).loss >= 0.0);
  }
  // at margin 30 the loss is ~9e-14: tiny but still strictly positive
  Eigen::VectorXd z(2);
  z << 30.0, 0.0;
  CHECK(nn::ce_loss(z, 0).loss > 0.0);
}

TEST_CASE("cosine schedule hits its endpoints", "[nn]") {
  CHECK(nn::cosine_lr(0, 30, 1e-3) == Catch::Approx(1e-3).margin(1e-18));
  CHECK(nn::cosine_lr(30, 30, 1e-3) == Catch::Approx(0.0).margin(1e-18));
  CHECK(nn::cosine_lr(15, 30, 1e-3) == Catch::Approx(5e-4).margin(1e-18));
  CHECK(code_of([] { nn::cosine_lr(31, 30, 1e-3); }) == errc::invalid_argument);
  CHECK(code_of([] { nn::cosine_lr(-1, 30, 1e-3); }) == errc::invalid_argument);
  CHECK(code_of([] { nn::cosine_lr(0, 0, 1e-3); }) == errc::invalid_argument);
}

TEST_CASE("linear head forward", "[nn]") {
  auto zero = nn::LinearHead::zeros(2, 3);
  CHECK(zero.forward(Eigen::Vector3d(1, 2, 3)).cwiseAbs().maxCoeff() == 0.0);

  auto ident = nn::LinearHead::zeros(2, 2);
  ident.weight() << 1, 0, 0, 1;
  const auto out = ident.forward(Eigen::Vector2d(3, -1));
  CHECK(out(0) == 3.0);
  CHECK(out(1) == -1.0);

  // against a naive dot-product loop
  Rng rng(5);
  auto head = nn::LinearHead::random(3, 4, rng);
  const auto x = random_vector(4, rng);
  const auto logits = head.forward(x);
  for (Eigen::Index c = 0; c < 3; ++c) {
    double acc = head.bias()(c);
    for (Eigen::Index j = 0; j < 4; ++j) acc += head.weight()(c, j) * x(j);
    CHECK(logits(c) == Catch::Approx(acc).margin(1e-12));
  }

  CHECK(code_of([&] { head.forward(random_vector(5, rng)); }) == errc::dimension_mismatch);
}

TEST_CASE("linear backward at zero input isolates the bias path", "[nn]") {
  Rng rng(6);
  auto head = nn::LinearHead::random(2, 3, rng);
  const auto res = nn::backward(head, Eigen::Vector3d::Zero(), 1);
  // weight gradient = dlogits * x' = 0
  CHECK(res.grad.head(6).cwiseAbs().maxCoeff() == 0.0);
  // bias gradient = softmax(b) - onehot(1)
  const Eigen::VectorXd b = head.bias();
  const double z = std::exp(b(0)) + std::exp(b(1));
  CHECK(res.grad(6) == Catch::Approx(std::exp(b(0)) / z).margin(1e-12));
  CHECK(res.grad(7) == Catch::Approx(std::exp(b(1)) / z - 1.0).margin(1e-12));
}

TEST_CASE("gradients are additive over samples", "[nn]") {
  Rng rng(7);
  auto head = nn::LinearHead::random(2, 5, rng);
  const auto x = random_vector(5, rng);
  const auto once = nn::backward(head, x, 0);
  // summing the same sample twice doubles every entry
  Eigen::VectorXd twice = nn::backward(head, x, 0).grad + once.grad;
  CHECK((twice - 2.0 * once.grad).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adamw steps match the hand-evaluated formulas", "[nn]") {
  SECTION("single-step oracle with bias correction") {
    Eigen::VectorXd w(1), g(1), mask(1);
    w << 1.0;
    g << 0.5;
    mask << 1.0;
    auto st = nn::OptimizerState::init(1);
    nn::adamw_step(st, w, g, mask, 1e-3);
    CHECK(w(0) == Catch::Approx(1.0 - 1e-3 * (0.5 / (0.5 + 1e-8) + 0.01)).margin(1e-15));
    CHECK(st.t == 1);
  }
  SECTION("zero gradient and zero decay leave parameters alone") {
    Eigen::VectorXd w(2), g(2), mask(2);
    w << 1.0, -2.0;
    g.setZero();
    mask.setOnes();
    nn::AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    auto st = nn::OptimizerState::init(2, cfg);
    nn::adamw_step(st, w, g, mask, 1e-3);
    CHECK(w(0) == 1.0);
    CHECK(w(1) == -2.0);
  }
  SECTION("zero gradient isolates the decoupled decay") {
    Eigen::VectorXd w(1), g(1), mask(1);
    w << 2.0;
    g << 0.0;
    mask << 1.0;
    auto st = nn::OptimizerState::init(1);
    nn::adamw_step(st, w, g, mask, 0.1);
    CHECK(w(0) == Catch::Approx(2.0 * (1.0 - 0.1 * 0.01)).margin(1e-15));
  }
  SECTION("masked entries are exempt from decay") {
    Eigen::VectorXd w(2), g(2), mask(2);
    w << 3.0, 3.0;
    g.setZero();
    mask << 1.0, 0.0;
    auto st = nn::OptimizerState::init(2);
    nn::adamw_step(st, w, g, mask, 0.1);
    CHECK(w(0) < 3.0);
    CHECK(w(1) == 3.0);
  }
  SECTION("with zero decay it is plain adam, scalar oracle over several steps") {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.01;
    double m = 0.0, v = 0.0, ref = 0.7;
    Eigen::VectorXd w(1), mask(1);
    w << 0.7;
    mask << 1.0;
    nn::AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    auto st = nn::OptimizerState::init(1, cfg);
    Rng rng(8);
    for (int t = 1; t <= 20; ++t) {
      const double grad = rng.normal();
      m = b1 * m + (1 - b1) * grad;
      v = b2 * v + (1 - b2) * grad * grad;
      const double mh = m / (1 - std::pow(b1, t));
      const double vh = v / (1 - std::pow(b2, t));
      ref -= lr * mh / (std::sqrt(vh) + eps);
      Eigen::VectorXd g(1);
      g << grad;
      nn::adamw_step(st, w, g, mask, lr);
      CHECK(w(0) == Catch::Approx(ref).margin(1e-14));
    }
  }
  SECTION("shape mismatch is rejected") {
    Eigen::VectorXd w(2), g(3), mask(2);
    w.setZero();
    g.setZero();
    mask.setOnes();
    auto st = nn::OptimizerState::init(2);
    CHECK(code_of([&] { nn::adamw_step(st, w, g, mask, 1e-3); }) == errc::dimension_mismatch);
  }
}

TEST_CASE("dilated convolution matches a hand-evaluated stencil", "[nn]") {
  // 1 channel, taps (1, 10, 100), dilation 2, zero padding:
  // out[t] = x[t-2] + 10 x[t] + 100 x[t+2]
  Eigen::MatrixXd x(1, 5);
  x << 1, 2, 3, 4, 5;
  Eigen::MatrixXd prev(1, 1), center(1, 1), next(1, 1);
  prev << 1;
  center << 10;
  next << 100;
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(1);
  const auto out = nn::dilated_conv1d(x, prev, center, next, bias, 2);
  REQUIRE(out.cols() == 5);
  CHECK(out(0, 0) == 10 + 300);
  CHECK(out(0, 1) == 20 + 400);
  CHECK(out(0, 2) == 1 + 30 + 500);
  CHECK(out(0, 3) == 2 + 40);
  CHECK(out(0, 4) == 3 + 50);
}

TEST_CASE("delta kernel passes sequences through and shifts covariantly", "[nn]") {
  Rng rng(9);
  const auto x = random_matrix(3, 7, rng);
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
  Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(3);

  const auto out = nn::dilated_conv1d(x, zero, ident, zero, bias, 1);
  CHECK((out - x).cwiseAbs().maxCoeff() == 0.0);

  // shifting the input shifts the output, away from the padding boundary
  Eigen::MatrixXd shifted(3, 7);
  shifted.leftCols(1).setZero();
  shifted.rightCols(6) = x.leftCols(6);
  const auto out_shift = nn::dilated_conv1d(shifted, zero, ident, zero, bias, 1);
  CHECK((out_shift.rightCols(6) - out.leftCols(6)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("tcn forward shape and degenerate parameter behavior", "[nn]") {
  nn::TcnConfig cfg;
  cfg.input_dim = 5;
  cfg.channels = 8;
  Rng rng(10);
  const auto head = nn::TcnHead::random(cfg, rng);
  for (const Eigen::Index t : {1, 7, 40}) {
    const auto logits = head.forward(random_matrix(5, t, rng));
    REQUIRE(logits.size() == 2);
    CHECK(logits.allFinite());
  }

  // all-zero parameters: logits equal the output bias for any input
  auto zero = nn::TcnHead::zeros(cfg);
  zero.out_bias() << 0.25, -0.5;
  const auto logits = zero.forward(random_matrix(5, 9, rng));
  CHECK(logits(0) == 0.25);
  CHECK(logits(1) == -0.5);

  CHECK(code_of([&] { head.forward(random_matrix(4, 5, rng)); }) == errc::dimension_mismatch);
  CHECK(code_of([&] { head.forward(Eigen::MatrixXd(5, 0)); }) == errc::invalid_argument);
}

TEST_CASE("residual connections add the input when channels match", "[nn]") {
  // one layer, channels == input dim, zero conv params: y = relu(0) + x = x,
  // so the pooled feature equals the input row means
  nn::TcnConfig cfg;
  cfg.input_dim = 3;
  cfg.channels = 3;
  cfg.num_layers = 1;
  auto head = nn::TcnHead::zeros(cfg);
  head.out_weight() << 1, 0, 0, 0, 1, 0;  // row 0 reads channel 0, row 1 channel 1
  Rng rng(11);
  const auto x = random_matrix(3, 6, rng);
  const auto logits = head.forward(x);
  CHECK(logits(0) == Catch::Approx(x.row(0).mean()).margin(1e-12));
  CHECK(logits(1) == Catch::Approx(x.row(1).mean()).margin(1e-12));

  // mismatched channel counts must not attempt the residual
  nn::TcnConfig wide = cfg;
  wide.channels = 4;
  const auto logits2 = nn::TcnHead::zeros(wide).forward(x);
  CHECK(logits2.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient check passes for both heads", "[nn]") {
  Rng rng(12);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng local(derive_seed(99, seed));
    auto linear = nn::LinearHead::random(2, 6, local);
    const auto x = random_vector(6, local);
    CHECK(nn::grad_check(linear, x, static_cast<Eigen::Index>(seed % 2)) <= 1e-6);

    nn::TcnConfig cfg;
    cfg.input_dim = 4;
    cfg.channels = 5;
    auto tcn = nn::TcnHead::random(cfg, local);
    const auto seq = random_matrix(4, 1 + static_cast<Eigen::Index>(local.below(9)), local);
    CHECK(nn::grad_check(tcn, seq, static_cast<Eigen::Index>(seed % 2)) <= 1e-4);
  }

  // a coarse step size degrades the check: truncation error dominates
  Rng local(1234);
  auto linear = nn::LinearHead::random(2, 6, local);
  const auto x = random_vector(6, local);
  const double fine = nn::grad_check(linear, x, 0, 1e-5);
  const double coarse = nn::grad_check(linear, x, 0, 1e-1);
  CHECK(coarse > 10.0 * fine);

  CHECK(code_of([&] { nn::grad_check(linear, x, 0, 0.0); }) == errc::invalid_argument);
}

TEST_CASE("training a single sample for 30 adamw steps strictly drops the loss", "[nn]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(500, seed));
    auto head = nn::LinearHead::random(2, 8, rng);
    const auto x = random_vector(8, rng);
    const Eigen::Index label = static_cast<Eigen::Index>(seed % 2);
    const double before = nn::ce_loss(head.forward(x), label).loss;
    auto st = nn::OptimizerState::init(head.theta.size());
    const auto mask = head.decay_mask(false);
    for (int t = 0; t < 30; ++t) {
      const auto back = nn::backward(head, x, label);
      nn::adamw_step(st, head.theta, back.grad, mask, 1e-3);
    }
    CHECK(nn::ce_loss(head.forward(x), label).loss < before);
  }
}
