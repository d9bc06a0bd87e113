// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <random>

#include "metaanchor/detector.hpp"
#include "metaanchor/error.hpp"
#include "metaanchor/generator.hpp"
#include "metaanchor/ops.hpp"
#include "support.hpp"

using namespace metaanchor;
using testing_support::grad_check;
using testing_support::random_tensor;

namespace {

// theta* + W2 relu(W1 b + extra) computed with plain loops.
std::vector<double> oracle(const Tensor& theta, const Tensor& w1, const Tensor& w2,
                           const AnchorEncoding& e, const std::vector<double>& extra = {}) {
  const std::size_t m = w1.dim(0), d = theta.numel();
  std::vector<double> h(m);
  for (std::size_t i = 0; i < m; ++i) {
    double v = w1.at(i * 2) * e.log_h + w1.at(i * 2 + 1) * e.log_w;
    if (!extra.empty()) v += extra[i];
    h[i] = v > 0.0 ? v : 0.0;
  }
  std::vector<double> out(d);
  for (std::size_t r = 0; r < d; ++r) {
    double v = theta.at(r);
    for (std::size_t i = 0; i < m; ++i) v += w2.at(r * m + i) * h[i];
    out[r] = v;
  }
  return out;
}

GeneratorParams di_params(std::size_t d, std::size_t m, std::mt19937_64& rng) {
  GeneratorParams p;
  p.theta_star = random_tensor({d}, rng, -1, 1, true);
  p.w1 = random_tensor({m, 2}, rng, -1, 1, true);
  p.w2 = random_tensor({d, m}, rng, -1, 1, true);
  return p;
}

GeneratorParams dd_params(std::size_t d, std::size_t m, std::size_t f, std::mt19937_64& rng) {
  GeneratorParams p;
  p.variant = GeneratorVariant::kDataDependent;
  p.theta_star = random_tensor({d}, rng, -1, 1, true);
  p.w11 = random_tensor({m, 2}, rng, -1, 1, true);
  p.w12 = random_tensor({m, f}, rng, -1, 1, true);
  p.w2 = random_tensor({d, m}, rng, -1, 1, true);
  return p;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TEST_CASE("theta_dim arithmetic") {
  CHECK(theta_dim(80, 256) == 193620);
  CHECK(theta_dim(1, 1) == 50);
  const HeadGeometry g{3, 5};
  CHECK(block_dim(g, HeadBlock::kFull) == g.theta_dim());
  CHECK(block_dim(g, HeadBlock::kClassification) + block_dim(g, HeadBlock::kRegression) == g.theta_dim());
}

TEST_CASE("flatten and unflatten are inverse") {
  std::mt19937_64 rng(1);
  const HeadGeometry g{3, 4};
  auto theta = random_tensor({g.theta_dim()}, rng);
  auto bank = unflatten_bank(theta, g);
  CHECK(bank.cls_filters.shape() == Shape{3, 4, 3, 3});
  CHECK(bank.cls_bias.shape() == Shape{3});
  CHECK(bank.reg_filters.shape() == Shape{4, 4, 3, 3});
  CHECK(bank.reg_bias.shape() == Shape{4});
  CHECK(bit_equal(flatten_bank(bank), theta));
  // Layout: classification bias sits right after the classification filters.
  CHECK(bank.cls_bias.at(0) == theta.at(g.cls_filter_size()));
  CHECK(bank.reg_bias.at(3) == theta.at(g.theta_dim() - 1));
  CHECK_THROWS_AS(unflatten_bank(random_tensor({g.theta_dim() + 1}, rng), g), ShapeError);
}

TEST_CASE("generate examples") {
  std::mt19937_64 rng(2);
  SUBCASE("W2 = 0 gives theta* for every encoding") {
    auto p = di_params(10, 4, rng);
    p.w2 = Tensor::zeros({10, 4});
    for (auto e : {AnchorEncoding{0.3, -1.2}, AnchorEncoding{2.0, 2.0}}) {
      auto t = generate_theta(p, e);
      CHECK(bit_equal(t, Tensor::from({10}, {p.theta_star.data().begin(), p.theta_star.data().end()})));
    }
  }
  SUBCASE("random case matches the matrix oracle") {
    auto p = di_params(10, 4, rng);
    for (int i = 0; i < 20; ++i) {
      std::uniform_real_distribution<double> u(-1.5, 1.5);
      const AnchorEncoding e{u(rng), u(rng)};
      auto t = generate_theta(p, e);
      auto o = oracle(p.theta_star, p.w1, p.w2, e);
      for (std::size_t r = 0; r < 10; ++r) CHECK(std::abs(t.at(r) - o[r]) <= 1e-12);
    }
  }
  SUBCASE("variant mismatch is rejected") {
    auto p = dd_params(10, 4, 3, rng);
    CHECK_THROWS_AS(generate_theta(p, {0, 0}), ValueError);
    auto q = di_params(10, 4, rng);
    CHECK_THROWS_AS(generate_theta_dd(q, {0, 0}, random_tensor({3, 2, 2}, rng)), ValueError);
  }
}

TEST_CASE("standard box maps to theta* bit-exactly") {
  std::mt19937_64 rng(3);
  for (std::size_t trial = 0; trial < 25; ++trial) {
    const HeadGeometry g{1 + trial % 4, 1 + trial % 5};
    auto p = init_generator(GeneratorVariant::kDataIndependent, g, HeadBlock::kFull, 1 + trial, rng);
    CHECK(bit_equal(generate_theta(p, {0.0, 0.0}), p.theta_star));
    auto bank = generate(p, {0.0, 0.0}, g);
    CHECK(bit_equal(flatten_bank(bank), p.theta_star));
  }
}

TEST_CASE("initialization follows the documented scheme") {
  std::mt19937_64 rng(4);
  const HeadGeometry g{3, 8};
  auto p = init_generator(GeneratorVariant::kDataIndependent, g, HeadBlock::kFull, 16, rng);
  CHECK(p.w1.shape() == Shape{16, 2});
  CHECK(p.w2.shape() == Shape{g.theta_dim(), 16});
  CHECK(!p.w11.defined());
  CHECK(!p.w12.defined());
  const double prior = -std::log(99.0);
  for (std::size_t c = 0; c < 3; ++c) CHECK(p.theta_star.at(g.cls_filter_size() + c) == doctest::Approx(prior));
  CHECK(1.0 / (1.0 + std::exp(-prior)) == doctest::Approx(0.01));
  const double bound = 1.0 / std::sqrt(72.0);
  for (std::size_t i = 0; i < g.cls_filter_size(); ++i) CHECK(std::abs(p.theta_star.at(i)) <= bound);
  for (double v : p.w2.data()) CHECK(std::abs(v) <= 0.25);
  CHECK_THROWS_AS(init_generator(GeneratorVariant::kDataIndependent, g, HeadBlock::kFull, 0, rng),
                  ValueError);
}

TEST_CASE("generate_dd examples") {
  std::mt19937_64 rng(5);
  const std::size_t d = 12, m = 5, f = 3;
  auto p = dd_params(d, m, f, rng);
  SUBCASE("W12 = 0 reduces to the data-independent form") {
    p.w12 = Tensor::zeros({m, f});
    GeneratorParams di;
    di.theta_star = p.theta_star;
    di.w1 = p.w11;
    di.w2 = p.w2;
    const AnchorEncoding e{0.4, -0.7};
    auto a = generate_theta_dd(p, e, random_tensor({f, 3, 3}, rng));
    auto b = generate_theta(di, e);
    for (std::size_t r = 0; r < d; ++r) CHECK(a.at(r) == doctest::Approx(b.at(r)).epsilon(1e-15));
  }
  SUBCASE("constant feature map matches the pooled oracle") {
    const double c = 0.37;
    auto feat = Tensor::full({f, 4, 5}, c);
    const AnchorEncoding e{-0.2, 0.9};
    std::vector<double> extra(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < f; ++j) extra[i] += p.w12.at(i * f + j) * c;
    auto t = generate_theta_dd(p, e, feat);
    auto o = oracle(p.theta_star, p.w11, p.w2, e, extra);
    for (std::size_t r = 0; r < d; ++r) CHECK(std::abs(t.at(r) - o[r]) <= 1e-12);
  }
  SUBCASE("W2 = 0 ignores the feature") {
    p.w2 = Tensor::zeros({d, m});
    auto t = generate_theta_dd(p, {1.0, 1.0}, random_tensor({f, 2, 2}, rng));
    CHECK(bit_equal(t, Tensor::from({d}, {p.theta_star.data().begin(), p.theta_star.data().end()})));
  }
  SUBCASE("channel mismatch is rejected") {
    CHECK_THROWS_AS(generate_theta_dd(p, {0, 0}, random_tensor({f + 1, 2, 2}, rng)), ShapeError);
  }
}

TEST_CASE("two_head_generate examples") {
  std::mt19937_64 rng(6);
  const HeadGeometry g{2, 3};
  auto cls = init_generator(GeneratorVariant::kDataIndependent, g, HeadBlock::kClassification, 6, rng);
  auto reg = init_generator(GeneratorVariant::kDataIndependent, g, HeadBlock::kRegression, 6, rng);
  const AnchorEncoding e{0.5, -0.25};
  SUBCASE("zero residuals give the concatenated theta*") {
    cls.w2 = Tensor::zeros(cls.w2.shape());
    reg.w2 = Tensor::zeros(reg.w2.shape());
    auto bank = two_head_generate(cls, reg, e, g);
    auto flat = flatten_bank(bank);
    for (std::size_t i = 0; i < g.cls_block(); ++i) CHECK(flat.at(i) == cls.theta_star.at(i));
    for (std::size_t i = 0; i < g.reg_block(); ++i) CHECK(flat.at(g.cls_block() + i) == reg.theta_star.at(i));
  }
  SUBCASE("regression half is independent of the classification generator") {
    reg.w2 = Tensor::zeros(reg.w2.shape());
    auto flat = flatten_bank(two_head_generate(cls, reg, e, g));
    for (std::size_t i = 0; i < g.reg_block(); ++i) CHECK(flat.at(g.cls_block() + i) == reg.theta_star.at(i));
  }
  SUBCASE("random case equals manual concatenation") {
    auto flat = flatten_bank(two_head_generate(cls, reg, e, g));
    auto a = generate_theta(cls, e), b = generate_theta(reg, e);
    for (std::size_t i = 0; i < g.cls_block(); ++i) CHECK(flat.at(i) == a.at(i));
    for (std::size_t i = 0; i < g.reg_block(); ++i) CHECK(flat.at(g.cls_block() + i) == b.at(i));
  }
  SUBCASE("swapped generators are rejected") {
    CHECK_THROWS_AS(two_head_generate(reg, cls, e, g), ShapeError);
  }
}

TEST_CASE("stacked rows equal per-anchor generation") {
  std::mt19937_64 rng(7);
  const HeadGeometry g{2, 3};
  auto cls = init_generator(GeneratorVariant::kDataIndependent, g, HeadBlock::kClassification, 6, rng);
  auto reg = init_generator(GeneratorVariant::kDataIndependent, g, HeadBlock::kRegression, 6, rng);
  const std::vector<AnchorEncoding> encs = {{0.1, 0.2}, {-0.5, 0.3}, {0.0, 0.0}};
  auto sb = stack_bank(generate_thetas(cls, encs), generate_thetas(reg, encs), g);
  CHECK(sb.cls_filters.shape() == Shape{6, 3, 3, 3});
  CHECK(sb.reg_filters.shape() == Shape{12, 3, 3, 3});
  for (std::size_t a = 0; a < encs.size(); ++a) {
    auto bank = two_head_generate(cls, reg, encs[a], g);
    for (std::size_t i = 0; i < bank.cls_filters.numel(); ++i)
      CHECK(sb.cls_filters.at(a * bank.cls_filters.numel() + i) == doctest::Approx(bank.cls_filters.at(i)).epsilon(1e-14));
    for (std::size_t i = 0; i < 4; ++i) CHECK(sb.reg_bias.at(a * 4 + i) == doctest::Approx(bank.reg_bias.at(i)).epsilon(1e-14));
  }
}

TEST_CASE("generator is Lipschitz with the operator-norm bound") {
  std::mt19937_64 rng(8);
  auto p = di_params(9, 5, rng);
  // Frobenius norms bound the operator norms from above.
  auto fro = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
  };
  const double lip = fro(p.w1) * fro(p.w2);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 200; ++i) {
    const AnchorEncoding a{u(rng), u(rng)}, b{u(rng), u(rng)};
    auto ta = generate_theta(p, a), tb = generate_theta(p, b);
    double d = 0.0;
    for (std::size_t r = 0; r < 9; ++r) d += (ta.at(r) - tb.at(r)) * (ta.at(r) - tb.at(r));
    const double db = std::hypot(a.log_h - b.log_h, a.log_w - b.log_w);
    CHECK(std::sqrt(d) <= lip * db + 1e-12);
  }
}

TEST_CASE("gradients reach theta*, W1 and W2 through a head forward pass") {
  std::mt19937_64 rng(9);
  const HeadGeometry g{2, 3};
  auto p = init_generator(GeneratorVariant::kDataIndependent, g, HeadBlock::kFull, 4, rng);
  p.theta_star = random_tensor(p.theta_star.shape(), rng, -0.5, 0.5, true);
  p.w1 = random_tensor(p.w1.shape(), rng, -1, 1, true);
  p.w2 = random_tensor(p.w2.shape(), rng, -0.5, 0.5, true);
  auto feat = random_tensor({3, 4, 4}, rng);
  const AnchorEncoding e{0.3, -0.6};
  auto loss = [&] {
    auto bank = generate(p, e, g);
    auto out = head_forward(feat, feat, bank);
    return ops::add(ops::sum(ops::mul(out.cls_logits, out.cls_logits)), ops::sum(out.reg_deltas));
  };
  CHECK(grad_check(loss, {p.theta_star, p.w1, p.w2}) <= 1e-6);

  auto q = dd_params(g.theta_dim(), 4, 3, rng);
  auto feat_param = random_tensor({3, 4, 4}, rng, -1, 1, true);
  auto loss_dd = [&] {
    auto bank = generate_dd(q, e, feat_param, g);
    auto out = head_forward(feat, feat, bank);
    return ops::add(ops::sum(ops::mul(out.cls_logits, out.cls_logits)), ops::sum(out.reg_deltas));
  };
  CHECK(grad_check(loss_dd, {q.theta_star, q.w11, q.w12, q.w2, feat_param}) <= 1e-6);
}
