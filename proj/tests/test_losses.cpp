#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "attrsyn/losses.hpp"

using namespace attrsyn;
using T = Tensor<double>;
using V = Var<double>;

namespace {

T filled(std::vector<int> shape, double v) { return T::full(shape, v); }

T randomish(std::vector<int> shape, uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  T t = T::zeros(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

double scalar(const V& v) {
  REQUIRE(v->value.numel() == 1);
  return v->value[0];
}

}  // namespace

TEST_CASE("gradient penalty analytic cases") {
  T real = randomish({3, 2, 4, 4}, 1);
  T fake = randomish({3, 2, 4, 4}, 2);
  const double d = 2 * 4 * 4;

  // unit-gradient critic: sum(v)/sqrt(d) per sample
  auto unit_critic = [&](const V& v) { return scalar_mul(sample_sum(v), 1.0 / std::sqrt(d)); };
  CHECK(std::abs(scalar(gradient_penalty(unit_critic, real, fake, 7))) < 1e-6);

  auto const_critic = [&](const V& v) {
    (void)v;
    return constant(filled({3, 1, 1, 1}, 5.0));
  };
  CHECK(scalar(gradient_penalty(const_critic, real, fake, 7)) ==
        doctest::Approx(1.0).epsilon(1e-6));

  // critic depending on one element with weight 2: gradient norm 2
  T pick = T::zeros({3, 2, 4, 4});
  for (int b = 0; b < 3; ++b) pick[b * 32] = 2.0;
  auto steep_critic = [&](const V& v) { return sample_sum(mask_mul(v, pick)); };
  CHECK(scalar(gradient_penalty(steep_critic, real, fake, 7)) ==
        doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gradient penalty is deterministic per seed and symmetric on equal batches") {
  T x = randomish({2, 3, 4, 4}, 5);
  auto critic = [&](const V& v) { return sample_sum(square_v(v)); };
  double a = scalar(gradient_penalty(critic, x, x, 11));
  double b = scalar(gradient_penalty(critic, x, x, 11));
  CHECK(a == b);
  double c = scalar(gradient_penalty(critic, x.clone(), x.clone(), 11));
  CHECK(a == c);  // relabeling identical real/fake changes nothing
}

TEST_CASE("critic loss hand values") {
  LossWeights w;
  auto gp0 = constant(filled({1}, 0.0));
  auto r = constant(filled({2, 1, 2, 2}, 1.0));
  auto f = constant(filled({2, 1, 2, 2}, -1.0));
  CHECK(scalar(critic_loss(r, f, gp0, w)) == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(scalar(critic_loss(r, r, gp0, w)) == doctest::Approx(0.0).epsilon(1e-9));
  auto gp1 = constant(filled({1}, 1.0));
  CHECK(scalar(critic_loss(r, r, gp1, w)) == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("generator adversarial loss is the negated src mean") {
  CHECK(scalar(generator_adversarial_loss(constant(filled({2, 1, 3, 3}, 3.0)))) ==
        doctest::Approx(-3.0).epsilon(1e-9));
  CHECK(scalar(generator_adversarial_loss(constant(filled({4, 1, 1, 1}, 0.0)))) ==
        doctest::Approx(0.0));
  CHECK(scalar(generator_adversarial_loss(constant(T::from({2, 1, 1, 1}, {1.0, -1.0})))) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("attribute BCE analytic cases") {
  {
    AttributeVector y{{1}};
    auto v = cls_real(constant(filled({1, 1}, 0.0)), {y});
    CHECK(scalar(v) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  }
  {
    AttributeVector y{{1, 0}};
    auto v = cls_real(constant(T::from({1, 2}, {20.0, -20.0})), {y});
    CHECK(std::abs(scalar(v)) < 1e-6);
  }
  {
    AttributeVector y{{1}};
    auto v = cls_real(constant(filled({1, 1}, -100.0)), {y});
    CHECK(scalar(v) == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(std::isfinite(scalar(v)));
  }
  {
    std::vector<int> onehot(8, 0);
    onehot[3] = 1;
    AttributeVector y{onehot};
    auto v = cls_real(constant(filled({1, 8}, 0.0)), {y});
    CHECK(scalar(v) == doctest::Approx(8 * std::log(2.0)).epsilon(1e-9));
  }
}

TEST_CASE("real and fake classification losses share one kernel") {
  T logits = randomish({3, 4}, 9, -3, 3);
  std::vector<AttributeVector> ys;
  Rng rng(4);
  for (int b = 0; b < 3; ++b) {
    std::vector<int> v(4);
    for (auto& e : v) e = rng.bernoulli() ? 1 : 0;
    ys.push_back(AttributeVector{v});
  }
  double a = scalar(cls_real(constant(logits), ys));
  double b = scalar(cls_fake(constant(logits), ys));
  CHECK(a == b);  // bitwise
}

TEST_CASE("identity loss hand values and metric properties") {
  T x = randomish({2, 3, 4, 4}, 3);
  CHECK(scalar(identity_loss(constant(x), constant(x))) == doctest::Approx(0.0));
  T shifted = x.clone();
  for (int64_t i = 0; i < shifted.numel(); ++i) shifted[i] += 0.5;
  CHECK(scalar(identity_loss(constant(shifted), constant(x))) ==
        doctest::Approx(0.5).epsilon(1e-9));
  CHECK(scalar(identity_loss(constant(filled({1, 1, 2, 2}, -1.0)),
                             constant(filled({1, 1, 2, 2}, 1.0)))) ==
        doctest::Approx(2.0).epsilon(1e-9));
  T a = randomish({2, 2}, 10), b = randomish({2, 2}, 11), c = randomish({2, 2}, 12);
  double ab = scalar(identity_loss(constant(a), constant(b)));
  double bc = scalar(identity_loss(constant(b), constant(c)));
  double ac = scalar(identity_loss(constant(a), constant(c)));
  CHECK(ac <= ab + bc + 1e-12);
  CHECK(ab > 0);  // zero iff equal
}

TEST_CASE("parsing loss analytic cases") {
  // p_real peaks on class 2 everywhere
  T preal = T::zeros({1, 4, 2, 2});
  for (int64_t i = 0; i < 4; ++i) {
    preal[0 * 4 + i] = 0.1;
    preal[1 * 4 + i] = 0.2;
    preal[2 * 4 + i] = 0.6;
    preal[3 * 4 + i] = 0.1;
  }
  T onehot = T::zeros({1, 4, 2, 2});
  for (int64_t i = 0; i < 4; ++i) onehot[2 * 4 + i] = 1.0;
  CHECK(std::abs(scalar(parsing_loss(constant(preal), constant(onehot)))) < 1e-6);

  T uniform = T::full({1, 4, 2, 2}, 0.25);
  CHECK(scalar(parsing_loss(constant(preal), constant(uniform))) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-6));

  CHECK(std::abs(scalar(parsing_loss(constant(onehot), constant(onehot)))) < 1e-6);
}

TEST_CASE("bidirectional loss terms") {
  T x = randomish({2, 3, 4, 4}, 21);
  T s = randomish({2, 1, 4, 4}, 22);
  T z = randomish({2, 8, 1, 1}, 23);
  auto terms =
      bidirectional_loss(constant(x), constant(s), constant(x), constant(s), constant(z),
                         constant(z));
  CHECK(scalar(terms.image) == doctest::Approx(0.0));
  CHECK(scalar(terms.latent) == doctest::Approx(0.0));

  T s_off = s.clone();
  for (int64_t i = 0; i < s_off.numel(); ++i) s_off[i] += 0.2;
  auto t2 = bidirectional_loss(constant(x), constant(s), constant(x), constant(s_off),
                               constant(z), constant(z));
  CHECK(scalar(t2.image) == doctest::Approx(0.2).epsilon(1e-9));

  // no-side variant
  auto t3 = bidirectional_loss(constant(x), V{}, constant(x), V{}, constant(z), constant(z));
  CHECK(scalar(t3.image) == doctest::Approx(0.0));
}

TEST_CASE("total losses are exact weighted sums") {
  LossWeights w;  // paper defaults
  auto c = [](double v) { return constant(filled({1}, v)); };
  double tg = scalar(total_generator_loss(c(1.0), c(0.1), c(0.5), c(0.2), c(0.05), w));
  CHECK(tg == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(scalar(total_generator_loss(c(0), c(0), c(0), c(0), c(0), w)) == doctest::Approx(0.0));
  LossWeights zero;
  zero.lambda_bi = zero.lambda_cls = zero.lambda_id = zero.lambda_p = zero.lambda_gp = 0;
  CHECK(scalar(total_generator_loss(c(1.0), c(9), c(9), c(9), c(9), zero)) ==
        doctest::Approx(1.0));

  CHECK(scalar(total_discriminator_loss(c(-2.0), c(0.7), w)) ==
        doctest::Approx(-1.3).epsilon(1e-9));
  CHECK(scalar(total_discriminator_loss(c(-2.0), c(0.7), zero)) == doctest::Approx(-2.0));
  CHECK(scalar(total_discriminator_loss(c(0), c(0), w)) == doctest::Approx(0.0));
}

TEST_CASE("finiteness guard flags NaNs instead of propagating") {
  T bad = filled({2}, 0.0);
  bad[0] = std::nan("");
  CHECK_THROWS_AS(check_finite(constant(bad), "unit"), Error);
  T ok = randomish({2, 2}, 3);
  check_finite(constant(ok), "unit");
}

TEST_CASE("loss report csv line matches the header arity") {
  LossReport r;
  r.total_g = 1.25;
  std::string header = loss_csv_header();
  std::string line = loss_csv_line(42, r);
  auto count = [](const std::string& s) {
    int n = 1;
    for (char ch : s)
      if (ch == ',') ++n;
    return n;
  };
  CHECK(count(header) == count(line));
  CHECK(line.substr(0, 3) == "42,");
}
