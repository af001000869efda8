#include <gtest/gtest.h>

#include <random>

#include "orion/params.hpp"

using namespace orion;

namespace {

Errc code_of(const CkksParams& p) {
  try {
    validate(p);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Io;  // sentinel: no error
}

std::string message_of(const CkksParams& p) {
  try {
    validate(p);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

ScaleDescriptor random_scale(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> e(-3, 3), lvl(0, 6), cnt(0, 4);
  ScaleDescriptor s = ScaleDescriptor::delta(e(rng));
  for (int i = cnt(rng); i > 0; --i) s.add_prime(lvl(rng), e(rng));
  return s;
}

}  // namespace

TEST(Params, ConjugateInvariantPresetIsValid) {
  auto p = make_params(1 << 13, 1 << 13, 5, 0);
  EXPECT_NO_THROW(validate(p));
}

TEST(Params, DefaultPresetIsValid) {
  auto p = default_params();
  EXPECT_EQ(p.ring_degree, 1 << 16);
  EXPECT_EQ(p.slots, 1 << 15);
  EXPECT_EQ(p.max_level, 25);
  EXPECT_EQ(p.boot_depth, 15);
  EXPECT_EQ(p.eff_level, 10);
  EXPECT_NO_THROW(validate(p));
}

TEST(Params, NonPowerOfTwoRingRejected) {
  auto p = make_params(1000, 500, 5, 0);
  EXPECT_EQ(code_of(p), Errc::InvalidParams);
  EXPECT_NE(message_of(p).find("ring_degree_power_of_two"), std::string::npos);
}

TEST(Params, InvariantsNamedInOrder) {
  auto p = default_params();
  p.slots = 1 << 14;
  EXPECT_NE(message_of(p).find("slots"), std::string::npos);

  p = make_params(1 << 16, 1 << 15, 10, 10);
  EXPECT_NE(message_of(p).find("eff_level_positive"), std::string::npos);

  p = default_params();
  p.eff_level = 9;
  EXPECT_NE(message_of(p).find("eff_level"), std::string::npos);

  p = default_params();
  p.prime_log2s[3] = 41.5;
  EXPECT_NE(message_of(p).find("prime_near_scale"), std::string::npos);
  p.prime_log2s[3] = 41.0;
  EXPECT_NO_THROW(validate(p));

  p = default_params();
  p.prime_log2s.pop_back();
  EXPECT_NE(message_of(p).find("prime_count"), std::string::npos);
}

TEST(Scale, MulExamples) {
  auto d = ScaleDescriptor::delta();
  EXPECT_EQ(scale_mul(d, d), ScaleDescriptor::delta(2));
  auto dq3 = scale_mul(d, ScaleDescriptor::prime(3));
  EXPECT_EQ(dq3.delta_exp(), 1);
  EXPECT_EQ(dq3.prime_exp(3), 1);
  auto x = ScaleDescriptor::delta(2);
  x.add_prime(3, -1);
  EXPECT_EQ(scale_mul(x, ScaleDescriptor::prime(3)), ScaleDescriptor::delta(2));
  EXPECT_TRUE(scale_mul(x, ScaleDescriptor::prime(3)).prime_exps().empty());
}

TEST(Scale, DivPrimeExamples) {
  auto dq5 = scale_mul(ScaleDescriptor::delta(), ScaleDescriptor::prime(5));
  EXPECT_EQ(scale_div_prime(dq5, 5), ScaleDescriptor::delta());

  auto r = scale_div_prime(ScaleDescriptor::delta(2), 5);
  EXPECT_EQ(r.delta_exp(), 2);
  EXPECT_EQ(r.prime_exp(5), -1);

  auto dq54 = scale_mul(dq5, ScaleDescriptor::prime(4));
  EXPECT_EQ(scale_div_prime(dq54, 5), scale_mul(ScaleDescriptor::delta(), ScaleDescriptor::prime(4)));
}

TEST(Scale, SolveExamples) {
  auto d = ScaleDescriptor::delta();
  auto target = scale_mul(d, ScaleDescriptor::prime(7));
  EXPECT_EQ(scale_solve(target, d), ScaleDescriptor::prime(7));
  EXPECT_EQ(scale_solve(d, d), ScaleDescriptor::unit());

  auto have = scale_div_prime(ScaleDescriptor::delta(2), 3);
  auto s = scale_solve(d, have);
  EXPECT_EQ(s.delta_exp(), -1);
  EXPECT_EQ(s.prime_exp(3), 1);
  EXPECT_EQ(scale_mul(have, s), d);
}

TEST(Scale, AlgebraProperties) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 500; ++t) {
    auto a = random_scale(rng), b = random_scale(rng), c = random_scale(rng);
    EXPECT_EQ(scale_mul(a, b), scale_mul(b, a));
    EXPECT_EQ(scale_mul(scale_mul(a, b), c), scale_mul(a, scale_mul(b, c)));
    EXPECT_EQ(scale_mul(a, scale_solve(c, a)), c);
    const int lvl = t % 7;
    EXPECT_EQ(scale_div_prime(scale_mul(a, ScaleDescriptor::prime(lvl)), lvl), a);
  }
}

TEST(Scale, NumericValueInLog2Domain) {
  auto p = default_params();
  p.prime_log2s[2] = 39.5;
  auto s = ScaleDescriptor::delta(2);
  s.add_prime(2, -1);
  EXPECT_DOUBLE_EQ(s.log2_value(p), 80.0 - 39.5);
  EXPECT_DOUBLE_EQ(s.value(p), std::exp2(40.5));
  EXPECT_DOUBLE_EQ(ScaleDescriptor::unit().value(p), 1.0);
}

TEST(Scale, Printing) {
  auto s = scale_div_prime(ScaleDescriptor::delta(2), 3);
  EXPECT_EQ(s.str(), "D^2*q3^-1");
  EXPECT_EQ(ScaleDescriptor::unit().str(), "1");
}
