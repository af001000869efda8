#include <gtest/gtest.h>

#include <random>

#include "orion/packing.hpp"
#include "orion/vm.hpp"
#include "test_util.hpp"

using namespace orion;

namespace {

CkksParams toy(long n, int L = 6) { return make_params(2 * n, n, L, 1); }

struct Run {
  std::vector<std::vector<double>> outs;
  MetricsReport metrics;
  int in_level = 0;
  std::vector<int> out_levels;
};

// Builds a program with `blocks` inputs at level `level`, lets `emit` fill
// it, and executes it on the given slot vectors.
template <class Emit>
Run run(const CkksParams& p, const std::vector<std::vector<double>>& inputs, Emit emit, int level = 3) {
  ProgramBuilder b(p);
  std::vector<Value> in;
  std::map<std::string, std::vector<double>> feed;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    in.push_back(b.input("x." + std::to_string(i), level));
    feed["x." + std::to_string(i)] = inputs[i];
  }
  std::vector<Value> out = emit(b, in);
  Run r;
  r.in_level = level;
  for (std::size_t i = 0; i < out.size(); ++i) {
    b.output("y." + std::to_string(i), out[i]);
    r.out_levels.push_back(out[i].level);
    EXPECT_EQ(out[i].scale, ScaleDescriptor::delta());
  }
  Vm vm(p, CostModel::linear(p.max_level));
  auto res = vm.execute(b.program(), b.store(), feed);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& ct = res.outputs.at("y." + std::to_string(i));
    EXPECT_EQ(ct.level, level - 1);
    EXPECT_EQ(ct.scale, ScaleDescriptor::delta());
    r.outs.push_back(ct.slots);
  }
  r.metrics = res.metrics;
  return r;
}

std::vector<double> head(const std::vector<double>& v, long n) { return {v.begin(), v.begin() + n}; }

SparseMatrix fig2_matrix() {
  std::vector<std::vector<double>> d(6, std::vector<double>(6));
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) d[r][c] = 1 + r * 6 + c;
  return SparseMatrix::from_dense(d);
}

}  // namespace

TEST(Diagonals, DenseSixBySixHasSixDiagonals) {
  auto d = extract_diagonals(fig2_matrix(), 6, 6);
  EXPECT_EQ(d.size(), 6u);
  // diag_1 = M[0,1], M[1,2], ..., M[5,0]
  EXPECT_EQ(d.diags.at(1), (std::vector<double>{2, 9, 16, 23, 30, 31}));
}

TEST(Diagonals, IdentityHasOneDiagonal) {
  SparseMatrix m(8, 8);
  for (int i = 0; i < 8; ++i) m.add(i, i, 1.0);
  auto d = extract_diagonals(m, 8, 8);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.diags.begin()->first, 0);
}

TEST(Diagonals, ReconstructionRoundTrip) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    auto m = test::random_matrix(rng, 8, 8, 0.6);
    auto d = extract_diagonals(m, 8, 16);
    EXPECT_EQ(diagonals_to_matrix(d).dense(), m.dense());
    EXPECT_EQ(extract_diagonals(diagonals_to_matrix(d), 8, 16).diags, d.diags);
  }
}

TEST(Diagonals, WidthAboveSlotCountRejected) {
  SparseMatrix m(4, 4);
  EXPECT_THROW(extract_diagonals(m, 8, 4), Error);
  EXPECT_THROW(extract_diagonals(m, 3, 8), Error);
}

TEST(Bsgs, PlainDiagonalMethodUsesSixRotations) {
  auto p = toy(6);
  p.slots = 6;
  auto m = fig2_matrix();
  auto d = extract_diagonals(m, 6, 6);
  auto plan = plain_diagonal_plan(d);
  EXPECT_EQ(plan.rotations(), 6);
  std::vector<double> v{0.1, -0.2, 0.3, 0.4, -0.5, 0.6};
  auto r = run(p, {v}, [&](ProgramBuilder& b, const std::vector<Value>& in) {
    return std::vector<Value>{emit_matvec(b, d, plan, in[0])};
  });
  EXPECT_EQ(r.metrics.rotation_count_incl_trivial, 6);
  EXPECT_EQ(r.metrics.rotation_count, 5);
  EXPECT_LT(test::rel_error(r.outs[0], m.apply(v)), 1e-12);
}

TEST(Bsgs, ThreeByTwoPlanUsesFiveRotations) {
  auto p = toy(6);
  p.slots = 6;
  auto m = fig2_matrix();
  auto d = extract_diagonals(m, 6, 6);
  auto plan = plan_bsgs(d);
  EXPECT_EQ(plan.n1, 3);
  EXPECT_EQ(plan.n2, 2);
  EXPECT_EQ(plan.rotations(), 5);
  std::vector<double> v{0.1, -0.2, 0.3, 0.4, -0.5, 0.6};
  auto r = run(p, {v}, [&](ProgramBuilder& b, const std::vector<Value>& in) {
    return std::vector<Value>{emit_matvec(b, d, plan, in[0])};
  });
  EXPECT_EQ(r.metrics.rotation_count_incl_trivial, 5);
  EXPECT_LT(test::rel_error(r.outs[0], m.apply(v)), 1e-12);
}

TEST(Bsgs, SingleDiagonalNeedsOnlyTrivialRotation) {
  SparseMatrix m(8, 8);
  for (int i = 0; i < 8; ++i) m.add(i, i, 2.0);
  auto plan = plan_bsgs(extract_diagonals(m, 8, 8));
  EXPECT_EQ(plan.rotations(), 1);
  EXPECT_EQ(plan.baby_set, (std::set<long>{0}));
  EXPECT_EQ(plan.giant_rotations(), 0);
}

TEST(Bsgs, DensePlanWithinSquareRootBound) {
  std::mt19937_64 rng(5);
  for (long w : {4L, 8L, 16L, 32L, 64L, 128L, 256L}) {
    auto d = extract_diagonals(test::random_matrix(rng, w, w), w, w, false);
    auto plan = plan_bsgs(d);
    const long bound = 2 * static_cast<long>(std::ceil(std::sqrt(static_cast<double>(w)))) + 1;
    EXPECT_LE(plan.rotations(), bound) << "w=" << w;
    // Independent oracle: exhaustive over every n1 in [1, w].
    long best = w + 1;
    for (long n1 = 1; n1 <= w; ++n1) best = std::min(best, plan_for(d.offsets(), w, n1).rotations());
    EXPECT_EQ(plan.rotations(), best) << "w=" << w;
  }
}

TEST(Bsgs, NeverWorseThanPlainDiagonals) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const long w = 1L << (2 + t % 5);
    auto d = extract_diagonals(test::random_matrix(rng, w, w, 0.05 + 0.02 * (t % 10)), w, w, false);
    if (d.size() == 0) continue;
    EXPECT_LE(plan_bsgs(d).rotations(), plain_diagonal_plan(d).rotations());
  }
}

TEST(Matvec, IdentityIsExactWithoutNontrivialRotations) {
  auto p = toy(16);
  SparseMatrix m(16, 16);
  for (int i = 0; i < 16; ++i) m.add(i, i, 1.0);
  std::mt19937_64 rng(2);
  auto v = test::random_vector(rng, 16);
  auto pack = pack_linear(m, {}, 16, 16);
  auto r = run(p, {v}, [&](ProgramBuilder& b, const std::vector<Value>& in) { return emit_linear(b, pack, in); });
  EXPECT_EQ(r.outs[0], v);
  EXPECT_EQ(r.metrics.rotation_count, 0);
}

TEST(Matvec, RandomDenseMatchesOracle) {
  auto p = toy(16);
  std::mt19937_64 rng(21);
  auto m = test::random_matrix(rng, 16, 16);
  auto v = test::random_vector(rng, 16);
  auto d = extract_diagonals(m, 16, 16);
  auto plan = plan_bsgs(d);
  auto r = run(p, {v}, [&](ProgramBuilder& b, const std::vector<Value>& in) {
    return std::vector<Value>{emit_matvec(b, d, plan, in[0])};
  });
  EXPECT_LT(test::rel_error(r.outs[0], m.apply(v)), 1e-9);
}

TEST(Matvec, SquatRowVectorGivesDotProduct) {
  auto p = toy(16);
  SparseMatrix m(1, 4);
  std::vector<double> w{0.5, -0.25, 1.0, 2.0}, x{0.1, 0.2, 0.3, 0.4};
  for (int c = 0; c < 4; ++c) m.add(0, c, w[c]);
  auto pack = pack_linear(m, {}, 4, 16);
  EXPECT_EQ(pack.mode, MatvecMode::Squat);
  EXPECT_EQ(pack.out_period, 1);
  auto r = run(p, {test::replicate(x, 4, 16)},
               [&](ProgramBuilder& b, const std::vector<Value>& in) { return emit_linear(b, pack, in); });
  EXPECT_NEAR(r.outs[0][0], 0.05 - 0.05 + 0.3 + 0.8, 1e-12);
}

TEST(Matvec, SquatFourBySixteen) {
  auto p = toy(64);
  std::mt19937_64 rng(4);
  auto m = test::random_matrix(rng, 4, 16);
  auto x = test::random_vector(rng, 16);
  auto r = run(p, {test::replicate(x, 16, 64)}, [&](ProgramBuilder& b, const std::vector<Value>& in) {
    return std::vector<Value>{emit_squat_matvec(b, m, 16, in[0])};
  });
  EXPECT_LT(test::rel_error(head(r.outs[0], 4), m.apply(x)), 1e-9);
  // result is replicated with period 4
  for (long t = 0; t < 64; ++t) EXPECT_NEAR(r.outs[0][t], r.outs[0][t % 4], 1e-12);
}

TEST(Matvec, SquatDegeneratesToSquare) {
  std::mt19937_64 rng(8);
  auto m = test::random_matrix(rng, 8, 8);
  auto pack = pack_linear(m, {}, 8, 16);
  EXPECT_EQ(pack.mode, MatvecMode::Square);
  auto d = extract_diagonals(m, 8, 16);
  EXPECT_EQ(pack.tiles[0][0].diags, d.diags);
  EXPECT_EQ(pack.plan.n1, plan_bsgs(d).n1);
}

TEST(Matvec, BlockedRandomMatchesOracle) {
  const long n = 16;
  auto p = toy(n);
  std::mt19937_64 rng(13);
  auto m = test::random_matrix(rng, 2 * n, 2 * n);
  auto x = test::random_vector(rng, 2 * n);
  auto r = run(p, {head(x, n), std::vector<double>(x.begin() + n, x.end())},
               [&](ProgramBuilder& b, const std::vector<Value>& in) { return emit_blocked_matvec(b, m, in); });
  ASSERT_EQ(r.outs.size(), 2u);
  std::vector<double> got = r.outs[0];
  got.insert(got.end(), r.outs[1].begin(), r.outs[1].end());
  EXPECT_LT(test::rel_error(got, m.apply(x)), 1e-9);
}

TEST(Matvec, BlockDiagonalIdentityPassesThrough) {
  const long n = 16;
  auto p = toy(n);
  SparseMatrix m(3 * n, 3 * n);
  for (long i = 0; i < 3 * n; ++i) m.add(i, i, 1.0);
  std::mt19937_64 rng(14);
  std::vector<std::vector<double>> in;
  for (int i = 0; i < 3; ++i) in.push_back(test::random_vector(rng, n));
  auto r = run(p, in, [&](ProgramBuilder& b, const std::vector<Value>& xs) { return emit_blocked_matvec(b, m, xs); });
  for (int i = 0; i < 3; ++i) EXPECT_EQ(r.outs[i], in[i]);
}

TEST(Matvec, BabyRotationsSharedAcrossTiles) {
  const long n = 16;
  auto p = toy(n);
  std::mt19937_64 rng(15);
  auto m = test::random_matrix(rng, 2 * n, 2 * n);
  auto pack = pack_linear(m, {}, 0, n);
  ASSERT_EQ(pack.mode, MatvecMode::Blocked);
  const long tiles = 4;
  std::vector<std::vector<double>> in{test::random_vector(rng, n), test::random_vector(rng, n)};
  auto r = run(p, in, [&](ProgramBuilder& b, const std::vector<Value>& xs) { return emit_linear(b, pack, xs); });
  // Baby rotations: once per input block, so 2 * |baby| overall.
  const long babies = 2 * static_cast<long>(pack.plan.baby_set.size());
  EXPECT_LT(babies, tiles * pack.plan.n1);
  EXPECT_EQ(r.metrics.rotation_count_incl_trivial, pack.plan.rotations() - pack.plan.giant_rotations() +
                                                       babies - static_cast<long>(pack.plan.baby_set.size()) +
                                                       2 * pack.plan.giant_rotations());
}

TEST(Matvec, BiasAddedAfterRescale) {
  auto p = toy(16);
  std::mt19937_64 rng(16);
  auto m = test::random_matrix(rng, 6, 8);
  std::vector<double> bias{1, 2, 3, 4, 5, 6};
  auto x = test::random_vector(rng, 8);
  auto pack = pack_linear(m, bias, 8, 16);
  auto r = run(p, {test::replicate(x, 8, 16)},
               [&](ProgramBuilder& b, const std::vector<Value>& in) { return emit_linear(b, pack, in); });
  auto want = m.apply(x);
  for (int i = 0; i < 6; ++i) want[i] += bias[i];
  EXPECT_LT(test::rel_error(head(r.outs[0], 6), want), 1e-12);
}
