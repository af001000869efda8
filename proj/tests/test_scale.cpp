#include <gtest/gtest.h>

#include "orion/compiler.hpp"
#include "orion/zoo.hpp"

using namespace orion;

namespace {

Compiled compiled_mlp(int max_level = 8, int boot_depth = 2) {
  auto files = zoo::mlp(1, 32, 16, 4);
  auto g = load_model(files.model, files.weights);
  const auto p = make_params(128, 64, max_level, boot_depth);
  return compile_model(g, zoo::uniform_samples(2, 4, 32), p, CostModel::linear(p.max_level));
}

Compiled compiled_relu_block() {
  zoo::Builder b(6);
  auto x = b.input({2, 4, 4});
  auto y = b.conv("c1", x, 2, 2, 3, 1, 1);
  y = b.act("r", y, "relu");
  auto a = b.add("add", y, x);
  a = b.act("sq", a, "square");
  a = b.flatten("flat", a);
  b.linear("fc", a, 32, 3);
  auto files = b.take();
  auto g = load_model(files.model, files.weights);
  const auto p = make_params(128, 64, 16, 6);
  return compile_model(g, zoo::uniform_samples(3, 4, 32), p, CostModel::linear(p.max_level));
}

}  // namespace

TEST(ScaleInvariant, CompiledNetworksHaveNoViolations) {
  for (const auto& c : {compiled_mlp(), compiled_mlp(5, 2), compiled_relu_block()}) {
    EXPECT_TRUE(c.scales.ok());
    for (const auto& v : c.scales.violations) ADD_FAILURE() << v.layer << ": " << v.message;
    EXPECT_GT(c.scales.boundaries, 0);
    // every boundary-marked result is exactly D
    for (std::size_t i = 0; i < c.program.code.size(); ++i)
      if (c.program.code[i].boundary) EXPECT_EQ(c.scales.predicted[i].second, ScaleDescriptor::delta()) << i;
  }
}

TEST(ScaleInvariant, PendingSquareSkipsCorrection) {
  const auto c = compiled_mlp();
  // x^2 feeding a linear layer hands D^2/q on instead of spending a level
  const int sq = c.graph.find("act1");
  ASSERT_GE(sq, 0);
  EXPECT_TRUE(c.pending[static_cast<std::size_t>(sq)]);
  EXPECT_EQ(c.placement.depth[static_cast<std::size_t>(sq)], 1);
}

TEST(ScaleInvariant, CorrectedSquareWhenFeedingAnAdd) {
  zoo::Builder b(6);
  auto x = b.input({4});
  auto s = b.act("sq", x, "square");
  b.add("add", s, x);
  auto files = b.take();
  auto g = load_model(files.model, files.weights);
  const auto p = make_params(16, 8, 6, 2);
  // x^2 + x stays below 1, so no equalizer lands between the square and the add
  auto c = compile_model(g, {{0.5, -0.25, 0.4, 0.1}}, p, CostModel::linear(p.max_level));
  EXPECT_EQ(c.graph.find("add.eq0"), -1);
  const int sq = c.graph.find("sq");
  EXPECT_FALSE(c.pending[static_cast<std::size_t>(sq)]);
  EXPECT_EQ(c.placement.depth[static_cast<std::size_t>(sq)], 2);
  EXPECT_TRUE(c.scales.ok());
  auto r = run_compiled(c, {0.5, -0.25, 0.4, 0.1});
  EXPECT_NEAR(r.output[2], 0.4 * 0.4 + 0.4, 1e-9);
}

TEST(ScaleInvariant, FaultInjectionIsLocated) {
  auto c = compiled_mlp();
  // perturb the scale of one constant used by fc2
  std::size_t target = c.program.code.size();
  for (std::size_t i = 0; i < c.program.code.size(); ++i)
    if (c.program.code[i].layer == "fc2" && c.program.code[i].op == Opcode::PMULT) {
      target = i;
      break;
    }
  ASSERT_LT(target, c.program.code.size());
  auto& pt = c.store.items[static_cast<std::size_t>(c.program.code[target].b)];
  pt.scale.add_prime(0, 1);
  auto rep = verify_scale_invariant(c.program, c.store, c.params);
  ASSERT_FALSE(rep.ok());
  EXPECT_EQ(rep.violations.front().layer, "fc2");
  EXPECT_GE(rep.violations.front().index, target);
}

TEST(ScaleInvariant, EmptyProgram) {
  FheProgram prog;
  PlaintextStore store;
  auto rep = verify_scale_invariant(prog, store, make_params(16, 8, 4, 1));
  EXPECT_TRUE(rep.ok());
  EXPECT_EQ(rep.boundaries, 0);
}

TEST(ScaleInvariant, PredictionMatchesVmTrace) {
  const auto c = compiled_relu_block();
  VmOptions o;
  o.trace = true;
  Vm vm(c.params, c.cost, o);
  auto res = vm.execute(c.program, c.store, encode_input(c.io, zoo::uniform_samples(3, 1, 32)[0]));
  ASSERT_EQ(res.trace.size(), c.scales.predicted.size());
  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    EXPECT_EQ(res.trace[i].first, c.scales.predicted[i].first) << i;
    EXPECT_EQ(res.trace[i].second, c.scales.predicted[i].second) << i;
  }
}

TEST(ScaleInvariant, RescaleTargetScale) {
  ScaleDescriptor have = scale_mul(ScaleDescriptor::delta(), ScaleDescriptor::delta());
  have.add_prime(5, -1);
  const auto pt = rescale_target_scale(ScaleDescriptor::delta(), 4, have);
  const auto after = scale_div_prime(scale_mul(have, pt), 4);
  EXPECT_EQ(after, ScaleDescriptor::delta());
}

TEST(ScaleInvariant, BootstrapInputMustBeDelta) {
  const auto p = make_params(16, 8, 6, 2);
  ProgramBuilder b(p);
  Value x = b.input("x", 2);
  x = b.rescale(b.hmult(x, x));
  b.output("y", x);
  // the builder refuses this, so append the bootstrap by hand
  FheProgram prog = b.program();
  Instruction boot;
  boot.op = Opcode::BOOTSTRAP;
  boot.a = x.handle;
  boot.dst = x.handle + 100;
  prog.code.push_back(boot);
  prog.outputs[0].handle = boot.dst;
  auto rep = verify_scale_invariant(prog, b.store(), p);
  EXPECT_FALSE(rep.ok());
}
