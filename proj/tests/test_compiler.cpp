#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <iostream>

#include "orion/compiler.hpp"
#include "orion/reference.hpp"
#include "orion/zoo.hpp"
#include "test_util.hpp"

using namespace orion;

namespace {

CkksParams params(long slots, int max_level, int boot_depth) {
  return make_params(2 * slots, slots, max_level, boot_depth);
}

double mean_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST(Compiler, MlpHasDepthFiveAndNoBootstraps) {
  auto files = zoo::mlp(1, 64, 32, 10);
  auto g = load_model(files.model, files.weights);
  const auto samples = zoo::uniform_samples(7, 8, 64);
  const auto p = params(256, 8, 2);
  auto c = compile_model(g, samples, p, CostModel::linear(p.max_level));
  EXPECT_EQ(c.total_depth(), 5);
  EXPECT_EQ(c.plan.bootstrap_count(), 0);
  EXPECT_TRUE(c.scales.ok());
  for (const auto& v : c.scales.violations) ADD_FAILURE() << v.layer << ": " << v.message;

  const auto calibrated = c.graph;
  for (int t = 0; t < 3; ++t) {
    const auto& x = samples[static_cast<std::size_t>(t)];
    auto r = run_compiled(c, x);
    const auto want = forward(g, x);
    ASSERT_EQ(r.output.size(), want.size());
    EXPECT_LT(test::rel_error(r.output, want), 1e-9);
    EXPECT_LT(test::rel_error(r.output, calibrated_reference(calibrated, x)), 1e-9);
  }
}

TEST(Compiler, TightBudgetForcesBootstraps) {
  auto files = zoo::mlp(1, 64, 32, 10);
  auto g = load_model(files.model, files.weights);
  const auto samples = zoo::uniform_samples(7, 8, 64);
  const auto p = params(256, 5, 2);  // L_eff = 3
  auto c = compile_model(g, samples, p, CostModel::linear(p.max_level));
  EXPECT_GE(c.plan.bootstrap_count(), 1);
  EXPECT_TRUE(c.scales.ok());
  auto r = run_compiled(c, samples[0]);
  EXPECT_LT(test::rel_error(r.output, forward(g, samples[0])), 1e-9);
  EXPECT_EQ(r.metrics.bootstrap_count, c.plan.bootstrap_count());
}

TEST(Compiler, LolaMatchesCalibratedReference) {
  auto files = zoo::lola(2);
  auto g = load_model(files.model, files.weights);
  const auto samples = zoo::uniform_samples(9, 4, 784);
  const auto p = params(1024, 8, 2);
  auto c = compile_model(g, samples, p, CostModel::linear(p.max_level));
  EXPECT_TRUE(c.scales.ok());
  auto r = run_compiled(c, samples[1]);
  EXPECT_LE(mean_abs(r.output, calibrated_reference(c.graph, samples[1])), 1e-8);
}

TEST(Compiler, ResidualBlockWithReluRuns) {
  zoo::Builder b(4);
  auto x = b.input({2, 4, 4});
  auto y = b.conv("c1", x, 2, 4, 3, 2, 1);
  y = b.act("r1", y, "relu");
  y = b.conv("c2", y, 4, 4, 3, 1, 1);
  auto s = b.conv("sc", x, 2, 4, 1, 2, 0);
  auto a = b.add("add", y, s);
  b.act("r2", a, "relu");
  auto files = b.take();
  auto g = load_model(files.model, files.weights);
  const auto samples = zoo::uniform_samples(5, 6, 32);
  const auto p = params(64, 20, 8);  // L_eff = 12 < relu depth chain
  auto c = compile_model(g, samples, p, CostModel::linear(p.max_level));
  EXPECT_TRUE(c.scales.ok());
  for (const auto& v : c.scales.violations) ADD_FAILURE() << v.layer << ": " << v.message;
  EXPECT_GE(c.plan.bootstrap_count(), 1);
  auto r = run_compiled(c, samples[0]);
  EXPECT_LT(test::rel_error(r.output, calibrated_reference(c.graph, samples[0])), 1e-9);
  // the builtin sign composite only approximates ReLU near zero
  EXPECT_LT(test::rel_error(r.output, forward(g, samples[0])), 5e-2);
}

TEST(Compiler, ArtifactsAreDeterministic) {
  auto files = zoo::mlp(1, 16, 8, 4);
  auto g = load_model(files.model, files.weights);
  const auto samples = zoo::uniform_samples(3, 4, 16);
  const auto p = params(64, 8, 2);
  auto c1 = compile_model(g, samples, p, CostModel::linear(p.max_level));
  auto c2 = compile_model(g, samples, p, CostModel::linear(p.max_level));
  const auto dir = std::filesystem::temp_directory_path() / "orion_test_artifacts";
  write_artifacts(c1, (dir / "a").string());
  write_artifacts(c2, (dir / "b").string());
  EXPECT_EQ(read_file((dir / "a" / "manifest.json").string()), read_file((dir / "b" / "manifest.json").string()));
  auto prog = load_ir((dir / "a" / "program.ir").string());
  auto store = load_store((dir / "a" / "constants.bin").string());
  auto io = io_from_json(nlohmann::json::parse(read_file((dir / "a" / "io.json").string())));
  auto r = run_program(prog, store, io, p, CostModel::linear(p.max_level), samples[0]);
  EXPECT_LT(test::rel_error(r.output, forward(g, samples[0])), 1e-9);
  std::filesystem::remove_all(dir);
}

TEST(Compiler, InfeasibleBudgetNamesLayer) {
  zoo::Builder b(4);
  auto x = b.input({8});
  b.act("silu", x, "silu", 127);  // depth 7
  auto files = b.take();
  auto g = load_model(files.model, files.weights);
  const auto p = params(16, 6, 2);  // L_eff 4
  try {
    compile_model(g, zoo::uniform_samples(1, 2, 8), p, CostModel::linear(p.max_level));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Infeasible);
    EXPECT_NE(std::string(e.what()).find("silu"), std::string::npos);
  }
}

TEST(Compiler, SiluLolaTracksOriginalNetwork) {
  auto files = zoo::lola(2, "silu", 127);
  auto g = load_model(files.model, files.weights);
  const auto samples = zoo::uniform_samples(11, 16, 784);
  const auto p = params(1024, 20, 8);  // L_eff 12 < depth 17
  // headroom: a degree-127 fit blows up just outside [-1, 1]
  auto c = compile_model(g, samples, p, CostModel::linear(p.max_level), 1.5);
  EXPECT_EQ(c.total_depth(), 17);
  EXPECT_GE(c.plan.bootstrap_count(), 1);
  EXPECT_TRUE(c.scales.ok());
  const auto x = zoo::uniform_samples(12, 1, 784)[0];
  auto r = run_compiled(c, x);
  EXPECT_GE(precision_bits(r.output, forward(g, x)), 10.0);
}

TEST(Compiler, SymbolicResnet20) {
  auto files = zoo::resnet20(3);
  auto g = load_model(files.model, files.weights);
  const auto p = default_params();
  CompileOptions opt;
  opt.symbolic = true;
  auto c = compile_model(g, zoo::uniform_samples(4, 2, 3 * 32 * 32), p, CostModel::linear(p.max_level), 1.0, opt);
  EXPECT_TRUE(c.scales.ok());
  EXPECT_GT(c.plan.bootstrap_count(), 0);
  VmOptions vo;
  vo.symbolic = true;
  auto r = run_compiled(c, {}, vo);
  EXPECT_EQ(r.metrics.bootstrap_count, c.plan.bootstrap_count());
  std::cout << "resnet20: rotations " << r.metrics.rotation_count_incl_trivial << " bootstraps "
            << r.metrics.bootstrap_count << " depth " << c.total_depth() << "\n";
}
