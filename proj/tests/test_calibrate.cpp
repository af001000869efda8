#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "orion/compiler.hpp"
#include "orion/reference.hpp"
#include "orion/zoo.hpp"
#include "test_util.hpp"

using namespace orion;

namespace {

nlohmann::json layer(const std::string& name, const std::string& kind, nlohmann::json params = nlohmann::json::object()) {
  return {{"name", name}, {"kind", kind}, {"params", std::move(params)}};
}

Tensor diag(long n, double v) {
  Tensor t({n, n});
  for (long i = 0; i < n; ++i) t.data[static_cast<std::size_t>(i * n + i)] = v;
  return t;
}

std::vector<std::vector<double>> ramp_samples(double peak) {
  return {{peak, -peak / 2, 0.25, -0.5}, {0.1, 0.2, -peak, 0.3}};
}

}  // namespace

TEST(Calibrate, NoRescalingWhenValuesStayInRange) {
  nlohmann::json m = {{"layers", {layer("x", "Input", {{"shape", {4}}}), layer("fc", "Linear"),
                                  layer("sq", "Activation", {{"fn", "square"}})}}};
  TensorMap w{{"fc.weight", diag(4, 0.5)}};
  auto g = load_model(m, w);
  auto f = fit(g, ramp_samples(1.0));
  for (const auto& n : f.graph.nodes) EXPECT_EQ(n.carried, 1.0) << n.name;
  EXPECT_EQ(f.graph[f.graph.find("fc")].weight.data, w.at("fc.weight").data);
}

TEST(Calibrate, SmoothActivationIsFitOnScaledRange) {
  nlohmann::json m = {{"layers", {layer("x", "Input", {{"shape", {4}}}), layer("act", "Activation", {{"fn", "silu"}})}}};
  auto g = load_model(m, {});
  auto f = fit(g, ramp_samples(8.0));
  EXPECT_EQ(f.profile.at("x"), 8.0);
  const auto& act = f.graph[f.graph.find("act")];
  ASSERT_EQ(act.kind, LayerKind::Poly);
  EXPECT_EQ(f.graph[f.graph.input()].carried, 8.0);
  const double silu8 = 8.0 / (1.0 + std::exp(-8.0));
  EXPECT_NEAR(act.carried, silu8, 1e-12);
  // slot t stands for logical 8 t
  for (double t : {-1.0, -0.3, 0.0, 0.5, 1.0}) {
    const double x = 8.0 * t;
    EXPECT_NEAR(act.poly(t) * act.carried, x / (1.0 + std::exp(-x)), 1e-4);
  }
}

TEST(Calibrate, AddOperandsAreEqualized) {
  // x (range 2) feeds both a x4 linear (range 8) and the add directly
  nlohmann::json m = {{"layers", {layer("x", "Input", {{"shape", {4}}}), layer("fc", "Linear", {{"bias", false}}),
                                  layer("add", "Add")}},
                      {"edges", nlohmann::json::array({{"x", "fc"}, {"fc", "add"}, {"x", "add"}})}};
  TensorMap w{{"fc.weight", diag(4, 4.0)}};
  auto g = load_model(m, w);
  auto f = fit(g, ramp_samples(2.0));
  // |4x + x| peaks at 10: fc (single consumer) absorbs 8/10, x gets a ScaleDown of 2/10
  EXPECT_EQ(f.profile.at("fc"), 8.0);
  EXPECT_EQ(f.graph[f.graph.find("fc")].carried, 10.0);
  const int eq = f.graph.find("add.eq1");
  ASSERT_GE(eq, 0);
  EXPECT_EQ(f.graph[eq].kind, LayerKind::ScaleDown);
  EXPECT_DOUBLE_EQ(f.graph[eq].factor, 0.2);
  EXPECT_EQ(f.graph[f.graph.find("add")].carried, 10.0);
  const std::vector<double> x{1.0, -2.0, 0.5, 0.0};
  EXPECT_LT(test::rel_error(calibrated_reference(f.graph, x), forward(g, x)), 1e-12);
}

TEST(Calibrate, EqualizerFusesIntoSingleConsumerLinear) {
  nlohmann::json m = {{"layers", {layer("x", "Input", {{"shape", {4}}}), layer("a", "Linear", {{"bias", false}}),
                                  layer("b", "Linear", {{"bias", false}}), layer("add", "Add")}},
                      {"edges", nlohmann::json::array({{"x", "a"}, {"x", "b"}, {"a", "add"}, {"b", "add"}})}};
  TensorMap w{{"a.weight", diag(4, 8.0)}, {"b.weight", diag(4, 2.0)}};
  auto g = load_model(m, w);
  auto f = fit(g, ramp_samples(1.0));
  EXPECT_EQ(f.graph.find("add.eq1"), -1);
  EXPECT_EQ(f.graph[f.graph.find("b")].carried, 10.0);
  // 2 / 10
  EXPECT_DOUBLE_EQ(f.graph[f.graph.find("b")].weight.data[0], 0.2);
}

TEST(Calibrate, ZeroRangeIsAnError) {
  nlohmann::json m = {{"layers", {layer("x", "Input", {{"shape", {2}}}), layer("act", "Activation", {{"fn", "tanh"}})}}};
  auto g = load_model(m, {});
  try {
    fit(g, {{0.0, 0.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroRange);
  }
}

TEST(Calibrate, CalibratedGraphIsExactForPolynomialNets) {
  auto files = zoo::mlp(5, 32, 16, 4);
  for (auto& [k, t] : files.weights)
    for (double& v : t.data) v *= 6.0;  // push ranges well above 1
  auto g = load_model(files.model, files.weights);
  const auto samples = zoo::uniform_samples(1, 8, 32);
  auto f = fit(g, samples);
  EXPECT_GT(f.graph[f.graph.output()].carried, 1.0);
  for (const auto& x : samples) EXPECT_LT(test::rel_error(calibrated_reference(f.graph, x), forward(g, x)), 1e-12);
  // every slot value stays in [-1, 1] on the calibration data
  for (const auto& x : samples)
    for (const auto& out : forward_all(f.graph, scale_input(f.graph, x)))
      for (double v : out) EXPECT_LE(std::abs(v), 1.0 + 1e-12);
}

TEST(Calibrate, BatchNormFoldsIntoConv) {
  zoo::Builder b(3);
  auto x = b.input({2, 4, 4});
  x = b.conv("conv", x, 2, 3, 3, 1, 1);
  b.bn("bn", x, 3);
  auto files = b.take();
  auto g = load_model(files.model, files.weights);
  auto folded = fold_batchnorms(g);
  ASSERT_EQ(folded.size(), 2);
  EXPECT_EQ(folded[1].name, "bn");
  EXPECT_EQ(folded[1].kind, LayerKind::Conv2d);
  const auto in = zoo::uniform_samples(2, 1, 32)[0];
  EXPECT_LT(test::rel_error(forward(folded, in), forward(g, in)), 1e-12);
}

TEST(Calibrate, UserBootstrapRejected) {
  nlohmann::json m = {{"layers", {layer("x", "Input", {{"shape", {2}}}), layer("boot", "Bootstrap")}}};
  auto g = load_model(m, {});
  EXPECT_THROW(fit(g, {{0.5, 0.5}}), Error);
}

TEST(Calibrate, RangeProfileRoundTrip) {
  RangeProfile r;
  r.margin = 1.25;
  r.max_abs = {{"a", 3.0}, {"b", 0.5}};
  auto back = range_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back.margin, 1.25);
  EXPECT_EQ(back.max_abs, r.max_abs);
  EXPECT_THROW(back.at("c"), Error);
}

TEST(Calibrate, CsvSamples) {
  const auto path = (std::filesystem::temp_directory_path() / "orion_samples.csv").string();
  {
    std::ofstream os(path);
    os << "1,2,3\n4,5,6\n";
  }
  auto s = load_samples(path, 3);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1][2], 6.0);
  EXPECT_THROW(load_samples(path, 4), Error);
  std::filesystem::remove(path);
}
