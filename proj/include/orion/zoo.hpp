#pragma once

// Small deterministic model generators: model JSON plus random weights.
// Used by tests, the acceptance run and tools/make_samples.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "orion/tensor.hpp"

namespace orion::zoo {

struct ModelFiles {
  nlohmann::json model;
  TensorMap weights;
};

class Builder {
 public:
  explicit Builder(std::uint64_t seed) : rng_(seed) { m_.model["layers"] = nlohmann::json::array(); }

  std::string input(const std::vector<long>& shape, const std::string& name = "input") {
    return layer(name, "Input", {{"shape", shape}}, {});
  }

  std::string conv(const std::string& name, const std::string& in, long c_in, long c_out, long k, long stride,
                   long pad, bool bias = true) {
    add_tensor(name + ".weight", {c_out, c_in, k, k}, 1.0 / std::sqrt(static_cast<double>(c_in * k * k)));
    if (bias) add_tensor(name + ".bias", {c_out}, 0.1);
    return layer(name, "Conv2d",
                 {{"out_channels", c_out}, {"kernel_size", k}, {"stride", stride}, {"padding", pad}, {"bias", bias}},
                 {in});
  }

  std::string linear(const std::string& name, const std::string& in, long f_in, long f_out) {
    add_tensor(name + ".weight", {f_out, f_in}, 1.0 / std::sqrt(static_cast<double>(f_in)));
    add_tensor(name + ".bias", {f_out}, 0.1);
    return layer(name, "Linear", {{"out_features", f_out}}, {in});
  }

  std::string bn(const std::string& name, const std::string& in, long c) {
    std::uniform_real_distribution<double> g(0.8, 1.2), b(-0.1, 0.1), mu(-0.1, 0.1), var(0.5, 1.5);
    std::vector<double> gamma, beta, mean, v;
    for (long i = 0; i < c; ++i) {
      gamma.push_back(g(rng_));
      beta.push_back(b(rng_));
      mean.push_back(mu(rng_));
      v.push_back(var(rng_));
    }
    m_.weights[name + ".weight"] = Tensor({c}, gamma);
    m_.weights[name + ".bias"] = Tensor({c}, beta);
    m_.weights[name + ".running_mean"] = Tensor({c}, mean);
    m_.weights[name + ".running_var"] = Tensor({c}, v);
    return layer(name, "BatchNorm2d", nlohmann::json::object(), {in});
  }

  std::string act(const std::string& name, const std::string& in, const std::string& fn, int degree = 0) {
    nlohmann::json p = {{"fn", fn}};
    if (degree > 0) p["degree"] = degree;
    return layer(name, "Activation", p, {in});
  }

  std::string avgpool(const std::string& name, const std::string& in, long k) {
    return layer(name, "AvgPool2d", {{"kernel_size", k}}, {in});
  }
  std::string flatten(const std::string& name, const std::string& in) {
    return layer(name, "Flatten", nlohmann::json::object(), {in});
  }
  std::string add(const std::string& name, const std::string& a, const std::string& b) {
    return layer(name, "Add", nlohmann::json::object(), {a, b});
  }

  ModelFiles take() { return std::move(m_); }

 private:
  std::string layer(const std::string& name, const char* kind, nlohmann::json params, const std::vector<std::string>& ins) {
    m_.model["layers"].push_back({{"name", name}, {"kind", kind}, {"params", std::move(params)}});
    for (const auto& i : ins) m_.model["edges"].push_back({i, name});
    return name;
  }

  void add_tensor(const std::string& name, std::vector<long> shape, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> d(static_cast<std::size_t>(Tensor::numel_of(shape)));
    for (double& x : d) x = static_cast<double>(static_cast<float>(u(rng_)));  // survives the f32 weight file
    m_.weights[name] = Tensor(std::move(shape), std::move(d));
  }

  std::mt19937_64 rng_;
  ModelFiles m_;
};

// fc, x^2, fc, x^2, fc
inline ModelFiles mlp(std::uint64_t seed = 1, long in = 784, long hidden = 128, long out = 10) {
  Builder b(seed);
  auto x = b.input({in});
  x = b.linear("fc1", x, in, hidden);
  x = b.act("act1", x, "square");
  x = b.linear("fc2", x, hidden, hidden);
  x = b.act("act2", x, "square");
  b.linear("fc3", x, hidden, out);
  return b.take();
}

// conv(5 filters, 5x5, stride 2), act, fc, act, fc on a 1x28x28 input
inline ModelFiles lola(std::uint64_t seed = 2, const std::string& fn = "square", int degree = 0) {
  Builder b(seed);
  auto x = b.input({1, 28, 28});
  x = b.conv("conv1", x, 1, 5, 5, 2, 1);
  x = b.act("act1", x, fn, degree);
  x = b.flatten("flatten", x);
  x = b.linear("fc1", x, 5 * 13 * 13, 100);
  x = b.act("act2", x, fn, degree);
  b.linear("fc2", x, 100, 10);
  return b.take();
}

// CIFAR-style ResNet-20: 3 stages of 3 basic blocks, ReLU activations.
inline ModelFiles resnet20(std::uint64_t seed = 3, const std::string& fn = "relu") {
  Builder b(seed);
  auto x = b.input({3, 32, 32});
  x = b.conv("conv1", x, 3, 16, 3, 1, 1, false);
  x = b.bn("bn1", x, 16);
  x = b.act("act1", x, fn);
  long c = 16;
  for (int stage = 0; stage < 3; ++stage) {
    const long co = 16L << stage;
    for (int blk = 0; blk < 3; ++blk) {
      const std::string p = "layer" + std::to_string(stage + 1) + "." + std::to_string(blk);
      const long s = (stage > 0 && blk == 0) ? 2 : 1;
      auto y = b.conv(p + ".conv1", x, c, co, 3, s, 1, false);
      y = b.bn(p + ".bn1", y, co);
      y = b.act(p + ".act1", y, fn);
      y = b.conv(p + ".conv2", y, co, co, 3, 1, 1, false);
      y = b.bn(p + ".bn2", y, co);
      std::string sc = x;
      if (s != 1 || c != co) {
        sc = b.conv(p + ".shortcut", x, c, co, 1, s, 0, false);
        sc = b.bn(p + ".shortcut_bn", sc, co);
      }
      x = b.add(p + ".add", y, sc);
      x = b.act(p + ".act2", x, fn);
      c = co;
    }
  }
  x = b.avgpool("avgpool", x, 8);
  x = b.flatten("flatten", x);
  b.linear("fc", x, 64, 10);
  return b.take();
}

inline std::vector<std::vector<double>> uniform_samples(std::uint64_t seed, std::size_t count, std::size_t size,
                                                        double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<std::vector<double>> s(count, std::vector<double>(size));
  for (auto& v : s)
    for (double& x : v) x = u(rng);
  return s;
}

}  // namespace orion::zoo
