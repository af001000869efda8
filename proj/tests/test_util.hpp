#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "orion/packing.hpp"

namespace orion::test {

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline SparseMatrix random_matrix(std::mt19937_64& rng, long rows, long cols, double density = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), coin(0.0, 1.0);
  SparseMatrix m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c)
      if (coin(rng) < density) m.add(r, c, u(rng));
  return m;
}

// max_i |a_i - b_i| / max(1, max_i |b_i|)
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double err = 0.0, mag = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    err = std::max(err, std::abs(a[i] - b[i]));
    mag = std::max(mag, std::abs(b[i]));
  }
  return err / mag;
}

// Replicates x with the given period over n slots.
inline std::vector<double> replicate(const std::vector<double>& x, long period, long n) {
  std::vector<double> s(static_cast<std::size_t>(n), 0.0);
  for (long t = 0; t < n; ++t) {
    const long i = t % period;
    s[static_cast<std::size_t>(t)] = i < static_cast<long>(x.size()) ? x[static_cast<std::size_t>(i)] : 0.0;
  }
  return s;
}

}  // namespace orion::test

#include "orion/conv_lowering.hpp"
#include "orion/vm.hpp"

namespace orion::test {

struct LoweredRun {
  std::vector<double> out;  // logical order of the output layout
  int levels_consumed = 0;
  MetricsReport metrics;
};

// Packs a slot-coordinate linear map, runs it on the VM and gathers the
// logical outputs through the lowered output layout.
inline LoweredRun run_lowered(const CkksParams& p, const LoweredLinear& lin, const SlotLayout& in,
                              const std::vector<double>& x, int level = 2) {
  const long n = p.slots;
  const auto packed_in = in.place(x, n);
  const long period = in.num_ciphertexts(n) == 1 ? in.period(n) : 0;
  auto pack = pack_linear(lin.matrix, lin.bias, period, n);
  ProgramBuilder b(p);
  std::vector<Value> vin;
  std::map<std::string, std::vector<double>> feed;
  for (std::size_t i = 0; i < packed_in.size(); ++i) {
    const std::string name = "x." + std::to_string(i);
    vin.push_back(b.input(name, level));
    feed[name] = packed_in[i];
  }
  auto outs = emit_linear(b, pack, vin);
  for (std::size_t i = 0; i < outs.size(); ++i) b.output("y." + std::to_string(i), outs[i]);
  Vm vm(p, CostModel::linear(p.max_level));
  auto res = vm.execute(b.program(), b.store(), feed);
  std::vector<std::vector<double>> cts;
  LoweredRun r;
  r.levels_consumed = level;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const auto& ct = res.outputs.at("y." + std::to_string(i));
    r.levels_consumed = std::min(r.levels_consumed, level - ct.level);
    cts.push_back(ct.slots);
  }
  r.out = lin.out.gather(cts, n);
  r.metrics = res.metrics;
  return r;
}

inline Tensor random_tensor(std::mt19937_64& rng, std::vector<long> shape) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : t.data) v = u(rng);
  return t;
}

}  // namespace orion::test
