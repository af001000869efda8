// Writes the sample models used in the README walkthrough:
//   <dir>/{mlp,lola,resnet20}/{model.json,weights.bin,calib.csv,input.csv,params.yaml}

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "orion/error.hpp"
#include "orion/tensor.hpp"
#include "orion/zoo.hpp"

namespace fs = std::filesystem;

namespace {

void write_csv(const fs::path& p, const std::vector<std::vector<double>>& rows) {
  std::ofstream os(p);
  if (!os) throw orion::Error(orion::Errc::Io, "cannot write " + p.string());
  os << std::setprecision(17);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << "\n";
  }
}

void emit(const fs::path& dir, const orion::zoo::ModelFiles& m, std::size_t in_size, std::size_t calib_count,
          std::uint64_t seed, const std::string& params_yaml) {
  fs::create_directories(dir);
  std::ofstream(dir / "model.json") << m.model.dump(2) << "\n";
  orion::save_tensors((dir / "weights.bin").string(), m.weights);
  write_csv(dir / "calib.csv", orion::zoo::uniform_samples(seed, calib_count, in_size));
  write_csv(dir / "input.csv", orion::zoo::uniform_samples(seed + 1000, 1, in_size));
  std::ofstream(dir / "params.yaml") << params_yaml;
  std::cout << "wrote " << dir.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"write sample models, weights and calibration data"};
  std::string out = "samples";
  std::uint64_t seed = 7;
  app.add_option("--out-dir", out, "destination directory");
  app.add_option("--seed", seed, "seed for calibration/input data");
  CLI11_PARSE(app, argc, argv);

  // Small ring for the two MNIST-sized nets so `run` stays quick.
  const std::string small =
      "ring_degree: 8192\n"
      "slots: 4096\n"
      "max_level: 25\n"
      "boot_depth: 15\n"
      "base_scale_log2: 40\n";
  const std::string full =
      "ring_degree: 65536\n"
      "slots: 32768\n"
      "max_level: 25\n"
      "boot_depth: 15\n"
      "base_scale_log2: 40\n";
  try {
    emit(fs::path(out) / "mlp", orion::zoo::mlp(), 784, 16, seed, small);
    emit(fs::path(out) / "lola", orion::zoo::lola(), 784, 16, seed, small);
    emit(fs::path(out) / "resnet20", orion::zoo::resnet20(), 3 * 32 * 32, 4, seed, full);
  } catch (const orion::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return orion::exit_code_for(e.code());
  }
  return 0;
}
