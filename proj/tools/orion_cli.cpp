// orion: fit / compile / plan / run / report driver.
//
// Exit status: 0 ok, 2 input error, 3 infeasible, 4 runtime violation.

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "orion/calibrate.hpp"
#include "orion/compiler.hpp"
#include "orion/config.hpp"
#include "orion/netgraph.hpp"
#include "orion/reference.hpp"
#include "orion/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Map: {
      json j = json::object();
      for (const auto& kv : n) j[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return j;
    }
    case YAML::NodeType::Sequence: {
      json j = json::array();
      for (const auto& e : n) j.push_back(yaml_to_json(e));
      return j;
    }
    case YAML::NodeType::Scalar: {
      const std::string s = n.Scalar();
      // plain scalars only; quoted values stay strings
      if (n.Tag() != "!") {
        std::int64_t i;
        double d;
        bool b;
        if (YAML::convert<std::int64_t>::decode(n, i)) return i;
        if (YAML::convert<double>::decode(n, d)) return d;
        if (YAML::convert<bool>::decode(n, b)) return b;
      }
      return s;
    }
    default:
      return nullptr;
  }
}

bool has_ext(const std::string& path, const char* ext) { return fs::path(path).extension() == ext; }

// JSON or YAML, by extension.
json read_config(const std::string& path) {
  if (has_ext(path, ".json")) return orion::read_json_file(path);
  try {
    return yaml_to_json(YAML::LoadFile(path));
  } catch (const YAML::BadFile&) {
    throw orion::Error(orion::Errc::Io, "cannot open " + path);
  } catch (const YAML::Exception& e) {
    throw orion::Error(orion::Errc::Format, path + ": " + e.what());
  }
}

orion::CkksParams load_params(const std::string& path) {
  if (path.empty()) return orion::params_from_json(json::object());
  return orion::params_from_json(read_config(path));
}

orion::CostModel load_cost(const std::string& path, int max_level) {
  if (path.empty()) return orion::cost_model_from_json(json::object(), max_level);
  return orion::cost_model_from_json(read_config(path), max_level);
}

long input_size(const orion::LayerGraph& g) { return orion::Tensor::numel_of(g[g.input()].shape); }

struct ModelArgs {
  std::string model, weights, calib, ranges, params, cost;
  double margin = 1.0;
  bool symbolic = false;
};

void add_model_flags(CLI::App* c, ModelArgs& a) {
  c->add_option("--model", a.model, "model JSON")->required()->check(CLI::ExistingFile);
  c->add_option("--weights", a.weights, "weight tensors")->required()->check(CLI::ExistingFile);
  c->add_option("--calib", a.calib, "calibration samples (tensor file or CSV)")->check(CLI::ExistingFile);
  c->add_option("--ranges", a.ranges, "ranges.json from `fit` (skips profiling)")->check(CLI::ExistingFile);
  c->add_option("--params", a.params, "CKKS parameters (YAML or JSON)")->check(CLI::ExistingFile);
  c->add_option("--cost-model", a.cost, "cost model (YAML or JSON)")->check(CLI::ExistingFile);
  c->add_option("--margin", a.margin, "calibration headroom factor")->check(CLI::PositiveNumber);
}

orion::LayerGraph calibrated_graph(const ModelArgs& a) {
  const orion::LayerGraph g = orion::load_model_file(a.model, orion::load_tensors(a.weights));
  if (!a.ranges.empty()) {
    const orion::RangeProfile r = orion::range_from_json(orion::read_json_file(a.ranges));
    return orion::calibrate(orion::fold_batchnorms(g), r);
  }
  if (a.calib.empty()) throw orion::Error(orion::Errc::InvalidArgument, "one of --calib or --ranges is required");
  return orion::fit(g, orion::load_samples(a.calib, input_size(g)), a.margin).graph;
}

orion::Compiled compile_args(const ModelArgs& a, bool symbolic) {
  const orion::CkksParams params = load_params(a.params);
  const orion::CostModel cost = load_cost(a.cost, params.max_level);
  orion::CompileOptions opt;
  opt.symbolic = symbolic;
  return orion::compile_graph(calibrated_graph(a), params, cost, opt);
}

std::string fmt_num(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ------------------------------------------------------------------ fit

int cmd_fit(const ModelArgs& a, const std::string& out_dir) {
  if (a.calib.empty()) throw orion::Error(orion::Errc::InvalidArgument, "fit needs --calib");
  const orion::LayerGraph g = orion::load_model_file(a.model, orion::load_tensors(a.weights));
  const auto r = orion::fit(g, orion::load_samples(a.calib, input_size(g)), a.margin);
  fs::create_directories(out_dir);
  orion::write_file((fs::path(out_dir) / "ranges.json").string(), orion::to_json(r.profile).dump(2) + "\n");
  std::cout << "fit: " << r.profile.max_abs.size() << " layer ranges -> " << out_dir << "/ranges.json\n";
  return 0;
}

// -------------------------------------------------------------- compile

int cmd_compile(const ModelArgs& a, const std::string& out_dir) {
  const orion::Compiled c = compile_args(a, a.symbolic);
  orion::write_artifacts(c, out_dir);
  std::cout << "compile: " << c.program.code.size() << " instructions, " << c.store.items.size()
            << " constants, total depth " << c.total_depth() << " -> " << out_dir << "\n";
  return 0;
}

// ----------------------------------------------------------------- plan

int cmd_plan(const ModelArgs& a, const std::string& out_dir) {
  // Placement needs no numerics; compile symbolically.
  const orion::Compiled c = compile_args(a, true);
  const std::string text = orion::plan_json(c).dump(2) + "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    orion::write_file((fs::path(out_dir) / "plan.json").string(), text);
  }
  std::cout << text;
  return 0;
}

// ------------------------------------------------------------------ run

struct RunArgs {
  std::string dir, input, reference, output, metrics;
  std::string model, weights;  // cleartext reference from the original network
  double noise = 0.0;
  std::uint64_t seed = 0;
  bool symbolic = false;
};

void check_manifest(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) return;
  const json m = orion::read_json_file(mpath.string());
  for (const auto& [file, hex] : m.at("files").items()) {
    const fs::path p = dir / file;
    if (!fs::exists(p)) throw orion::Error(orion::Errc::Io, "missing artifact " + p.string());
    orion::Fnv1a h;
    h.str(orion::read_file(p.string()));
    if (h.hex() != hex.get<std::string>())
      throw orion::Error(orion::Errc::Format, p.string() + ": content hash does not match manifest");
  }
}

std::vector<double> first_sample(const std::string& path, long size) { return orion::load_samples(path, size).front(); }

int cmd_run(const RunArgs& a) {
  const fs::path dir(a.dir);
  check_manifest(dir);
  const auto at = [&](const char* f) { return (dir / f).string(); };
  const orion::CkksParams params = orion::params_from_json(orion::read_json_file(at("params.json")));
  const orion::CostModel cost = orion::cost_model_from_json(orion::read_json_file(at("cost.json")), params.max_level);
  const orion::IoSpec io = orion::io_from_json(orion::read_json_file(at("io.json")));
  const orion::FheProgram prog = orion::load_ir(at("program.ir"));
  const orion::PlaintextStore store = orion::load_store(at("constants.bin"));

  orion::VmOptions vopt;
  vopt.noise_sigma = a.noise;
  vopt.seed = a.seed;
  vopt.symbolic = a.symbolic;

  std::vector<double> x;
  if (!a.symbolic) {
    if (a.input.empty()) throw orion::Error(orion::Errc::InvalidArgument, "run needs --input (or --symbolic)");
    x = first_sample(a.input, orion::Tensor::numel_of(io.input.shape));
  }
  orion::RunResult r = orion::run_program(prog, store, io, params, cost, x, vopt);

  std::optional<std::vector<double>> ref;
  if (!a.symbolic && !a.reference.empty()) {
    ref = first_sample(a.reference, static_cast<long>(r.output.size()));
  } else if (!a.symbolic && !a.model.empty()) {
    if (a.weights.empty()) throw orion::Error(orion::Errc::InvalidArgument, "--model needs --weights");
    ref = orion::forward(orion::load_model_file(a.model, orion::load_tensors(a.weights)), x);
    if (ref->size() != r.output.size())
      throw orion::Error(orion::Errc::ShapeMismatch, "reference model output size differs from the program's");
  }
  if (ref) {
    double mad = 0.0;
    for (std::size_t i = 0; i < ref->size(); ++i) mad += std::abs((*ref)[i] - r.output[i]);
    mad /= static_cast<double>(ref->size());
    // exact agreement has no finite bit count; cap at double precision
    r.metrics.output_precision_bits = mad > 0.0 ? std::min(-std::log2(mad), 52.0) : 52.0;
  }

  const std::string metrics_path = a.metrics.empty() ? at("metrics.json") : a.metrics;
  orion::write_file(metrics_path, orion::to_json(r.metrics).dump(2) + "\n");
  if (!a.symbolic) {
    const std::string out_path = a.output.empty() ? at("output.bin") : a.output;
    orion::TensorMap m;
    m["output"] = orion::Tensor(io.output.shape, r.output);
    orion::save_tensors(out_path, m);
  }
  std::cout << "run: " << r.metrics.rotation_count << " rotations (" << r.metrics.rotation_count_incl_trivial
            << " incl. trivial), " << r.metrics.bootstrap_count << " bootstraps";
  if (r.metrics.output_precision_bits) std::cout << ", " << fmt_num(*r.metrics.output_precision_bits, 2) << " bits";
  std::cout << " -> " << metrics_path << "\n";
  return 0;
}

// --------------------------------------------------------------- report

struct ReportArgs {
  std::vector<std::string> files;
  std::optional<long> target_rots, target_boots;
};

std::string run_label(const std::string& path) {
  const fs::path p(path);
  if (p.filename() == "metrics.json" && p.has_parent_path() && !p.parent_path().filename().empty())
    return p.parent_path().filename().string();
  return p.stem().string();
}

int cmd_report(const ReportArgs& a) {
  if (a.files.empty()) {
    std::cerr << "report: at least one metrics.json is required\n";
    return 2;
  }
  std::vector<std::string> header{""};
  std::vector<json> runs;
  for (const auto& f : a.files) {
    runs.push_back(orion::read_json_file(f));
    header.push_back(run_label(f));
  }
  const bool with_target = a.target_rots || a.target_boots;
  if (with_target) header.push_back("target");

  bool any_bits = false;
  for (const auto& r : runs) any_bits |= r.contains("output_precision_bits") && !r["output_precision_bits"].is_null();

  std::vector<std::vector<std::string>> rows;
  auto row = [&](const std::string& name, const auto& cell, const std::string& target) {
    std::vector<std::string> out{name};
    for (const auto& r : runs) out.push_back(cell(r));
    if (with_target) out.push_back(target);
    rows.push_back(out);
  };
  auto int_cell = [](const char* key) {
    return [key](const json& r) { return r.contains(key) ? std::to_string(r.at(key).get<long>()) : std::string("-"); };
  };
  auto opt_str = [](const std::optional<long>& v) { return v ? std::to_string(*v) : std::string("-"); };

  row("# Rots", int_cell("rotation_count_incl_trivial"), opt_str(a.target_rots));
  row("# Rots (nontrivial)", int_cell("rotation_count"), "-");
  row("# Boots", int_cell("bootstrap_count"), opt_str(a.target_boots));
  row("# Instr", int_cell("instruction_count"), "-");
  row("Latency (est.)",
      [&](const json& r) {
        return r.contains("estimated_latency") ? fmt_num(r.at("estimated_latency").get<double>(), 0) : "-";
      },
      "-");
  if (any_bits)
    row("Precision (bits)",
        [&](const json& r) {
          const auto it = r.find("output_precision_bits");
          return it != r.end() && !it->is_null() ? fmt_num(it->get<double>(), 2) : std::string("-");
        },
        "-");

  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  auto print = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i == 0)
        std::cout << std::left << std::setw(static_cast<int>(width[i])) << r[i];
      else
        std::cout << "  " << std::right << std::setw(static_cast<int>(width[i])) << r[i];
    }
    std::cout << "\n";
  };
  print(header);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  std::cout << std::string(total - 2, '-') << "\n";
  for (const auto& r : rows) print(r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"orion: FHE neural-network compiler and cleartext CKKS VM"};
  app.require_subcommand(1);

  ModelArgs margs;
  std::string out_dir;

  auto* fit = app.add_subcommand("fit", "profile activation ranges on calibration data");
  add_model_flags(fit, margs);
  fit->add_option("--out-dir", out_dir, "output directory")->required();

  auto* compile = app.add_subcommand("compile", "compile a model to program.ir + constants + plan");
  add_model_flags(compile, margs);
  compile->add_option("--out-dir", out_dir, "artifact directory")->required();
  compile->add_flag("--symbolic", margs.symbolic, "metadata-only constants (counts and costs, no numerics)");

  auto* plan = app.add_subcommand("plan", "print the level/bootstrap plan as JSON");
  add_model_flags(plan, margs);
  plan->add_option("--out-dir", out_dir, "also write plan.json here");

  RunArgs rargs;
  auto* run = app.add_subcommand("run", "execute compiled artifacts on the VM");
  run->add_option("--out-dir", rargs.dir, "artifact directory from `compile`")->required()->check(CLI::ExistingDirectory);
  run->add_option("--input", rargs.input, "input tensor file or CSV")->check(CLI::ExistingFile);
  run->add_option("--reference", rargs.reference, "reference output (tensor file or CSV)")->check(CLI::ExistingFile);
  run->add_option("--model", rargs.model, "original model JSON; its cleartext output is the reference")
      ->check(CLI::ExistingFile);
  run->add_option("--weights", rargs.weights, "weights for --model")->check(CLI::ExistingFile);
  run->add_option("--output", rargs.output, "output tensor path (default <out-dir>/output.bin)");
  run->add_option("--metrics", rargs.metrics, "metrics path (default <out-dir>/metrics.json)");
  run->add_option("--noise", rargs.noise, "per-op Gaussian noise sigma")->check(CLI::NonNegativeNumber);
  run->add_option("--seed", rargs.seed, "noise seed");
  run->add_flag("--symbolic", rargs.symbolic, "track levels and scales only");

  ReportArgs pargs;
  auto* report = app.add_subcommand("report", "compare metrics.json files side by side");
  report->add_option("metrics", pargs.files, "metrics.json files")->check(CLI::ExistingFile);
  report->add_option("--target-rotations", pargs.target_rots, "reference rotation count column");
  report->add_option("--target-bootstraps", pargs.target_boots, "reference bootstrap count column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*fit) return cmd_fit(margs, out_dir);
    if (*compile) return cmd_compile(margs, out_dir);
    if (*plan) return cmd_plan(margs, out_dir);
    if (*run) return cmd_run(rargs);
    if (*report) return cmd_report(pargs);
  } catch (const orion::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return orion::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
