#include "spdc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "spdc/analysis.hpp"
#include "spdc/error.hpp"
#include "spdc/io.hpp"
#include "spdc/loop_detector.hpp"
#include "spdc/model.hpp"
#include "spdc/pipeline.hpp"
#include "spdc/reconstruction.hpp"

namespace spdc::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void echo_config(std::ostream& out, const CLI::App& sub) {
  out << "# command=" << sub.get_name() << '\n';
  std::istringstream lines(sub.config_to_str(true, false));
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty()) out << "# " << line << '\n';
  }
}

PathWeights weights_from(const std::string& spec, int bins) {
  if (spec.empty()) return PathWeights::uniform(bins);
  return PathWeights(io::parse_double_list(spec));
}

struct ModelArgs {
  double N = 0, eta = 1, eta_prime = 1, M = 1;
  int n_max = -1;
  double tail_bound = default_tail_bound;
  std::string out, source_out;
};

struct ResponseArgs {
  std::string weights;
  int bins = default_bins;
  int n_max = default_bins;
  std::string out;
};

struct SimulateArgs {
  double N = 0, eta = 1, eta_prime = 1;
  int M = 1;
  std::int64_t pulses = 10'000'000;
  std::uint64_t seed = 1;
  std::string weights_a, weights_b;
  std::string out;
};

struct ReconstructArgs {
  std::string histogram, response_a, response_b;
  int n_max = default_bins;
  double tol = 1e-10;
  int max_iter = 100000;
  std::string out, report;
};

struct AnalyzeArgs {
  std::string rho, out;
};

struct MapArgs {
  int which = 2;
  double M = 1;
  std::string eta_grid, rate_grid, out;
};

struct PipelineArgs {
  std::string config, out_dir;
};

int cmd_model(const ModelArgs& a, bool explicit_bound, std::ostream& out) {
  const EffectiveSource src{a.N, a.eta, a.eta_prime, a.M};
  src.validate();
  JointDistribution rho;
  if (a.n_max >= 0) {
    rho = joint_distribution(src, a.n_max, explicit_bound ? a.tail_bound : 1.0);
  } else {
    rho = joint_distribution_auto(src, a.tail_bound);
  }
  io::save(a.out, [&](std::ostream& o) { io::write_joint_distribution(o, rho); });
  if (!a.source_out.empty()) {
    io::save(a.source_out, [&](std::ostream& o) { io::write_effective_source(o, src); });
  }
  out << "n_max=" << rho.n_max() << '\n'
      << "sum=" << io::format_double(rho.probs.sum()) << '\n'
      << "tail_mass=" << io::format_double(rho.tail_mass) << '\n';
  return success;
}

int cmd_response(const ResponseArgs& a, std::ostream& out) {
  const auto weights = weights_from(a.weights, a.bins);
  const auto resp = response_matrix(weights, a.n_max);
  io::save(a.out, [&](std::ostream& o) { io::write_response(o, resp); });
  out << "B=" << resp.bins() << '\n' << "n_max=" << resp.n_max() << '\n';
  return success;
}

int cmd_simulate(const SimulateArgs& a, int threads, std::ostream& out) {
  ExperimentConfig cfg;
  cfg.source = EffectiveSource{a.N, a.eta, a.eta_prime, static_cast<double>(a.M)};
  cfg.pulses = a.pulses;
  cfg.seed = a.seed;
  cfg.weights_a = weights_from(a.weights_a, default_bins);
  cfg.weights_b = weights_from(a.weights_b, default_bins);
  const auto hist = simulate_experiment(cfg, threads);
  io::save(a.out, [&](std::ostream& o) { io::write_histogram(o, hist); });
  out << "pulses=" << hist.pulses << '\n' << "total=" << hist.total() << '\n';
  return success;
}

int cmd_reconstruct(const ReconstructArgs& a, std::ostream& out, std::ostream& err) {
  const auto hist = io::load_histogram(a.histogram);
  const auto resp_a = io::load_response(a.response_a);
  const auto resp_b = io::load_response(a.response_b);
  const auto result = em_reconstruct(hist, resp_a, resp_b, a.n_max, EmOptions{a.tol, a.max_iter});
  io::save(a.out, [&](std::ostream& o) { io::write_joint_distribution(o, result.rho); });
  const std::string report = a.report.empty() ? a.out + ".report.txt" : a.report;
  io::save(report, [&](std::ostream& o) { io::write_reconstruction_report(o, result); });
  io::write_reconstruction_report(out, result);
  if (!result.converged) {
    err << "warning: EM reached max_iter=" << a.max_iter << " without meeting tol=" << a.tol << '\n';
  }
  return success;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const auto rho = io::load_joint_distribution(a.rho);
  const auto ch = characterize(rho);
  if (!a.out.empty()) io::save(a.out, [&](std::ostream& o) { io::write_characterization(o, ch); });
  io::write_characterization(out, ch);
  return success;
}

int cmd_map(const MapArgs& a, int threads, std::ostream& out) {
  const auto etas = parse_grid(a.eta_grid);
  const auto rates = parse_grid(a.rate_grid);
  const auto map = contamination_map(etas, rates, a.M, a.which, threads);
  io::save(a.out, [&](std::ostream& o) { io::write_contamination_map(o, map); });
  int unreachable = 0;
  for (Eigen::Index i = 0; i < map.epsilon.size(); ++i) {
    if (map.epsilon.data()[i] == ContaminationMap::unreachable) ++unreachable;
  }
  out << "cells=" << map.epsilon.size() << '\n' << "unreachable=" << unreachable << '\n';
  return success;
}

int cmd_pipeline(const PipelineArgs& a, int threads, std::ostream& out, std::ostream& err) {
  const auto cfg = io::load_experiment_config(a.config);
  const auto report = run_full(cfg, threads);
  io::write_run_report(a.out_dir, report);
  out << "status=" << (report.failures.empty() ? "ok" : "partial") << '\n';
  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  for (const auto& f : report.failures) err << "failure: " << f << '\n';
  if (report.characterization) io::write_characterization(out, *report.characterization);
  return success;
}

}  // namespace

int default_threads() {
  const char* env = std::getenv("SPDC_THREADS");
  if (env == nullptr) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1 || v > 1024) return 1;
  return static_cast<int>(v);
}

std::vector<double> parse_grid(const std::string& spec) {
  if (spec.empty()) throw UsageError("empty grid specification");
  std::vector<double> out;
  try {
    const bool lin = spec.rfind("lin:", 0) == 0;
    const bool log = spec.rfind("log:", 0) == 0;
    if (lin || log) {
      std::string body = spec.substr(4);
      std::replace(body.begin(), body.end(), ':', ',');
      const auto parts = io::parse_double_list(body);
      if (parts.size() != 3 || parts[2] < 1 || parts[2] != std::floor(parts[2])) {
        throw UsageError("grid range must be <kind>:start:stop:count");
      }
      const int count = static_cast<int>(parts[2]);
      const double lo = log ? std::log(parts[0]) : parts[0];
      const double hi = log ? std::log(parts[1]) : parts[1];
      if (!std::isfinite(lo) || !std::isfinite(hi)) throw UsageError("invalid grid bounds");
      for (int i = 0; i < count; ++i) {
        const double x = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
        out.push_back(log ? std::exp(x) : x);
      }
    } else {
      out = io::parse_double_list(spec);
    }
  } catch (const Error& e) {
    throw UsageError(std::string("bad grid '") + spec + "': " + e.what());
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Photon-number statistics of lossy multimode down-conversion sources", "spdc"};
  app.require_subcommand(1);
  int threads = default_threads();

  ModelArgs model;
  auto* model_cmd = app.add_subcommand("model", "Joint photon-number distribution of the source");
  model_cmd->add_option("--N", model.N, "Mean photons per mode pair before losses")->required();
  model_cmd->add_option("--eta", model.eta, "Transmission of arm a")->required();
  model_cmd->add_option("--eta-prime", model.eta_prime, "Transmission of arm b")->required();
  model_cmd->add_option("--M", model.M, "Equivalent number of mode pairs")->capture_default_str();
  model_cmd->add_option("--n-max", model.n_max, "Truncation order (-1 picks one from --tail-bound)")
      ->capture_default_str();
  auto* tail_opt = model_cmd->add_option("--tail-bound", model.tail_bound, "Largest acceptable tail mass")
                       ->capture_default_str();
  model_cmd->add_option("--out", model.out, "Output matrix file")->required();
  model_cmd->add_option("--source-out", model.source_out, "Also write the source parameters here");

  ResponseArgs response;
  auto* response_cmd = app.add_subcommand("response", "Conditional click matrix of a loop detector");
  response_cmd->add_option("--weights", response.weights, "Comma-separated path weights (default uniform)");
  response_cmd->add_option("--bins", response.bins, "Number of paths for uniform weights")->capture_default_str();
  response_cmd->add_option("--n-max", response.n_max, "Largest photon number")->capture_default_str();
  response_cmd->add_option("--out", response.out, "Output matrix file")->required();

  SimulateArgs simulate;
  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo click histogram");
  simulate_cmd->add_option("--N", simulate.N, "Mean photons per mode pair before losses")->required();
  simulate_cmd->add_option("--eta", simulate.eta, "Transmission of arm a")->required();
  simulate_cmd->add_option("--eta-prime", simulate.eta_prime, "Transmission of arm b")->required();
  simulate_cmd->add_option("--M", simulate.M, "Number of mode pairs (integer)")->capture_default_str();
  simulate_cmd->add_option("--pulses", simulate.pulses, "Number of pulses")->capture_default_str();
  simulate_cmd->add_option("--seed", simulate.seed, "Random seed")->capture_default_str();
  simulate_cmd->add_option("--weights-a", simulate.weights_a, "Arm a path weights (default uniform 8)");
  simulate_cmd->add_option("--weights-b", simulate.weights_b, "Arm b path weights (default uniform 8)");
  simulate_cmd->add_option("--out", simulate.out, "Output histogram file")->required();

  ReconstructArgs reconstruct;
  auto* reconstruct_cmd = app.add_subcommand("reconstruct", "Maximum-likelihood photon statistics");
  reconstruct_cmd->add_option("--histogram", reconstruct.histogram, "Click histogram file")->required();
  reconstruct_cmd->add_option("--response-a", reconstruct.response_a, "Arm a response file")->required();
  reconstruct_cmd->add_option("--response-b", reconstruct.response_b, "Arm b response file")->required();
  reconstruct_cmd->add_option("--n-max", reconstruct.n_max, "Largest reconstructed photon number")
      ->capture_default_str();
  reconstruct_cmd->add_option("--tol", reconstruct.tol, "Relative log-likelihood tolerance")->capture_default_str();
  reconstruct_cmd->add_option("--max-iter", reconstruct.max_iter, "Iteration cap")->capture_default_str();
  reconstruct_cmd->add_option("--out", reconstruct.out, "Output matrix file")->required();
  reconstruct_cmd->add_option("--report", reconstruct.report, "Run report (default <out>.report.txt)");

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Source parameters of a joint distribution");
  analyze_cmd->add_option("--rho", analyze.rho, "Joint distribution file")->required();
  analyze_cmd->add_option("--out", analyze.out, "Also write the characterization here");

  MapArgs map;
  auto* map_cmd = app.add_subcommand("map", "Contamination over efficiency and production rate");
  map_cmd->add_option("--which", map.which, "2 for single pairs, 4 for double pairs")
      ->check(CLI::IsMember({2, 4}))
      ->capture_default_str();
  map_cmd->add_option("--M", map.M, "Equivalent number of mode pairs")->capture_default_str();
  map_cmd->add_option("--eta-grid", map.eta_grid, "Efficiencies: list or lin:/log:start:stop:count")->required();
  map_cmd->add_option("--rate-grid", map.rate_grid, "Production rates: list or lin:/log:start:stop:count")
      ->required();
  map_cmd->add_option("--out", map.out, "Output matrix file")->required();

  PipelineArgs pipeline;
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Calibrate, simulate, reconstruct and characterize");
  pipeline_cmd->add_option("--config", pipeline.config, "key=value experiment configuration")->required();
  pipeline_cmd->add_option("--out-dir", pipeline.out_dir, "Report directory")->required();

  for (auto* sub : {simulate_cmd, map_cmd, pipeline_cmd}) {
    sub->add_option("--threads", threads, "Worker threads (env SPDC_THREADS)")->capture_default_str();
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: kind=usage message=\"" << e.what() << "\"\n";
    return usage;
  }

  try {
    for (auto* sub : app.get_subcommands()) echo_config(out, *sub);
    if (model_cmd->parsed()) return cmd_model(model, tail_opt->count() > 0, out);
    if (response_cmd->parsed()) return cmd_response(response, out);
    if (simulate_cmd->parsed()) return cmd_simulate(simulate, threads, out);
    if (reconstruct_cmd->parsed()) return cmd_reconstruct(reconstruct, out, err);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze, out);
    if (map_cmd->parsed()) return cmd_map(map, threads, out);
    if (pipeline_cmd->parsed()) return cmd_pipeline(pipeline, threads, out, err);
  } catch (const UsageError& e) {
    err << "error: kind=usage message=\"" << e.what() << "\"\n";
    return usage;
  } catch (const Error& e) {
    err << "error: kind=" << to_string(e.kind()) << " message=\"" << e.what() << "\"\n";
    return is_numerical(e.kind()) ? numerical : validation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: kind=validation message=\"" << e.what() << "\"\n";
    return validation;
  }
  return usage;
}

}  // namespace spdc::cli
