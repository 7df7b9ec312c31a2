#include "spdc/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "spdc/error.hpp"

namespace spdc::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::int64_t parse_int(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    fail(ErrorKind::parse, "not an integer: '" + std::string(text) + "'");
  }
  return value;
}

bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!trim(line).empty()) return true;
  }
  return false;
}

// "# a=1 b=2" -> {a: 1, b: 2}
KeyValues parse_header(std::istream& in) {
  std::string line;
  if (!next_content_line(in, line)) fail(ErrorKind::parse, "missing header line");
  auto body = trim(line);
  if (body.empty() || body.front() != '#') fail(ErrorKind::parse, "header must start with '#'");
  body.remove_prefix(1);
  KeyValues kv;
  std::istringstream tokens{std::string(body)};
  std::string token;
  while (tokens >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) fail(ErrorKind::parse, "malformed header token '" + token + "'");
    kv[token.substr(0, eq)] = token.substr(eq + 1);
  }
  return kv;
}

const std::string& require(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) fail(ErrorKind::parse, "missing key '" + key + "'");
  return it->second;
}

template <class Scalar, class Parse>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> read_rows(std::istream& in, Eigen::Index rows,
                                                                Eigen::Index cols, Parse parse) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(rows, cols);
  std::string line;
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!next_content_line(in, line)) {
      fail(ErrorKind::parse, "expected " + std::to_string(rows) + " rows, found " + std::to_string(r));
    }
    const auto fields = split(line, ',');
    if (static_cast<Eigen::Index>(fields.size()) != cols) {
      fail(ErrorKind::parse, "row " + std::to_string(r) + " has " + std::to_string(fields.size()) +
                                 " entries, expected " + std::to_string(cols));
    }
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = parse(fields[static_cast<std::size_t>(c)]);
  }
  if (next_content_line(in, line)) fail(ErrorKind::parse, "unexpected trailing data");
  return out;
}

template <class M, class Format>
void write_rows(std::ostream& out, const M& matrix, Format format) {
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      if (c) out << ',';
      out << format(matrix(r, c));
    }
    out << '\n';
  }
}

int parse_dimension(const KeyValues& kv, const std::string& key, int lo, int hi) {
  const auto v = parse_int(require(kv, key));
  if (v < lo || v > hi) {
    fail(ErrorKind::parse, key + "=" + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                               std::to_string(hi) + "]");
  }
  return static_cast<int>(v);
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

void write_field(std::ostream& out, const std::string& name, const FieldResult& field) {
  if (field.estimate) {
    out << name << '=' << format_double(field.estimate->value) << '\n';
    out << name << "_half_width=" << format_double(field.estimate->half_width) << '\n';
    out << name << "_status=" << (field.estimate->warning ? "warning" : "ok") << '\n';
    if (!field.estimate->note.empty()) out << name << "_note=" << field.estimate->note << '\n';
  } else {
    out << name << "=nan\n";
    out << name << "_status=" << (field.error ? to_string(*field.error) : "unknown") << '\n';
    out << name << "_message=" << field.message << '\n';
  }
}

template <class T, class Reader>
T load(const std::filesystem::path& path, Reader reader) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, "cannot open '" + path.string() + "'");
  try {
    return reader(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    fail(ErrorKind::parse, "not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  for (auto field : split(text, ',')) out.push_back(parse_double(field));
  return out;
}

KeyValues read_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::parse, "expected key=value, got '" + std::string(body) + "'");
    const std::string key(trim(body.substr(0, eq)));
    if (key.empty()) fail(ErrorKind::parse, "empty key");
    if (!kv.emplace(key, std::string(trim(body.substr(eq + 1)))).second) {
      fail(ErrorKind::parse, "duplicate key '" + key + "'");
    }
  }
  return kv;
}

void write_joint_distribution(std::ostream& out, const JointDistribution& rho) {
  out << "# n_max=" << rho.n_max() << " tail_mass=" << format_double(rho.tail_mass) << '\n';
  write_rows(out, rho.probs, format_double);
}

JointDistribution read_joint_distribution(std::istream& in) {
  const auto header = parse_header(in);
  const int n_max = parse_dimension(header, "n_max", 0, 4000);
  const double tail = parse_double(require(header, "tail_mass"));
  JointDistribution rho;
  rho.probs = read_rows<double>(in, n_max + 1, n_max + 1, parse_double);
  if (!((rho.probs.array() >= 0.0) && (rho.probs.array() <= 1.0)).all()) {
    fail(ErrorKind::validation, "probabilities must lie in [0, 1]");
  }
  if (!(tail >= 0.0 && tail <= 1.0)) fail(ErrorKind::validation, "tail_mass must lie in [0, 1]");
  if (std::abs(rho.probs.sum() + tail - 1.0) > 1e-9) {
    fail(ErrorKind::validation, "probabilities plus tail_mass do not sum to 1");
  }
  rho.tail_mass = tail;
  return rho;
}

void write_response(std::ostream& out, const DetectorResponse& resp) {
  out << "# B=" << resp.bins() << " n_max=" << resp.n_max() << '\n';
  write_rows(out, resp.P, format_double);
}

DetectorResponse read_response(std::istream& in) {
  const auto header = parse_header(in);
  const int bins = parse_dimension(header, "B", 1, max_bins);
  const int n_max = parse_dimension(header, "n_max", 0, 4000);
  DetectorResponse resp;
  resp.P = read_rows<double>(in, bins + 1, n_max + 1, parse_double);
  resp.validate();
  return resp;
}

void write_histogram(std::ostream& out, const ClickHistogram& hist) {
  out << "# pulses=" << hist.pulses << " B=" << hist.bins() << '\n';
  write_rows(out, hist.counts, [](std::int64_t v) { return std::to_string(v); });
}

ClickHistogram read_histogram(std::istream& in) {
  const auto header = parse_header(in);
  ClickHistogram hist;
  hist.pulses = parse_int(require(header, "pulses"));
  const int bins = parse_dimension(header, "B", 1, max_bins);
  hist.counts = read_rows<std::int64_t>(in, bins + 1, bins + 1, parse_int);
  hist.validate();
  return hist;
}

void write_effective_source(std::ostream& out, const EffectiveSource& src) {
  out << "N=" << format_double(src.N) << '\n'
      << "eta=" << format_double(src.eta) << '\n'
      << "eta_prime=" << format_double(src.eta_prime) << '\n'
      << "M=" << format_double(src.M) << '\n';
}

EffectiveSource read_effective_source(std::istream& in) {
  const auto kv = read_key_values(in);
  for (const auto& [key, value] : kv) {
    if (key != "N" && key != "eta" && key != "eta_prime" && key != "M") {
      fail(ErrorKind::parse, "unknown key '" + key + "'");
    }
  }
  EffectiveSource src{parse_double(require(kv, "N")), parse_double(require(kv, "eta")),
                      parse_double(require(kv, "eta_prime")), parse_double(require(kv, "M"))};
  src.validate();
  return src;
}

void write_calibration_report(std::ostream& out, const CalibrationReport& report) {
  out << "bins=" << report.weights.bins() << '\n';
  out << "total_counts=" << report.total_counts << '\n';
  for (int i = 0; i < report.weights.bins(); ++i) {
    out << "weight_" << i << '=' << format_double(report.weights[i]) << '\n';
    out << "stderr_" << i << '=' << format_double(report.std_errors[static_cast<std::size_t>(i)])
        << '\n';
  }
}

void write_reconstruction_report(std::ostream& out, const ReconstructionResult& result) {
  out << "n_max=" << result.rho.n_max() << '\n';
  out << "iterations=" << result.iterations << '\n';
  out << "log_likelihood=" << format_double(result.final_log_likelihood()) << '\n';
  out << "converged=" << (result.converged ? "true" : "false") << '\n';
}

void write_characterization(std::ostream& out, const SourceCharacterization& ch) {
  out << "mean_n=" << format_double(ch.mean_n) << '\n'
      << "mean_n_prime=" << format_double(ch.mean_n_prime) << '\n'
      << "var_n=" << format_double(ch.var_n) << '\n'
      << "var_n_prime=" << format_double(ch.var_n_prime) << '\n'
      << "p11=" << format_double(ch.p11) << '\n'
      << "p22=" << format_double(ch.p22) << '\n'
      << "tail_mass=" << format_double(ch.tail_mass) << '\n';
  write_field(out, "M_hat", ch.M_hat);
  write_field(out, "M_hat_prime", ch.M_hat_prime);
  write_field(out, "delta_sq", ch.delta_sq);
  write_field(out, "eta_hat", ch.eta_hat);
  write_field(out, "eps2", ch.eps2);
  write_field(out, "eps4", ch.eps4);
}

void write_contamination_map(std::ostream& out, const ContaminationMap& map) {
  out << "# which=" << map.which << " M=" << format_double(map.M)
      << " rows=eta cols=rate sentinel=" << format_double(ContaminationMap::unreachable) << '\n';
  out << "# eta=" << join(map.eta_grid) << '\n';
  out << "# rate=" << join(map.rate_grid) << '\n';
  write_rows(out, map.epsilon, format_double);
}

void write_experiment_config(std::ostream& out, const ExperimentConfig& cfg) {
  std::vector<double> wa(cfg.weights_a.values().begin(), cfg.weights_a.values().end());
  std::vector<double> wb(cfg.weights_b.values().begin(), cfg.weights_b.values().end());
  write_effective_source(out, cfg.source);
  out << "pulses=" << cfg.pulses << '\n'
      << "seed=" << cfg.seed << '\n'
      << "weights_a=" << join(wa) << '\n'
      << "weights_b=" << join(wb) << '\n'
      << "calibration_pulses=" << cfg.calibration_pulses << '\n'
      << "calibration_N=" << format_double(cfg.calibration_N) << '\n'
      << "n_max=" << cfg.n_max << '\n'
      << "tol=" << format_double(cfg.em.tol) << '\n'
      << "max_iter=" << cfg.em.max_iter << '\n'
      << "bootstrap=" << cfg.bootstrap << '\n';
}

ExperimentConfig experiment_config_from(const KeyValues& kv) {
  static const std::vector<std::string> known = {
      "N", "eta", "eta_prime", "M", "pulses", "seed", "weights_a", "weights_b",
      "calibration_pulses", "calibration_N", "n_max", "tol", "max_iter", "bootstrap"};
  for (const auto& [key, value] : kv) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(ErrorKind::validation, "unknown config key '" + key + "'");
    }
  }
  ExperimentConfig cfg;
  cfg.source = EffectiveSource{parse_double(require(kv, "N")), parse_double(require(kv, "eta")),
                               parse_double(require(kv, "eta_prime")), parse_double(require(kv, "M"))};
  auto get = [&](const char* key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = get("pulses")) cfg.pulses = parse_int(*v);
  if (auto v = get("seed")) {
    const auto s = parse_int(*v);
    if (s < 0) fail(ErrorKind::validation, "seed must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  if (auto v = get("weights_a")) cfg.weights_a = PathWeights(parse_double_list(*v));
  if (auto v = get("weights_b")) cfg.weights_b = PathWeights(parse_double_list(*v));
  if (auto v = get("calibration_pulses")) cfg.calibration_pulses = parse_int(*v);
  if (auto v = get("calibration_N")) cfg.calibration_N = parse_double(*v);
  if (auto v = get("n_max")) cfg.n_max = static_cast<int>(parse_int(*v));
  if (auto v = get("tol")) cfg.em.tol = parse_double(*v);
  if (auto v = get("max_iter")) cfg.em.max_iter = static_cast<int>(parse_int(*v));
  if (auto v = get("bootstrap")) cfg.bootstrap = static_cast<int>(parse_int(*v));
  cfg.validate();
  return cfg;
}

ExperimentConfig read_experiment_config(std::istream& in) {
  return experiment_config_from(read_key_values(in));
}

void save(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::validation, "cannot write '" + path.string() + "'");
  writer(out);
  if (!out) fail(ErrorKind::validation, "write failed for '" + path.string() + "'");
}

JointDistribution load_joint_distribution(const std::filesystem::path& path) {
  return load<JointDistribution>(path, [](std::istream& in) { return read_joint_distribution(in); });
}

DetectorResponse load_response(const std::filesystem::path& path) {
  return load<DetectorResponse>(path, [](std::istream& in) { return read_response(in); });
}

ClickHistogram load_histogram(const std::filesystem::path& path) {
  return load<ClickHistogram>(path, [](std::istream& in) { return read_histogram(in); });
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return load<ExperimentConfig>(path, [](std::istream& in) { return read_experiment_config(in); });
}

void write_run_report(const std::filesystem::path& dir, const RunReport& report) {
  std::filesystem::create_directories(dir);
  save(dir / "config.txt", [&](std::ostream& o) { write_experiment_config(o, report.config); });
  save(dir / "histogram.txt", [&](std::ostream& o) { write_histogram(o, report.histogram); });
  if (report.calibration_a) {
    save(dir / "calibration_a.txt", [&](std::ostream& o) { write_calibration_report(o, *report.calibration_a); });
  }
  if (report.calibration_b) {
    save(dir / "calibration_b.txt", [&](std::ostream& o) { write_calibration_report(o, *report.calibration_b); });
  }
  if (report.response_a) {
    save(dir / "response_a.txt", [&](std::ostream& o) { write_response(o, *report.response_a); });
  }
  if (report.response_b) {
    save(dir / "response_b.txt", [&](std::ostream& o) { write_response(o, *report.response_b); });
  }
  if (report.reconstruction) {
    save(dir / "rho.txt", [&](std::ostream& o) { write_joint_distribution(o, report.reconstruction->rho); });
    save(dir / "reconstruction.txt",
         [&](std::ostream& o) { write_reconstruction_report(o, *report.reconstruction); });
  }
  if (report.characterization) {
    save(dir / "characterization.txt",
         [&](std::ostream& o) { write_characterization(o, *report.characterization); });
  }
  save(dir / "summary.txt", [&](std::ostream& o) {
    o << "# run configuration\n";
    write_experiment_config(o, report.config);
    o << "# outcome\n";
    o << "status=" << (report.failures.empty() ? "ok" : "partial") << '\n';
    for (std::size_t i = 0; i < report.warnings.size(); ++i) {
      o << "warning_" << i << '=' << report.warnings[i] << '\n';
    }
    for (std::size_t i = 0; i < report.failures.size(); ++i) {
      o << "failure_" << i << '=' << report.failures[i] << '\n';
    }
    o << "histogram_total=" << report.histogram.total() << '\n';
    if (report.reconstruction) {
      const auto& r = *report.reconstruction;
      o << "rho_n_max=" << r.rho.n_max() << '\n'
        << "em_iterations=" << r.iterations << '\n'
        << "em_log_likelihood=" << format_double(r.final_log_likelihood()) << '\n'
        << "em_converged=" << (r.converged ? "true" : "false") << '\n';
    }
    if (report.characterization) write_characterization(o, *report.characterization);
    if (report.bootstrap) {
      o << "bootstrap_replicas=" << report.bootstrap->replicas << '\n'
        << "bootstrap_failed=" << report.bootstrap->failed << '\n'
        << "M_hat_bootstrap_sd=" << format_double(report.bootstrap->M_hat_sd) << '\n'
        << "eta_hat_bootstrap_sd=" << format_double(report.bootstrap->eta_hat_sd) << '\n'
        << "eps2_bootstrap_sd=" << format_double(report.bootstrap->eps2_sd) << '\n'
        << "eps4_bootstrap_sd=" << format_double(report.bootstrap->eps4_sd) << '\n';
    }
  });
}

}  // namespace spdc::io
