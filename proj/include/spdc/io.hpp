#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "spdc/analysis.hpp"
#include "spdc/loop_detector.hpp"
#include "spdc/model.hpp"
#include "spdc/pipeline.hpp"
#include "spdc/reconstruction.hpp"

// Plain-text formats. Matrices are one comma-separated row per line under a
// single '#' header line; records are key=value lines. Numbers are written
// in the shortest form that reads back to the same double.
namespace spdc::io {

std::string format_double(double value);
double parse_double(std::string_view text);
std::vector<double> parse_double_list(std::string_view text);  // "a,b,c"

using KeyValues = std::map<std::string, std::string>;

// Ignores blank lines and lines starting with '#'. Duplicate keys are an error.
KeyValues read_key_values(std::istream& in);

// # n_max=<int> tail_mass=<float>
void write_joint_distribution(std::ostream& out, const JointDistribution& rho);
JointDistribution read_joint_distribution(std::istream& in);

// # B=<int> n_max=<int>
void write_response(std::ostream& out, const DetectorResponse& resp);
DetectorResponse read_response(std::istream& in);

// # pulses=<int> B=<int>
void write_histogram(std::ostream& out, const ClickHistogram& hist);
ClickHistogram read_histogram(std::istream& in);

void write_effective_source(std::ostream& out, const EffectiveSource& src);
EffectiveSource read_effective_source(std::istream& in);

void write_calibration_report(std::ostream& out, const CalibrationReport& report);
void write_reconstruction_report(std::ostream& out, const ReconstructionResult& result);
void write_characterization(std::ostream& out, const SourceCharacterization& ch);
void write_contamination_map(std::ostream& out, const ContaminationMap& map);

void write_experiment_config(std::ostream& out, const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from(const KeyValues& kv);
ExperimentConfig read_experiment_config(std::istream& in);

/// Writes every artifact of a run into dir (created if needed) plus summary.txt.
void write_run_report(const std::filesystem::path& dir, const RunReport& report);

// File wrappers; failures carry the path in the message.
JointDistribution load_joint_distribution(const std::filesystem::path& path);
DetectorResponse load_response(const std::filesystem::path& path);
ClickHistogram load_histogram(const std::filesystem::path& path);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void save(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer);

}  // namespace spdc::io
