#pragma once

#include "bsdelab/core.hpp"
#include "bsdelab/kvconfig.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace bsdelab {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

struct RunConfig {
    std::string subcommand;
    KvConfig parameters;
    std::string output_path;  // empty: standard output
    std::uint64_t seed = 0;
};

/// Subcommands in the order they appear in the help text.
std::vector<std::string> subcommand_names();

/// Executes one subcommand and returns the CSV text (manifest, header, rows).
/// Throws ExperimentError after producing the text when an assertion fails;
/// the partial text is then available through `csv_out`.
std::string run_subcommand(const RunConfig& config, std::string* csv_out = nullptr);

/// Full command line entry point; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Reads generator.name / generator.param.* (or another prefix such as "g1.").
Generator generator_from_config(const KvConfig& cfg, const std::string& prefix);

/// Reads the shared experiment keys (n_paths, n_steps, ...).
ExperimentConfig experiment_from_config(const KvConfig& cfg, std::uint64_t seed);

/// "%.12g", with "nan" / "inf" / "-inf" spelled out.
std::string format_number(double v);

}  // namespace bsdelab
