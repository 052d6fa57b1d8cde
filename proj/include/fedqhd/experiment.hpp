#pragma once

// Experiment runner: builds the fleet, agents and anchors for each seed,
// drives the rounds and writes the metrics files.
//
//   resolved_config.json  every effective setting
//   rounds.jsonl          one line per (seed, round, client)
//   summary.csv           final-100 mean return per (seed, client), per seed, overall
//   timings.csv           wall-clock per round (only with metrics.wall_clock)
//   sweep_<kind>.csv      sweeps

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedqhd/config.hpp"

namespace fedqhd {

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> returns;  // per client, every episode
  std::vector<double> final100;              // per client
  double mean_final100 = 0.0;
};

struct ExperimentResult {
  std::vector<SeedResult> seeds;
  double mean_final100 = 0.0;
};

/// Mean of the last min(100, n) entries.
double final_mean(const std::vector<double>& returns, std::size_t window = 100);

/// One seed of training. `rounds_out` / `timings_out` receive rows when not null.
SeedResult train_seed(const RunConfig& config, std::uint64_t seed, std::ostream* rounds_out,
                      std::ostream* timings_out);

/// All seeds; writes the metrics files into `out_dir` (created if needed).
/// Throws IoError when the directory or a file cannot be written.
ExperimentResult run_experiment(const RunConfig& config, const std::filesystem::path& out_dir);

enum class SweepKind { dimension, anchor, scalability };
SweepKind parse_sweep_kind(const std::string& name);
std::string to_string(SweepKind kind);

/// Runs a sweep and writes sweep_<kind>.csv (plus resolved_config.json) into
/// `out_dir`. Returns the CSV path.
std::filesystem::path run_sweep(SweepKind kind, const RunConfig& config,
                                const std::filesystem::path& out_dir);

/// Sweep CSV writers, shared with the tests.
void write_testbed_csv(std::ostream& out, std::span<const SweepRow> rows, SweepKind kind);
extern const char* const kTestbedCsvHeader;
extern const char* const kSummaryCsvHeader;
extern const char* const kScalabilityCsvHeader;
extern const char* const kTimingsCsvHeader;

}  // namespace fedqhd
