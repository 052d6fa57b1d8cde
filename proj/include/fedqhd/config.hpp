#pragma once

// Run configuration: one JSON file describes one reproducible experiment.
// Every key is optional; missing keys take the defaults below and the fully
// resolved configuration is written next to the metrics.

#include <cstdint>
#include <string>
#include <vector>

#include "fedqhd/agent.hpp"
#include "fedqhd/analysis.hpp"
#include "fedqhd/federation.hpp"
#include "json.hpp"

namespace fedqhd {

struct EncoderBlock {
  bool homogeneous = true;
  std::size_t dim = 4096;
  std::vector<std::size_t> dims{512, 1024, 2048, 4096};  // heterogeneous, cyclic
  double sigma0 = 1.0;
};

struct FederationBlock {
  FederationMode mode = FederationMode::fedqhd;
  std::size_t anchors = 200;  // m
  double lambda = 1e-6;
  std::vector<double> pi;     // empty = uniform
  bool cross_check = false;
};

struct SweepBlock {
  SweepSettings testbed{};
  std::vector<std::size_t> dims{16, 32, 64, 128, 256, 512, 1024, 2048};
  std::size_t anchor_factor = 4;
  std::size_t anchor_dim = 512;
  std::vector<std::size_t> anchor_counts{51, 128, 256, 512, 1024, 2048};
  std::vector<std::size_t> client_counts{1, 2, 5, 20};
};

struct RunConfig {
  std::string env = "CartPole";
  std::size_t clients = 5;             // N
  std::size_t rounds = 12;             // T
  std::size_t episodes_per_round = 50; // K
  EncoderBlock encoder;
  AgentConfig agent;
  FederationBlock federation;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "out";
  bool wall_clock = true;  // write timings.csv
  SweepBlock sweep;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Throws InvalidConfig on unknown keys, wrong types or invalid values.
RunConfig parse_config(const nlohmann::json& j);
/// Throws IoError when the file cannot be read and InvalidConfig when it
/// does not parse.
RunConfig load_config(const std::string& path);
/// Every effective value, defaults included.
nlohmann::ordered_json resolved_json(const RunConfig& config);

}  // namespace fedqhd
