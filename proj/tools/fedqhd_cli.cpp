// fedqhd run <config.json> [--out DIR] [--seeds 1,2,3]
// fedqhd sweep --kind dimension|anchor|scalability <config.json> [--out DIR] [--seeds ...]
//
// Exit codes: 0 ok, 1 other failure, 2 bad config, 3 I/O.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fedqhd/config.hpp"
#include "fedqhd/error.hpp"
#include "fedqhd/experiment.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || item.front() == '-')
      throw fedqhd::InvalidConfig("bad seed '" + item + "' in --seeds");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw fedqhd::InvalidConfig("--seeds is empty");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated Q-learning over random-feature encoders"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seeds_text, kind = "dimension";
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seeds", seeds_text, "comma separated seeds (overrides seeds)");
  };
  CLI::App* run = app.add_subcommand("run", "train a federation and write metrics");
  add_common(run);
  CLI::App* sweep = app.add_subcommand("sweep", "run a dimension, anchor or scalability sweep");
  sweep->add_option("--kind", kind, "dimension | anchor | scalability")
      ->check(CLI::IsMember({"dimension", "anchor", "scalability"}));
  add_common(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    fedqhd::RunConfig config = fedqhd::load_config(config_path);
    if (!seeds_text.empty()) config.seeds = parse_seeds(seeds_text);
    if (!out_dir.empty()) config.output_dir = out_dir;

    if (run->parsed()) {
      const auto result = fedqhd::run_experiment(config, config.output_dir);
      std::printf("final-100 mean return %.3f over %zu seed(s) -> %s\n", result.mean_final100,
                  result.seeds.size(), config.output_dir.c_str());
    } else {
      const auto path = fedqhd::run_sweep(fedqhd::parse_sweep_kind(kind), config,
                                          config.output_dir);
      std::printf("wrote %s\n", path.string().c_str());
    }
  } catch (const fedqhd::InvalidConfig& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const fedqhd::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
