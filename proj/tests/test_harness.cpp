#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "fedqhd/config.hpp"
#include "fedqhd/error.hpp"
#include "fedqhd/experiment.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace fedqhd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

json tiny_config() {
  return json::parse(R"({
    "clients": 2, "rounds": 2, "episodes_per_round": 3,
    "encoder": {"dim": 64},
    "seeds": [1, 2],
    "metrics": {"wall_clock": false}
  })");
}

fs::path write_config(const fs::path& dir, const json& j, const std::string& name = "cfg.json") {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(FEDQHD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsAndResolvedCompleteness) {
  const RunConfig c = parse_config(json::object());
  EXPECT_EQ(c.env, "CartPole");
  EXPECT_EQ(c.clients, 5u);
  EXPECT_EQ(c.episodes_per_round, 50u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.federation.anchors, 200u);
  EXPECT_EQ(c.federation.lambda, 1e-6);
  EXPECT_EQ(c.agent.minibatch, 32u);
  EXPECT_EQ(c.agent.target_sync_period, 5u);
  const auto r = resolved_json(c);
  for (const char* key : {"env", "clients", "rounds", "episodes_per_round", "encoder", "agent",
                          "federation", "seeds", "output_dir", "metrics", "sweep"})
    EXPECT_TRUE(r.contains(key)) << key;
  for (const char* key : {"eta", "gamma", "target_sync", "buffer", "minibatch", "learning_starts",
                          "target_rule", "bootstrap_truncated", "feature_cache", "epsilon"})
    EXPECT_TRUE(r["agent"].contains(key)) << key;
  for (const char* key : {"mode", "anchors", "lambda", "pi", "cross_check"})
    EXPECT_TRUE(r["federation"].contains(key)) << key;
  for (const char* key : {"mode", "dim", "dims", "sigma0"})
    EXPECT_TRUE(r["encoder"].contains(key)) << key;
  // The resolved form parses back to the same settings.
  const RunConfig again = parse_config(json::parse(r.dump()));
  EXPECT_EQ(resolved_json(again).dump(), r.dump());
}

TEST(Config, OverridesAndRejections) {
  json j = tiny_config();
  j["agent"] = {{"eta", 0.05}, {"epsilon", {{"end", 0.01}}}};
  j["federation"] = {{"mode", "truncate_avg"}, {"lambda", 1e-3}};
  const RunConfig c = parse_config(j);
  EXPECT_EQ(c.agent.eta, 0.05);
  EXPECT_EQ(c.agent.epsilon.end, 0.01);
  EXPECT_EQ(c.federation.mode, FederationMode::truncate_avg);

  auto rejects = [](json bad) { EXPECT_THROW(parse_config(bad), InvalidConfig) << bad.dump(); };
  rejects(json{{"clinets", 5}});
  rejects(json{{"clients", "five"}});
  rejects(json{{"clients", 0}});
  rejects(json{{"clients", -2}});
  rejects(json{{"env", "Pendulum"}});
  rejects(json{{"encoder", {{"mode", "mixed"}}}});
  rejects(json{{"agent", {{"gamma", 1.5}}}});
  rejects(json{{"agent", {{"extra", 1}}}});
  rejects(json{{"federation", {{"mode", "fedavg"}}}});
  rejects(json{{"federation", {{"pi", {0.5, 0.6}}}}, {"clients", 2}});
  rejects(json{{"seeds", json::array()}});
  rejects(json::array());
}

TEST(Config, LoadErrors) {
  const auto dir = test::scratch_dir("load_errors");
  EXPECT_THROW(load_config((dir / "missing.json").string()), IoError);
  std::ofstream(dir / "broken.json") << "{\"clients\": ";
  EXPECT_THROW(load_config((dir / "broken.json").string()), InvalidConfig);
}

TEST(Cli, ExitCodes) {
  const auto dir = test::scratch_dir("cli_codes");
  EXPECT_EQ(cli("run " + (dir / "missing.json").string()), 3);
  std::ofstream(dir / "bad.json") << R"({"clients": "x"})";
  EXPECT_EQ(cli("run " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("sweep --kind sideways " + (dir / "bad.json").string()), 2);
  const auto cfg = write_config(dir, tiny_config());
  EXPECT_EQ(cli("run " + cfg.string() + " --seeds 1,x"), 2);
  std::ofstream(dir / "blocker") << "not a directory";
  EXPECT_EQ(cli("run " + cfg.string() + " --out " + (dir / "blocker" / "sub").string()), 3);
}

TEST(Cli, RunWritesGoldenFiles) {
  const auto dir = test::scratch_dir("cli_golden");
  json j = tiny_config();
  j["metrics"]["wall_clock"] = true;
  const auto cfg = write_config(dir, j);
  ASSERT_EQ(cli("run " + cfg.string() + " --out " + (dir / "out").string() + " --seeds 7"), 0);
  const fs::path out = dir / "out";
  EXPECT_EQ(first_line(out / "summary.csv"), "seed,client,episodes,final100");
  EXPECT_EQ(first_line(out / "timings.csv"), "seed,round,client,round_ms,compile_ms");
  const json rec = json::parse(first_line(out / "rounds.jsonl"));
  std::vector<std::string> keys;
  for (auto it = rec.begin(); it != rec.end(); ++it) keys.push_back(it.key());
  // nlohmann::json iterates sorted; check membership and the on-disk order separately.
  EXPECT_EQ(keys.size(), 8u);
  const std::string raw = first_line(out / "rounds.jsonl");
  EXPECT_EQ(raw.rfind("{\"seed\":7,\"round\":0,\"client\":0,\"episodes\":[0,3],\"returns\":[", 0),
            0u);
  EXPECT_NE(raw.find("\"gamma_i\":null,\"lambda\":null,\"anchor_residual\":null}"),
            std::string::npos);
  const json resolved = json::parse(slurp(out / "resolved_config.json"));
  EXPECT_EQ(resolved["seeds"], json::array({7}));
}

TEST(Harness, SummaryRecomputableFromRounds) {
  const auto dir = test::scratch_dir("recompute");
  RunConfig c = parse_config(tiny_config());
  run_experiment(c, dir);
  std::map<std::pair<std::uint64_t, std::size_t>, std::vector<double>> returns;
  std::ifstream in(dir / "rounds.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line); ++lines) {
    const json r = json::parse(line);
    auto& v = returns[{r["seed"].get<std::uint64_t>(), r["client"].get<std::size_t>()}];
    for (double x : r["returns"]) v.push_back(x);
  }
  EXPECT_EQ(lines, 2u * 2u * 2u);
  std::ifstream sum(dir / "summary.csv");
  std::string line;
  std::getline(sum, line);
  std::size_t per_client = 0;
  while (std::getline(sum, line)) {
    std::stringstream ss(line);
    std::string seed, client, episodes, value;
    std::getline(ss, seed, ',');
    std::getline(ss, client, ',');
    std::getline(ss, episodes, ',');
    std::getline(ss, value, ',');
    if (seed == "all" || client == "mean") continue;
    const auto& v = returns.at({std::stoull(seed), std::stoul(client)});
    EXPECT_EQ(std::stoul(episodes), v.size());
    EXPECT_NEAR(std::stod(value), final_mean(v), 1e-9);
    ++per_client;
  }
  EXPECT_EQ(per_client, 4u);
}

TEST(Harness, RerunsAreByteIdentical) {
  const auto dir = test::scratch_dir("rerun");
  json j = tiny_config();
  j["encoder"] = {{"mode", "heterogeneous"}, {"dims", {32, 48}}};
  j["federation"] = {{"anchors", 40}};
  const auto cfg = write_config(dir, j);
  ASSERT_EQ(cli("run " + cfg.string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(cli("run " + cfg.string() + " --out " + (dir / "b").string()), 0);
  for (const char* f : {"rounds.jsonl", "summary.csv"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  const json rec = json::parse(first_line(dir / "a" / "rounds.jsonl"));
  EXPECT_TRUE(rec["gamma_i"].is_number());
  EXPECT_GT(rec["gamma_i"].get<double>(), 0.0);
}

TEST(Harness, SingleClientFederationMatchesIndependent) {
  const auto dir = test::scratch_dir("n1");
  json j = tiny_config();
  j["clients"] = 1;
  j["rounds"] = 3;
  j["federation"] = {{"mode", "fedqhd"}};
  const auto fed = write_config(dir, j, "fed.json");
  j["federation"] = {{"mode", "independent"}};
  const auto ind = write_config(dir, j, "ind.json");
  ASSERT_EQ(cli("run " + fed.string() + " --out " + (dir / "fed").string()), 0);
  ASSERT_EQ(cli("run " + ind.string() + " --out " + (dir / "ind").string()), 0);
  for (const char* f : {"rounds.jsonl", "summary.csv"})
    EXPECT_EQ(slurp(dir / "fed" / f), slurp(dir / "ind" / f)) << f;
}

TEST(Harness, DimensionSweepEmitsSlopeRow) {
  const auto dir = test::scratch_dir("sweep_dim");
  json j = tiny_config();
  j["seeds"] = {1};
  j["sweep"] = {{"dims", {16, 32, 64}}};
  const auto cfg = write_config(dir, j);
  ASSERT_EQ(cli("sweep --kind dimension " + cfg.string() + " --out " + dir.string()), 0);
  const fs::path csv = dir / "sweep_dimension.csv";
  EXPECT_EQ(first_line(csv), kTestbedCsvHeader);
  const std::string body = slurp(csv);
  std::size_t points = 0, slopes = 0;
  std::stringstream ss(body);
  for (std::string line; std::getline(ss, line);) {
    points += line.rfind("point,", 0) == 0;
    slopes += line.rfind("slope,", 0) == 0;
  }
  EXPECT_EQ(points, 3u);
  EXPECT_EQ(slopes, 1u);
}

TEST(Harness, AnchorSweepEmitsGammaFit) {
  const auto dir = test::scratch_dir("sweep_anchor");
  json j = tiny_config();
  j["seeds"] = {1};
  j["sweep"] = {{"anchor_dim", 32}, {"anchor_counts", {8, 32, 64, 128}}};
  const auto cfg = write_config(dir, j);
  ASSERT_EQ(cli("sweep --kind anchor " + cfg.string() + " --out " + dir.string()), 0);
  const std::string body = slurp(dir / "sweep_anchor.csv");
  EXPECT_NE(body.find("\ngamma_fit,"), std::string::npos);
}

TEST(Harness, ScalabilitySweepHeader) {
  const auto dir = test::scratch_dir("sweep_scale");
  json j = tiny_config();
  j["seeds"] = {1};
  j["rounds"] = 1;
  j["sweep"] = {{"client_counts", {1, 2}}};
  const auto cfg = write_config(dir, j);
  ASSERT_EQ(cli("sweep --kind scalability " + cfg.string() + " --out " + dir.string()), 0);
  const fs::path csv = dir / "sweep_scalability.csv";
  EXPECT_EQ(first_line(csv), kScalabilityCsvHeader);
  EXPECT_EQ(std::string(kScalabilityCsvHeader), "row_type,config_id,N,seed,final100,gain_vs_first");
  EXPECT_EQ(std::string(kTestbedCsvHeader),
            "row_type,config_id,seed,D,m,m_over_D,lambda,q_error,delta_rms,delta_max,term1,"
            "term2,term3,gamma_i,slope,intercept,r2");
}
