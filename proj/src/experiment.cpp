#include "fedqhd/experiment.hpp"

#include <charconv>
#include <chrono>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "fedqhd/encoder.hpp"
#include "fedqhd/envs.hpp"
#include "fedqhd/error.hpp"

namespace fedqhd {

using nlohmann::json;

const char* const kTestbedCsvHeader =
    "row_type,config_id,seed,D,m,m_over_D,lambda,q_error,delta_rms,delta_max,term1,term2,term3,"
    "gamma_i,slope,intercept,r2";
const char* const kSummaryCsvHeader = "seed,client,episodes,final100";
const char* const kScalabilityCsvHeader = "row_type,config_id,N,seed,final100,gain_vs_first";
const char* const kTimingsCsvHeader = "seed,round,client,round_ms,compile_ms";

namespace {

constexpr std::uint64_t kFleetTag = 0x61;
constexpr std::uint64_t kClientTag = 0x62;
constexpr std::uint64_t kAnchorTag = 0x63;

// Shortest round-trip decimal form.
std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory '" + dir.string() + "'");
}

void finish(std::ofstream& out, const std::filesystem::path& p) {
  out.flush();
  if (!out) throw IoError("write to '" + p.string() + "' failed");
}

void write_resolved(const RunConfig& config, const std::filesystem::path& dir) {
  const auto p = dir / "resolved_config.json";
  auto out = open_out(p);
  out << resolved_json(config).dump(2) << '\n';
  finish(out, p);
}

}  // namespace

double final_mean(const std::vector<double>& returns, std::size_t window) {
  if (returns.empty()) return 0.0;
  const std::size_t n = std::min(window, returns.size());
  double s = 0.0;
  for (std::size_t i = returns.size() - n; i < returns.size(); ++i) s += returns[i];
  return s / static_cast<double>(n);
}

SeedResult train_seed(const RunConfig& config, std::uint64_t seed, std::ostream* rounds_out,
                      std::ostream* timings_out) {
  config.validate();
  const EnvSpec spec = env_spec(config.env);
  const std::size_t n = config.clients;

  FleetConfig fc;
  fc.num_clients = n;
  fc.state_dim = spec.state_dim;
  fc.homogeneous = config.encoder.homogeneous;
  fc.dim = config.encoder.dim;
  fc.dims = config.encoder.dims;
  fc.sigma0 = config.encoder.sigma0;
  const EncoderFleet fleet = build_fleet(fc, derive_seed(seed, kFleetTag));

  std::vector<QhdAgent> agents;
  std::vector<std::unique_ptr<Environment>> envs;
  agents.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    agents.emplace_back(fleet.encoders[i], spec.action_count, config.agent,
                        derive_seed(seed, kClientTag, i));
    envs.push_back(make_env(config.env));
  }

  RoundConfig rc;
  rc.mode = config.federation.mode;
  rc.episodes = config.episodes_per_round;
  rc.lambda = config.federation.lambda;
  rc.pi = config.federation.pi;
  rc.homogeneous = config.encoder.homogeneous;
  rc.cross_check = config.federation.cross_check;
  rc.wall_clock = timings_out != nullptr;

  std::unique_ptr<AnchorSet> anchors;
  if (!rc.homogeneous && rc.mode == FederationMode::fedqhd) {
    auto env = make_env(config.env);
    anchors = std::make_unique<AnchorSet>(
        sample_anchor_states(*env, config.federation.anchors, derive_seed(seed, kAnchorTag)));
    for (const auto& a : agents) anchors->add_client(*a.feature_map());
  }

  SeedResult result;
  result.seed = seed;
  result.returns.resize(n);
  for (std::size_t r = 0; r < config.rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const RoundMetrics m = run_round(agents, envs, anchors.get(), rc, r);
    const double round_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    for (const ClientRound& c : m.clients) {
      auto& all = result.returns[c.client];
      const std::size_t first = all.size();
      all.insert(all.end(), c.returns.begin(), c.returns.end());
      if (rounds_out) {
        nlohmann::ordered_json line;
        line["seed"] = seed;
        line["round"] = r;
        line["client"] = c.client;
        line["episodes"] = {first, all.size()};
        line["returns"] = c.returns;
        if (c.compile) {
          line["gamma_i"] = c.compile->gamma;
          line["lambda"] = c.compile->lambda;
          line["anchor_residual"] = c.compile->anchor_residual;
          if (rc.cross_check) line["primal_dual_gap"] = c.compile->primal_dual_discrepancy;
        } else {
          line["gamma_i"] = nullptr;
          line["lambda"] = nullptr;
          line["anchor_residual"] = nullptr;
        }
        *rounds_out << line.dump() << '\n';
      }
      if (timings_out)
        *timings_out << seed << ',' << r << ',' << c.client << ',' << num(round_ms) << ','
                     << (c.compile ? num(c.compile->compile_ms) : std::string()) << '\n';
    }
  }

  double total = 0.0;
  for (const auto& rets : result.returns) {
    result.final100.push_back(final_mean(rets));
    total += result.final100.back();
  }
  result.mean_final100 = total / static_cast<double>(n);
  return result;
}

ExperimentResult run_experiment(const RunConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  ensure_dir(out_dir);
  write_resolved(config, out_dir);

  const auto rounds_path = out_dir / "rounds.jsonl";
  const auto timings_path = out_dir / "timings.csv";
  auto rounds = open_out(rounds_path);
  std::ofstream timings;
  if (config.wall_clock) {
    timings = open_out(timings_path);
    timings << kTimingsCsvHeader << '\n';
  }

  ExperimentResult result;
  double total = 0.0;
  for (std::uint64_t seed : config.seeds) {
    result.seeds.push_back(
        train_seed(config, seed, &rounds, config.wall_clock ? &timings : nullptr));
    total += result.seeds.back().mean_final100;
  }
  result.mean_final100 = total / static_cast<double>(config.seeds.size());
  finish(rounds, rounds_path);
  if (config.wall_clock) finish(timings, timings_path);

  const auto summary_path = out_dir / "summary.csv";
  auto summary = open_out(summary_path);
  summary << kSummaryCsvHeader << '\n';
  for (const auto& s : result.seeds) {
    for (std::size_t c = 0; c < s.final100.size(); ++c)
      summary << s.seed << ',' << c << ',' << s.returns[c].size() << ',' << num(s.final100[c])
              << '\n';
    summary << s.seed << ",mean," << s.returns.front().size() << ',' << num(s.mean_final100)
            << '\n';
  }
  summary << "all,mean," << result.seeds.front().returns.front().size() << ','
          << num(result.mean_final100) << '\n';
  finish(summary, summary_path);
  return result;
}

SweepKind parse_sweep_kind(const std::string& name) {
  if (name == "dimension") return SweepKind::dimension;
  if (name == "anchor") return SweepKind::anchor;
  if (name == "scalability") return SweepKind::scalability;
  throw InvalidConfig("unknown sweep kind '" + name + "'");
}

std::string to_string(SweepKind kind) {
  switch (kind) {
    case SweepKind::dimension: return "dimension";
    case SweepKind::anchor: return "anchor";
    case SweepKind::scalability: return "scalability";
  }
  return "?";
}

void write_testbed_csv(std::ostream& out, std::span<const SweepRow> rows, SweepKind kind) {
  out << kTestbedCsvHeader << '\n';
  auto id = [](std::size_t d, std::size_t m) {
    return "D" + std::to_string(d) + "_m" + std::to_string(m);
  };
  auto ratio = [](std::size_t m, std::size_t d) {
    return num(static_cast<double>(m) / static_cast<double>(d));
  };
  for (const auto& r : rows)
    out << "point," << id(r.dim, r.anchors) << ',' << r.seed << ',' << r.dim << ','
        << r.anchors << ',' << ratio(r.anchors, r.dim) << ',' << num(r.lambda) << ','
        << num(r.q_error) << ',' << num(r.delta_rms) << ',' << num(r.delta_max) << ','
        << num(r.term1) << ',' << num(r.term2) << ',' << num(r.term3) << ',' << num(r.gamma)
        << ",,,\n";
  if (rows.empty()) return;

  const bool by_dim = kind == SweepKind::dimension;
  const auto means = by_dim ? mean_by_dim(rows) : mean_by_anchors(rows);
  const std::size_t fixed_dim = rows.front().dim;
  const std::size_t factor = rows.front().anchors / std::max<std::size_t>(rows.front().dim, 1);
  const double lambda = rows.front().lambda;
  for (const auto& p : means) {
    const auto x = static_cast<std::size_t>(p.x);
    const std::size_t d = by_dim ? x : fixed_dim;
    const std::size_t m = by_dim ? factor * x : x;
    out << "mean," << id(d, m) << ",," << d << ',' << m << ',' << ratio(m, d) << ','
        << num(lambda) << ',' << num(p.error) << ",,,,,," << num(p.gamma) << ",,,\n";
  }
  if (by_dim) {
    if (means.size() >= 2) {
      const LineFit f = loglog_fit(means);
      out << "slope,loglog_error_vs_D,,,,," << num(lambda) << ",,,,,,,," << num(f.slope) << ','
          << num(f.intercept) << ',' << num(f.r2) << '\n';
    }
  } else {
    std::vector<double> x, y;
    for (const auto& p : means)
      if (p.x >= static_cast<double>(fixed_dim)) {
        x.push_back(p.x);
        y.push_back(p.gamma);
      }
    if (x.size() >= 2) {
      const LineFit f = fit_line(x, y);
      out << "gamma_fit,gamma_vs_m_above_D,," << fixed_dim << ",,," << num(lambda)
          << ",,,,,,,," << num(f.slope) << ',' << num(f.intercept) << ',' << num(f.r2) << '\n';
    }
  }
}

std::filesystem::path run_sweep(SweepKind kind, const RunConfig& config,
                                const std::filesystem::path& out_dir) {
  config.validate();
  ensure_dir(out_dir);
  write_resolved(config, out_dir);
  const auto path = out_dir / ("sweep_" + to_string(kind) + ".csv");

  if (kind == SweepKind::scalability) {
    struct Cell {
      std::size_t n;
      std::uint64_t seed;
      double final100;
    };
    std::vector<Cell> cells;
    for (std::size_t n : config.sweep.client_counts) {
      RunConfig c = config;
      c.clients = n;
      c.federation.pi.clear();
      for (std::uint64_t s : config.seeds)
        cells.push_back({n, s, train_seed(c, s, nullptr, nullptr).mean_final100});
    }
    auto out = open_out(path);
    out << kScalabilityCsvHeader << '\n';
    for (const auto& c : cells)
      out << "point,N" << c.n << ',' << c.n << ',' << c.seed << ',' << num(c.final100) << ",\n";
    double first = 0.0;
    bool have_first = false;
    for (std::size_t n : config.sweep.client_counts) {
      double s = 0.0;
      std::size_t k = 0;
      for (const auto& c : cells)
        if (c.n == n) {
          s += c.final100;
          ++k;
        }
      const double mean = s / static_cast<double>(k);
      if (!have_first) {
        first = mean;
        have_first = true;
      }
      out << "mean,N" << n << ',' << n << ",," << num(mean) << ','
          << (first != 0.0 ? num(mean / first - 1.0) : std::string()) << '\n';
    }
    finish(out, path);
    return path;
  }

  std::vector<SweepRow> rows;
  if (kind == SweepKind::dimension)
    rows = dimension_sweep(config.sweep.dims, config.sweep.testbed, config.seeds,
                           config.sweep.anchor_factor);
  else
    rows = anchor_sweep(config.sweep.anchor_counts, config.sweep.anchor_dim,
                        config.sweep.testbed, config.seeds);
  auto out = open_out(path);
  write_testbed_csv(out, rows, kind);
  finish(out, path);
  return path;
}

}  // namespace fedqhd
