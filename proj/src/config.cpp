#include "fedqhd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fedqhd/envs.hpp"
#include "fedqhd/error.hpp"

namespace fedqhd {

using nlohmann::json;

namespace {

// Reads fields out of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidConfig(where() + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw InvalidConfig("unknown key '" + qualified(key) + "'");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      check_type<T>(*it, key);
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw InvalidConfig("bad value for '" + qualified(key) + "': " + e.what());
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  template <class T>
  void check_type(const json& v, const std::string& key) const {
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = v.is_string();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    } else {
      ok = v.is_array();
      if (ok)
        for (const auto& e : v) {
          using E = typename T::value_type;
          if constexpr (std::is_floating_point_v<E>)
            ok = ok && e.is_number();
          else
            ok = ok && (e.is_number_unsigned() ||
                        (e.is_number_integer() && e.template get<long long>() >= 0));
        }
    }
    if (!ok) throw InvalidConfig("wrong type for '" + qualified(key) + "'");
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_encoder(const json& j, EncoderBlock& e) {
  Section s(j, "encoder");
  std::string mode = e.homogeneous ? "homogeneous" : "heterogeneous";
  s.get("mode", mode);
  if (mode == "homogeneous")
    e.homogeneous = true;
  else if (mode == "heterogeneous")
    e.homogeneous = false;
  else
    throw InvalidConfig("encoder.mode must be homogeneous or heterogeneous");
  s.get("dim", e.dim);
  s.get("dims", e.dims);
  s.get("sigma0", e.sigma0);
}

void read_agent(const json& j, AgentConfig& a) {
  Section s(j, "agent");
  s.get("eta", a.eta);
  s.get("gamma", a.gamma);
  s.get("target_sync", a.target_sync_period);
  s.get("buffer", a.buffer_capacity);
  s.get("minibatch", a.minibatch);
  s.get("learning_starts", a.learning_starts);
  std::string rule = to_string(a.target_rule);
  s.get("target_rule", rule);
  a.target_rule = parse_target_rule(rule);
  s.get("bootstrap_truncated", a.bootstrap_truncated);
  s.get("feature_cache", a.feature_cache);
  if (const json* eps = s.child("epsilon")) {
    Section e(*eps, "agent.epsilon");
    e.get("start", a.epsilon.start);
    e.get("end", a.epsilon.end);
    e.get("anneal_episodes", a.epsilon.anneal_episodes);
  }
}

void read_federation(const json& j, FederationBlock& f) {
  Section s(j, "federation");
  std::string mode = to_string(f.mode);
  s.get("mode", mode);
  f.mode = parse_federation_mode(mode);
  s.get("anchors", f.anchors);
  s.get("lambda", f.lambda);
  s.get("pi", f.pi);
  s.get("cross_check", f.cross_check);
}

void read_sweep(const json& j, SweepBlock& w) {
  Section s(j, "sweep");
  if (const json* t = s.child("truth")) {
    Section ts(*t, "sweep.truth");
    ts.get("state_dim", w.testbed.truth.state_dim);
    ts.get("master_dim", w.testbed.truth.master_dim);
    ts.get("sigma", w.testbed.truth.sigma);
    ts.get("box", w.testbed.truth.box);
    ts.get("actions", w.testbed.truth.action_count);
  }
  s.get("clients", w.testbed.clients);
  s.get("lambda", w.testbed.lambda);
  s.get("test_states", w.testbed.test_states);
  s.get("bounds", w.testbed.bounds);
  s.get("dims", w.dims);
  s.get("anchor_factor", w.anchor_factor);
  s.get("anchor_dim", w.anchor_dim);
  s.get("anchor_counts", w.anchor_counts);
  s.get("client_counts", w.client_counts);
}

}  // namespace

void RunConfig::validate() const {
  env_spec(env);  // throws InvalidConfig for unknown names
  if (clients == 0) throw InvalidConfig("clients must be >= 1");
  if (rounds == 0) throw InvalidConfig("rounds must be >= 1");
  if (episodes_per_round == 0) throw InvalidConfig("episodes_per_round must be >= 1");
  if (encoder.homogeneous && encoder.dim == 0) throw InvalidConfig("encoder.dim must be >= 1");
  if (!encoder.homogeneous) {
    if (encoder.dims.empty()) throw InvalidConfig("encoder.dims must not be empty");
    for (auto d : encoder.dims)
      if (d == 0) throw InvalidConfig("encoder.dims entries must be >= 1");
  }
  if (!(encoder.sigma0 > 0.0)) throw InvalidConfig("encoder.sigma0 must be positive");
  agent.validate();
  if (federation.anchors == 0) throw InvalidConfig("federation.anchors must be >= 1");
  if (!(federation.lambda >= 0.0)) throw InvalidConfig("federation.lambda must be >= 0");
  if (!federation.pi.empty()) {
    try {
      check_weights(federation.pi, clients);
    } catch (const BadWeights& e) {
      throw InvalidConfig(std::string("federation.pi: ") + e.what());
    }
  }
  if (seeds.empty()) throw InvalidConfig("seeds must not be empty");
  if (output_dir.empty()) throw InvalidConfig("output_dir must not be empty");
  const auto& t = sweep.testbed;
  if (t.truth.state_dim == 0 || t.truth.master_dim == 0 || t.truth.action_count == 0 ||
      !(t.truth.sigma > 0.0) || !(t.truth.box > 0.0))
    throw InvalidConfig("sweep.truth: dimensions, sigma and box must be positive");
  if (t.clients == 0 || t.test_states == 0) throw InvalidConfig("sweep: clients and test_states must be >= 1");
  if (!(t.lambda >= 0.0)) throw InvalidConfig("sweep.lambda must be >= 0");
  if (sweep.anchor_factor == 0 || sweep.anchor_dim == 0)
    throw InvalidConfig("sweep: anchor_factor and anchor_dim must be >= 1");
  for (auto n : sweep.client_counts)
    if (n == 0) throw InvalidConfig("sweep.client_counts entries must be >= 1");
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  {
    Section s(j, "");
    s.get("env", c.env);
    s.get("clients", c.clients);
    s.get("rounds", c.rounds);
    s.get("episodes_per_round", c.episodes_per_round);
    s.get("seeds", c.seeds);
    s.get("output_dir", c.output_dir);
    if (const json* e = s.child("encoder")) read_encoder(*e, c.encoder);
    if (const json* a = s.child("agent")) read_agent(*a, c.agent);
    if (const json* f = s.child("federation")) read_federation(*f, c.federation);
    if (const json* m = s.child("metrics")) {
      Section ms(*m, "metrics");
      ms.get("wall_clock", c.wall_clock);
    }
    if (const json* w = s.child("sweep")) read_sweep(*w, c.sweep);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidConfig("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

nlohmann::ordered_json resolved_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["env"] = c.env;
  j["clients"] = c.clients;
  j["rounds"] = c.rounds;
  j["episodes_per_round"] = c.episodes_per_round;
  j["encoder"] = {{"mode", c.encoder.homogeneous ? "homogeneous" : "heterogeneous"},
                  {"dim", c.encoder.dim},
                  {"dims", c.encoder.dims},
                  {"sigma0", c.encoder.sigma0}};
  const AgentConfig& a = c.agent;
  j["agent"] = {{"eta", a.eta},
                {"gamma", a.gamma},
                {"target_sync", a.target_sync_period},
                {"epsilon",
                 {{"start", a.epsilon.start},
                  {"end", a.epsilon.end},
                  {"anneal_episodes", a.epsilon.anneal_episodes}}},
                {"buffer", a.buffer_capacity},
                {"minibatch", a.minibatch},
                {"learning_starts", a.learning_starts},
                {"target_rule", to_string(a.target_rule)},
                {"bootstrap_truncated", a.bootstrap_truncated},
                {"feature_cache", a.feature_cache}};
  j["federation"] = {{"mode", to_string(c.federation.mode)},
                     {"anchors", c.federation.anchors},
                     {"lambda", c.federation.lambda},
                     {"pi", c.federation.pi.empty() ? uniform_weights(c.clients)
                                                    : c.federation.pi},
                     {"cross_check", c.federation.cross_check}};
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["metrics"] = {{"wall_clock", c.wall_clock}};
  const auto& t = c.sweep.testbed;
  j["sweep"] = {{"truth",
                 {{"state_dim", t.truth.state_dim},
                  {"master_dim", t.truth.master_dim},
                  {"sigma", t.truth.sigma},
                  {"box", t.truth.box},
                  {"actions", t.truth.action_count}}},
                {"clients", t.clients},
                {"lambda", t.lambda},
                {"test_states", t.test_states},
                {"bounds", t.bounds},
                {"dims", c.sweep.dims},
                {"anchor_factor", c.sweep.anchor_factor},
                {"anchor_dim", c.sweep.anchor_dim},
                {"anchor_counts", c.sweep.anchor_counts},
                {"client_counts", c.sweep.client_counts}};
  return j;
}

}  // namespace fedqhd
