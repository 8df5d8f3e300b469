#include "qan/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "qan/errors.hpp"

namespace qan {

namespace {

class Reader {
 public:
  explicit Reader(std::string name) : name_(std::move(name)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& what) const {
    const auto m = at.Mark();
    std::string where = name_;
    if (!m.is_null()) where += ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1);
    throw ConfigError(where + ": " + what);
  }

  void require_map(const YAML::Node& n, const std::string& what) const {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
  }

  void allow(const YAML::Node& map, const std::string& what, std::initializer_list<const char*> keys) const {
    require_map(map, what);
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!ok.count(key)) fail(kv.first, "unknown key '" + key + "' in " + what);
    }
  }

  template <class T>
  T value(const YAML::Node& n, const std::string& key) const {
    if (!n.IsScalar()) fail(n, "'" + key + "' must be a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::BadConversion&) {
      fail(n, "'" + key + "' has the wrong type");
    }
  }

  template <class T>
  void get(const YAML::Node& map, const char* key, T& out) const {
    const auto n = map[key];
    if (n) out = value<T>(n, key);
  }

  template <class T>
  T need(const YAML::Node& map, const char* key, const std::string& what) const {
    const auto n = map[key];
    if (!n) fail(map, "missing required key '" + std::string(key) + "' in " + what);
    return value<T>(n, key);
  }

  template <class T>
  std::vector<T> list(const YAML::Node& n, const std::string& key) const {
    if (!n.IsSequence()) fail(n, "'" + key + "' must be a list");
    std::vector<T> out;
    for (const auto& e : n) out.push_back(value<T>(e, key));
    return out;
  }

  /// Runs a validate() call, reporting failures at the given node.
  template <class F>
  void check(const YAML::Node& at, F&& f) const {
    try {
      f();
    } catch (const ParameterError& e) {
      fail(at, e.what());
    } catch (const ConfigurationError& e) {
      fail(at, e.what());
    }
  }

 private:
  std::string name_;
};

constexpr std::initializer_list<const char*> kTransmitterKeys = {
    "id",        "slot_ps",  "channel_loss_db", "fiber_km",  "alpha_db_per_km", "clock_error_ppm",
    "start_period", "mu",    "nu",              "p_signal",  "p_z",             "p_opt",
    "qber",      "code_seed", "payload_seed",   "period_ps"};

void read_transmitter(const Reader& r, const YAML::Node& n, TransmitterConfig& t, std::optional<double>& qber) {
  r.get(n, "id", t.id);
  r.get(n, "slot_ps", t.slot_ps);
  if (n["channel_loss_db"]) t.channel_loss_db = r.value<double>(n["channel_loss_db"], "channel_loss_db");
  r.get(n, "fiber_km", t.fiber_km);
  r.get(n, "alpha_db_per_km", t.alpha_db_per_km);
  r.get(n, "clock_error_ppm", t.clock_error_ppm);
  r.get(n, "start_period", t.start_period);
  r.get(n, "mu", t.mu);
  r.get(n, "nu", t.nu);
  if (n["p_signal"]) {
    t.probs.signal = r.value<double>(n["p_signal"], "p_signal");
    t.probs.decoy = 1 - t.probs.signal;
  }
  if (n["p_z"]) {
    t.probs.z = r.value<double>(n["p_z"], "p_z");
    t.probs.x = 1 - t.probs.z;
  }
  r.get(n, "p_opt", t.p_opt);
  if (n["qber"]) {
    if (n["p_opt"]) r.fail(n["qber"], "give either p_opt or qber, not both");
    qber = r.value<double>(n["qber"], "qber");
  }
  r.get(n, "code_seed", t.code_seed);
  r.get(n, "payload_seed", t.payload_seed);
  r.get(n, "period_ps", t.period_ps);
}

std::vector<double> distances(const Reader& r, const YAML::Node& n) {
  if (n.IsSequence()) return r.list<double>(n, "distances_km");
  r.allow(n, "distances_km", {"from", "to", "step"});
  const double from = r.need<double>(n, "from", "distances_km");
  const double to = r.need<double>(n, "to", "distances_km");
  const double step = r.need<double>(n, "step", "distances_km");
  if (!(step > 0) || to < from) r.fail(n, "distances_km needs from <= to and step > 0");
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((to - from) / step + 1e-9));
  for (long i = 0; i <= count; ++i) out.push_back(from + static_cast<double>(i) * step);
  return out;
}

}  // namespace

std::vector<SyncString> RunConfig::codes() const {
  std::vector<SyncString> out;
  for (const auto& t : transmitters) out.push_back(t.code());
  return out;
}

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig p;
  p.transmitters = transmitters;
  p.receiver = receiver;
  p.sync = sync;
  p.window_s = keyrate.window_s;
  p.target_n_z = keyrate.target_n_z;
  p.max_duration_s = keyrate.max_duration_s;
  p.eps_sec = keyrate.eps_sec;
  p.eps_cor = keyrate.eps_cor;
  p.f_e = keyrate.f_e;
  p.seed = seed;
  return p;
}

RunConfig parse_config(std::string_view text, const std::string& name) {
  const Reader r(name);
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ConfigError(name + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                      ": " + e.msg);
  }
  RunConfig c;
  c.sha256 = sha256_hex(text);
  r.allow(root, "configuration",
          {"scenario", "seed", "duration_s", "frame", "receiver", "defaults", "transmitters", "sync", "keyrate",
           "capacity", "crosstalk"});
  r.get(root, "scenario", c.scenario);
  c.seed = r.need<std::uint64_t>(root, "seed", "configuration");
  r.get(root, "duration_s", c.duration_s);
  if (!(c.duration_s >= 0)) r.fail(root["duration_s"], "duration_s must be >= 0");

  if (const auto f = root["frame"]) {
    r.allow(f, "frame", {"L", "L1", "M"});
    r.get(f, "L", c.frame.sync_length);
    r.get(f, "L1", c.frame.period_length);
    r.get(f, "M", c.frame.interleave);
    r.check(f, [&] { c.frame.validate(); });
  }

  if (const auto n = root["receiver"]) {
    r.allow(n, "receiver",
            {"detector_efficiency", "p_dc", "jitter_ps", "gate_ps", "splitter_loss_db", "eta_r", "z_fraction",
             "period_ps", "max_slots"});
    auto& x = c.receiver;
    r.get(n, "detector_efficiency", x.detector_efficiency);
    r.get(n, "p_dc", x.p_dc);
    r.get(n, "jitter_ps", x.jitter_ps);
    r.get(n, "gate_ps", x.gate_ps);
    r.get(n, "splitter_loss_db", x.splitter_loss_db);
    r.get(n, "eta_r", x.eta_r);
    r.get(n, "z_fraction", x.z_fraction);
    r.get(n, "period_ps", x.period_ps);
    r.get(n, "max_slots", x.max_slots);
    r.check(n, [&] { x.validate(); });
  } else {
    c.receiver.validate();
  }

  TransmitterConfig base;
  base.period_ps = c.receiver.period_ps;
  std::optional<double> base_qber;
  if (const auto d = root["defaults"]) {
    r.allow(d, "defaults", kTransmitterKeys);
    read_transmitter(r, d, base, base_qber);
  }
  if (const auto list = root["transmitters"]) {
    if (!list.IsSequence()) r.fail(list, "transmitters must be a list");
    std::set<int> ids;
    int next_id = 1;
    for (const auto& n : list) {
      r.allow(n, "transmitter", kTransmitterKeys);
      TransmitterConfig t = base;
      t.id = next_id;
      std::optional<double> qber = base_qber;
      read_transmitter(r, n, t, qber);
      if (n["p_opt"]) qber.reset();
      t.frame = c.frame;
      if (!ids.insert(t.id).second) r.fail(n, "duplicate transmitter id " + std::to_string(t.id));
      next_id = t.id + 1;
      r.check(n, [&] { t.validate(); });
      if (qber) {
        r.check(n, [&] {
          t.p_opt = calibrate_misalignment(*qber, total_transmittance(t, c.receiver),
                                           {t.mu, t.nu, t.probs.signal, t.probs.decoy}, c.receiver.p_dc);
        });
      }
      c.transmitters.push_back(t);
    }
  }

  c.sync.frame = c.frame;
  c.sync.gate_ps = c.receiver.gate_ps;
  c.sync.max_slots = c.receiver.max_slots;
  c.sync.period_hint_ps = c.receiver.period_ps;
  if (const auto s = root["sync"]) {
    r.allow(s, "sync",
            {"n_f", "delta_threshold", "ambiguity_ratio", "lts_trim", "lts_tolerance", "lts_max_iterations",
             "lts_window_ps", "pair_depth", "period_hint_ps"});
    r.get(s, "n_f", c.sync.n_f);
    r.get(s, "delta_threshold", c.sync.identify.delta_threshold);
    r.get(s, "ambiguity_ratio", c.sync.identify.ambiguity_ratio);
    r.get(s, "lts_trim", c.sync.lts.trim);
    r.get(s, "lts_tolerance", c.sync.lts.tolerance);
    r.get(s, "lts_max_iterations", c.sync.lts.max_iterations);
    r.get(s, "lts_window_ps", c.sync.lts.window_ps);
    r.get(s, "pair_depth", c.sync.lts.pair_depth);
    r.get(s, "period_hint_ps", c.sync.period_hint_ps);
    if (!(c.sync.lts.trim >= 0 && c.sync.lts.trim < 1)) r.fail(s, "lts_trim must lie in [0, 1)");
    if (!(c.sync.identify.delta_threshold > 0)) r.fail(s, "delta_threshold must be positive");
  }

  if (const auto k = root["keyrate"]) {
    r.allow(k, "keyrate", {"eps_sec", "eps_cor", "f_e", "target_n_z", "window_s", "max_duration_s"});
    auto& x = c.keyrate;
    r.get(k, "eps_sec", x.eps_sec);
    r.get(k, "eps_cor", x.eps_cor);
    r.get(k, "f_e", x.f_e);
    r.get(k, "target_n_z", x.target_n_z);
    r.get(k, "window_s", x.window_s);
    r.get(k, "max_duration_s", x.max_duration_s);
    r.check(k, [&] { security_constant(x.eps_sec, x.eps_cor); });
    if (!(x.f_e >= 1)) r.fail(k, "f_e must be >= 1");
  }

  if (const auto n = root["capacity"]) {
    r.allow(n, "capacity",
            {"capacity", "users", "distances_km", "splitter_loss_db", "splitter_ports", "splitter_excess_db", "p_dc",
             "p_opt", "p_t", "alpha_db_per_km", "eta_r", "p_z", "mu", "nu", "p_signal", "n_z", "f_e", "eps_sec",
             "eps_cor", "laser_hz", "slot_width_ps", "M"});
    CapacitySweep s;
    auto& p = s.params;
    r.get(n, "capacity", p.capacity);
    if (n["splitter_loss_db"] && n["splitter_ports"]) {
      r.fail(n["splitter_ports"], "give either splitter_loss_db or splitter_ports, not both");
    }
    r.get(n, "splitter_loss_db", p.splitter_loss_db);
    if (n["splitter_ports"]) {
      double excess = 1.44;
      r.get(n, "splitter_excess_db", excess);
      const int ports = r.value<int>(n["splitter_ports"], "splitter_ports");
      r.check(n["splitter_ports"], [&] { p.splitter_loss_db = splitter_loss_db(ports, excess); });
    }
    r.get(n, "p_dc", p.p_dc);
    r.get(n, "p_opt", p.p_opt);
    r.get(n, "p_t", p.p_t);
    r.get(n, "alpha_db_per_km", p.alpha_db_per_km);
    r.get(n, "eta_r", p.eta_r);
    r.get(n, "p_z", p.p_z);
    r.get(n, "mu", p.decoy.mu);
    r.get(n, "nu", p.decoy.nu);
    if (n["p_signal"]) {
      p.decoy.p_mu = r.value<double>(n["p_signal"], "p_signal");
      p.decoy.p_nu = 1 - p.decoy.p_mu;
    }
    r.get(n, "n_z", p.n_z);
    r.get(n, "f_e", p.f_e);
    r.get(n, "eps_sec", p.decoy.eps_sec);
    r.get(n, "eps_cor", p.eps_cor);
    r.get(n, "laser_hz", p.laser_hz);
    if (n["slot_width_ps"]) p.slot_width_s = r.value<double>(n["slot_width_ps"], "slot_width_ps") * 1e-12;
    r.get(n, "M", p.interleave);
    s.users = n["users"] ? r.list<int>(n["users"], "users") : std::vector<int>{p.capacity};
    if (n["distances_km"]) s.distances_km = distances(r, n["distances_km"]);
    for (int u : s.users) {
      p.active_users = u;
      r.check(n, [&] { p.validate(); });
    }
    p.active_users = s.users.empty() ? p.capacity : s.users.front();
    c.capacity = s;
  }

  if (const auto n = root["crosstalk"]) {
    r.allow(n, "crosstalk", {"increase_plus", "increase_minus", "spacing_ps", "offsets", "duration_s", "repeats"});
    CrosstalkSettings x;
    r.get(n, "increase_plus", x.increase_plus);
    r.get(n, "increase_minus", x.increase_minus);
    r.get(n, "spacing_ps", x.spacing_ps);
    if (n["offsets"]) x.offsets = r.list<int>(n["offsets"], "offsets");
    r.get(n, "duration_s", x.duration_s);
    r.get(n, "repeats", x.repeats);
    if (x.repeats < 1 || !(x.duration_s > 0) || !(x.spacing_ps > 0)) {
      r.fail(n, "crosstalk needs repeats >= 1, duration_s > 0 and spacing_ps > 0");
    }
    c.crosstalk = x;
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open configuration file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

}  // namespace qan
