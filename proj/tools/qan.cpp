// qan: batch front-end for simulation, synchronization recovery, key rate,
// capacity sweeps, cross-talk measurement and the jitter design rule.
//
// Exit codes: 0 success, 1 usage, 2 configuration or input schema error,
// 3 synchronization / identification failure, 4 zero secure rate,
// 5 any other runtime failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qan/capacity.hpp"
#include "qan/config.hpp"
#include "qan/errors.hpp"
#include "qan/event_io.hpp"
#include "qan/keyrate.hpp"
#include "qan/pipeline.hpp"
#include "qan/sync.hpp"

namespace fs = std::filesystem;
using namespace qan;

namespace {

constexpr const char* kVersion = QAN_VERSION;

enum Exit : int { kOk = 0, kUsage = 1, kConfig = 2, kIdentification = 3, kZeroRate = 4, kRuntime = 5 };

struct Failure {
  int code;
  std::string what;
};

using Field = std::variant<std::monostate, std::int64_t, double, std::string, bool>;

struct Record {
  std::vector<std::pair<std::string, Field>> fields;
  Record& add(std::string k, Field v) {
    fields.emplace_back(std::move(k), std::move(v));
    return *this;
  }
};

std::string format_double(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  std::ostringstream s;
  s << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return s.str();
}

std::string manifest_line(const std::string& sha, std::uint64_t seed) {
  return "qan " + std::string(kVersion) + " config-sha256=" + (sha.empty() ? "none" : sha) +
         " seed=" + std::to_string(seed);
}

/// Writes the whole file at once through a temporary, so a failed command
/// leaves no partial output behind.
void write_atomically(const std::string& path, const std::string& bytes) {
  if (path.empty() || path == "-") {
    std::cout << bytes << std::flush;
    return;
  }
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os << bytes;
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
}

/// CSV with a '#' manifest line, or JSON lines with a leading manifest object.
class Report {
 public:
  Report(std::string format, std::vector<std::string> columns, const std::string& manifest)
      : json_(format == "json-lines"), columns_(std::move(columns)) {
    if (json_) {
      out_ << nlohmann::json{{"manifest", manifest}}.dump() << '\n';
    } else {
      out_ << "# " << manifest << '\n';
      for (std::size_t i = 0; i < columns_.size(); ++i) out_ << (i ? "," : "") << columns_[i];
      out_ << '\n';
    }
  }

  void add(const Record& r) {
    if (json_) {
      nlohmann::ordered_json j;
      for (const auto& [k, v] : r.fields) {
        std::visit(
            [&, key = k](const auto& x) {
              using T = std::decay_t<decltype(x)>;
              if constexpr (std::is_same_v<T, std::monostate>) {
                j[key] = nullptr;
              } else if constexpr (std::is_same_v<T, double>) {
                if (std::isfinite(x)) j[key] = x;
                else j[key] = format_double(x);
              } else {
                j[key] = x;
              }
            },
            v);
      }
      out_ << j.dump() << '\n';
      return;
    }
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (i) out_ << ',';
      for (const auto& [k, v] : r.fields) {
        if (k != columns_[i]) continue;
        std::visit(
            [&](const auto& x) {
              using T = std::decay_t<decltype(x)>;
              if constexpr (std::is_same_v<T, std::monostate>) {
              } else if constexpr (std::is_same_v<T, double>) {
                out_ << format_double(x);
              } else if constexpr (std::is_same_v<T, bool>) {
                out_ << (x ? "true" : "false");
              } else {
                out_ << x;
              }
            },
            v);
      }
    }
    out_ << '\n';
  }

  void save(const std::string& path) const { write_atomically(path, out_.str()); }

 private:
  bool json_;
  std::vector<std::string> columns_;
  std::ostringstream out_;
};

std::vector<std::string> columns_of(const Record& r) {
  std::vector<std::string> c;
  for (const auto& f : r.fields) c.push_back(f.first);
  return c;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "YAML run configuration");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "override the configuration seed");
  cmd->add_option("--out", c.out, "output file or directory (default stdout)");
  cmd->add_option("--format", c.format, "report format")->check(CLI::IsMember({"csv", "json-lines"}));
}

RunConfig load(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_config("seed: 0\n") : load_config(c.config);
  if (c.config.empty()) cfg.sha256.clear();
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

Record identification_record(std::size_t slot, const SlotReport& r, double period_ps) {
  Record rec;
  rec.add("slot", static_cast<std::int64_t>(slot))
      .add("center_ps", r.cluster.center_ps)
      .add("events", static_cast<std::int64_t>(r.cluster.count))
      .add("period_ps", period_ps);
  if (r.id) {
    rec.add("transmitter_id", static_cast<std::int64_t>(r.id->transmitter_id))
        .add("start_period", r.id->start_period)
        .add("offset_ps", r.id->offset_ps)
        .add("delta", r.id->delta)
        .add("peak", static_cast<std::int64_t>(r.id->peak))
        .add("nonzero", static_cast<std::int64_t>(r.id->nonzero))
        .add("runner_up_ratio", r.id->runner_up_ratio);
  } else {
    for (const char* k : {"transmitter_id", "start_period", "offset_ps", "delta", "peak", "nonzero", "runner_up_ratio"})
      rec.add(k, std::monostate{});
  }
  rec.add("status", r.failure.empty() ? std::string("ok") : (r.ambiguous ? "ambiguous" : "failed"));
  rec.add("detail", r.failure);
  return rec;
}

void add_rate_fields(Record& rec, const SiftedTally& t, const KeyRateResult& k) {
  rec.add("n_z", static_cast<std::int64_t>(t.n_z()))
      .add("e_z", k.e_z)
      .add("pulses", static_cast<std::int64_t>(t.pulses()))
      .add("s_z0_lower", k.bounds.s0_lower)
      .add("s_z1_lower", k.bounds.s1_lower)
      .add("phase_error", k.bounds.phase_error)
      .add("lambda_ec", k.lambda_ec)
      .add("secret_bits", k.secret_bits)
      .add("R_bps", k.rate_bps);
}

EventRecord read_event_file(const std::string& path, double period_ps) {
  if (fs::path(path).extension() == ".csv") {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return read_events_csv(is, static_cast<std::int64_t>(std::llround(period_ps)));
  }
  return load_events(path);
}

// --- subcommands ---------------------------------------------------------

int cmd_simulate(const Common& c) {
  const RunConfig cfg = load(c);
  if (c.out.empty()) throw ConfigError("simulate: --out DIR is required");
  if (cfg.transmitters.empty()) throw ConfigError(c.config + ": simulate needs at least one transmitter");
  const auto rec = simulate_transmission(cfg.transmitters, cfg.receiver, cfg.duration_s, cfg.seed);
  const fs::path dir(c.out);
  std::ostringstream ev(std::ios::binary), tr(std::ios::binary);
  write_events(ev, rec);
  write_truth(tr, rec);
  const std::string manifest = manifest_line(cfg.sha256, cfg.seed);
  write_atomically((dir / "events.qane").string(), ev.str());
  write_atomically((dir / "truth.qant").string(), tr.str());
  write_atomically((dir / "manifest.txt").string(),
                   "# " + manifest + "\nevents.qane sha256=" + sha256_hex(ev.str()) +
                       "\ntruth.qant sha256=" + sha256_hex(tr.str()) + "\n");

  Record r;
  r.add("events", static_cast<std::int64_t>(rec.events.size()))
      .add("duration_s", cfg.duration_s)
      .add("transmitters", static_cast<std::int64_t>(cfg.transmitters.size()))
      .add("directory", dir.string());
  Report rep(c.format, columns_of(r), manifest);
  rep.add(r);
  rep.save("-");
  return kOk;
}

int cmd_sync(const Common& c, const std::string& events) {
  const RunConfig cfg = load(c);
  const auto rec = read_event_file(events, cfg.receiver.period_ps);
  const auto codes = cfg.codes();
  if (codes.empty()) throw ConfigError(c.config + ": no transmitters, so no public codes to identify");
  const SyncReport sr = recover(rec, codes, cfg.sync);
  std::vector<Record> rows;
  bool failed = sr.reports.empty();
  for (std::size_t s = 0; s < sr.reports.size(); ++s) {
    rows.push_back(identification_record(s, sr.reports[s], sr.clock.period_ps));
    failed = failed || !sr.reports[s].failure.empty();
  }
  Record proto = identification_record(0, SlotReport{}, 0);
  Report rep(c.format, columns_of(proto), manifest_line(cfg.sha256, cfg.seed));
  for (const auto& r : rows) rep.add(r);
  rep.save(c.out);
  if (failed) {
    std::cerr << "qan sync: " << (sr.reports.empty() ? "no slots found" : "identification failed in at least one slot")
              << '\n';
    return kIdentification;
  }
  return kOk;
}

struct KeyrateArgs {
  std::string tally;
  std::string events;
  std::string export_tally;
  double frequency_hz = 50e6;
  std::optional<double> duty;
  std::optional<double> pulses;
};

int cmd_keyrate(const Common& c, const KeyrateArgs& a) {
  const RunConfig cfg = load(c);
  const std::string manifest = manifest_line(cfg.sha256, cfg.seed);
  const double duty = a.duty.value_or(duty_ratio(cfg.frame.interleave));
  if (a.tally.empty() == a.events.empty()) throw ConfigError("keyrate: give exactly one of --tally or --events");

  auto inputs = [&](const SiftedTally& t, const TransmitterConfig* tx, double f) {
    KeyRateInputs in;
    in.tally = t;
    const TransmitterConfig defaults;
    const auto& src = tx ? *tx : (cfg.transmitters.empty() ? defaults : cfg.transmitters.front());
    in.decoy = {src.mu, src.nu, src.probs.signal, src.probs.decoy, cfg.keyrate.eps_sec, false};
    in.eps_cor = cfg.keyrate.eps_cor;
    in.f_e = cfg.keyrate.f_e;
    in.frequency_hz = f;
    in.duty = duty;
    return in;
  };

  if (!a.tally.empty()) {
    std::ifstream is(a.tally);
    if (!is) throw std::runtime_error("cannot read " + a.tally);
    const SiftedTally t = read_tally_csv(is);
    auto in = inputs(t, nullptr, a.frequency_hz);
    if (a.pulses) in.pulses = *a.pulses;
    const auto k = secure_key_rate(in);
    Record r;
    r.add("source", a.tally);
    add_rate_fields(r, t, k);
    Report rep(c.format, columns_of(r), manifest);
    rep.add(r);
    rep.save(c.out);
    if (!a.export_tally.empty()) {
      std::ostringstream os;
      os << "# " << manifest << '\n';
      write_tally_csv(os, t);
      write_atomically(a.export_tally, os.str());
    }
    return k.rate_bps > 0 ? kOk : kZeroRate;
  }

  const auto rec = read_event_file(a.events, cfg.receiver.period_ps);
  const auto codes = cfg.codes();
  if (codes.empty()) throw ConfigError(c.config + ": no transmitters configured");
  const SyncReport sr = recover(rec, codes, cfg.sync);
  const double f = 1e12 / sr.clock.period_ps;
  std::vector<Record> rows;
  bool unidentified = sr.reports.empty(), zero = false;
  for (std::size_t s = 0; s < sr.reports.size(); ++s) {
    const auto& rep = sr.reports[s];
    Record r;
    r.add("slot", static_cast<std::int64_t>(s));
    const TransmitterConfig* tx = nullptr;
    if (rep.failure.empty() && rep.id) {
      for (const auto& t : cfg.transmitters)
        if (t.id == rep.id->transmitter_id) tx = &t;
    }
    if (!tx) {
      unidentified = true;
      r.add("transmitter_id", std::monostate{});
      add_rate_fields(r, SiftedTally{}, KeyRateResult{});
      r.add("status", std::string("unidentified"));
      rows.push_back(r);
      continue;
    }
    const auto range = pulse_range(rep.id->offset_ps, sr.clock.period_ps, rec.t_begin_ps, rec.t_end_ps);
    const auto tally = sift(rec.events, sr.slots, static_cast<int>(s), rep, tx->record(), range);
    const auto k = secure_key_rate(inputs(tally, tx, f));
    zero = zero || k.rate_bps <= 0;
    r.add("transmitter_id", static_cast<std::int64_t>(tx->id));
    add_rate_fields(r, tally, k);
    r.add("status", std::string(k.rate_bps > 0 ? "ok" : "zero-rate"));
    rows.push_back(r);
    if (!a.export_tally.empty()) {
      std::ostringstream os;
      os << "# " << manifest << '\n';
      write_tally_csv(os, tally);
      write_atomically((fs::path(a.export_tally) / ("tally_" + std::to_string(tx->id) + ".csv")).string(), os.str());
    }
  }
  Record proto;
  proto.add("slot", std::int64_t{0}).add("transmitter_id", std::int64_t{0});
  add_rate_fields(proto, SiftedTally{}, KeyRateResult{});
  proto.add("status", std::string());
  Report out(c.format, columns_of(proto), manifest);
  for (const auto& r : rows) out.add(r);
  out.save(c.out);
  if (unidentified) return kIdentification;
  return zero ? kZeroRate : kOk;
}

int cmd_capacity(const Common& c) {
  const RunConfig cfg = load(c);
  if (!cfg.capacity) throw ConfigError(c.config + ": no capacity section");
  const auto& s = *cfg.capacity;
  const auto pts = capacity_sweep(s.params, s.users, s.distances_km);
  Report rep(c.format, {"n_users", "distance_km", "total_loss_dB", "e_z", "R_bps"}, manifest_line(cfg.sha256, cfg.seed));
  for (const auto& p : pts) {
    Record r;
    r.add("n_users", static_cast<std::int64_t>(p.users))
        .add("distance_km", p.distance_km)
        .add("total_loss_dB", p.total_loss_db)
        .add("e_z", p.e_z)
        .add("R_bps", p.rate_bps);
    rep.add(r);
  }
  rep.save(c.out);
  return kOk;
}

struct JitterArgs {
  double frequency_hz = 0;
  std::optional<double> e_max;
  std::optional<double> fwhm_ps;
  double reference_ps = 80.0;
};

int cmd_jitter(const Common& c, const JitterArgs& a) {
  if (!a.e_max && !a.fwhm_ps) throw ConfigError("jitter: give --e-max and/or --fwhm-ps");
  Record r;
  r.add("frequency_hz", a.frequency_hz);
  if (a.e_max) {
    const double t = max_jitter(a.frequency_hz, *a.e_max) * 1e12;
    r.add("e_max", *a.e_max).add("max_fwhm_ps", t).add("reference_fwhm_ps", a.reference_ps);
    r.add("delta_ps", t - a.reference_ps);
  } else {
    for (const char* k : {"e_max", "max_fwhm_ps", "reference_fwhm_ps", "delta_ps"}) r.add(k, std::monostate{});
  }
  if (a.fwhm_ps) {
    r.add("fwhm_ps", *a.fwhm_ps).add("qber", jitter_qber({a.frequency_hz, *a.fwhm_ps * 1e-12}));
  } else {
    r.add("fwhm_ps", std::monostate{}).add("qber", std::monostate{});
  }
  Report rep(c.format, columns_of(r), manifest_line("", 0));
  rep.add(r);
  rep.save(c.out);
  return kOk;
}

int cmd_crosstalk(const Common& c) {
  const RunConfig cfg = load(c);
  if (!cfg.crosstalk) throw ConfigError(c.config + ": no crosstalk section");
  if (cfg.transmitters.empty()) throw ConfigError(c.config + ": crosstalk needs a victim transmitter");
  const auto& x = *cfg.crosstalk;
  const auto j = calibrate_crosstalk_jitter(x.increase_plus, x.increase_minus, x.spacing_ps, cfg.receiver.gate_ps);
  ReceiverConfig rx = cfg.receiver;
  rx.jitter_ps = j.sigma_ps;
  const auto pts =
      measure_crosstalk(cfg.transmitters.front(), rx, x.offsets, x.spacing_ps, j.bias_ps, x.duration_s, x.repeats, cfg.seed);
  Report rep(c.format, {"offset", "increase", "std_error", "expected", "repeats", "sigma_ps", "bias_ps"},
             manifest_line(cfg.sha256, cfg.seed));
  for (const auto& p : pts) {
    Record r;
    r.add("offset", static_cast<std::int64_t>(p.offset))
        .add("increase", p.increase)
        .add("std_error", p.std_error)
        .add("expected", expected_crosstalk(p.offset, j, x.spacing_ps, cfg.receiver.gate_ps))
        .add("repeats", static_cast<std::int64_t>(p.repeats))
        .add("sigma_ps", j.sigma_ps)
        .add("bias_ps", j.bias_ps);
    rep.add(r);
  }
  rep.save(c.out);
  return kOk;
}

int cmd_pipeline(const Common& c, bool quiet) {
  const RunConfig cfg = load(c);
  const auto res = run_pipeline(cfg.pipeline(), [&](std::size_t w, double t) {
    if (!quiet) std::cerr << "qan pipeline: window " << w << ", " << t << " s simulated\n";
  });
  Record proto;
  proto.add("slot", std::int64_t{0})
      .add("transmitter_id", std::int64_t{0})
      .add("start_period", std::int64_t{0})
      .add("delta", 0.0)
      .add("duration_s", 0.0);
  add_rate_fields(proto, SiftedTally{}, KeyRateResult{});
  proto.add("status", std::string());
  Report rep(c.format, columns_of(proto), manifest_line(cfg.sha256, cfg.seed));
  bool unidentified = res.users.empty(), zero = false;
  for (const auto& u : res.users) {
    Record r;
    r.add("slot", static_cast<std::int64_t>(u.slot));
    if (u.transmitter_id == 0) {
      unidentified = true;
      r.add("transmitter_id", std::monostate{}).add("start_period", std::monostate{});
    } else {
      r.add("transmitter_id", static_cast<std::int64_t>(u.transmitter_id)).add("start_period", u.report.id->start_period);
    }
    r.add("delta", u.report.id ? u.report.id->delta : 0.0).add("duration_s", res.duration_s);
    add_rate_fields(r, u.tally, u.rate);
    const bool ok = u.transmitter_id != 0 && u.rate.rate_bps > 0;
    zero = zero || (u.transmitter_id != 0 && u.rate.rate_bps <= 0);
    r.add("status", std::string(u.transmitter_id == 0 ? "unidentified" : ok ? "ok" : "zero-rate"));
    rep.add(r);
  }
  rep.save(c.out);
  if (unidentified) return kIdentification;
  return zero ? kZeroRate : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Qubit-synchronized quantum access network simulator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common sim, syn, key, cap, jit, xt, pipe;
  auto* simulate = app.add_subcommand("simulate", "simulate detection events and ground truth");
  add_common(simulate, sim, true);

  std::string events;
  auto* sync = app.add_subcommand("sync", "recover clock, slots and transmitter identities from events");
  add_common(sync, syn, true);
  sync->add_option("--events", events, "event file (.qane binary or .csv)")->required();

  KeyrateArgs ka;
  auto* keyrate = app.add_subcommand("keyrate", "finite-key secure rate from a tally CSV or an event file");
  add_common(keyrate, key, false);
  keyrate->add_option("--tally", ka.tally, "tally CSV (basis,intensity,sent,detected,errors)");
  keyrate->add_option("--events", ka.events, "event file; sifted per identified slot");
  keyrate->add_option("--export-tally", ka.export_tally, "write the tally back (file, or directory with --events)");
  keyrate->add_option("--frequency-hz", ka.frequency_hz, "repetition frequency for --tally");
  keyrate->add_option("--duty", ka.duty, "duty ratio q = M/(M+1)");
  keyrate->add_option("--pulses", ka.pulses, "random pulses behind the tally (default: sum of sent)");

  auto* capacity = app.add_subcommand("capacity", "per-user secure rate over users and distances");
  add_common(capacity, cap, true);

  JitterArgs ja;
  auto* jitter = app.add_subcommand("jitter", "timing-jitter QBER and the maximum tolerable FWHM");
  add_common(jitter, jit, false);
  jitter->add_option("--frequency-hz", ja.frequency_hz, "repetition frequency")->required()->check(CLI::PositiveNumber);
  jitter->add_option("--e-max", ja.e_max, "QBER budget for jitter");
  jitter->add_option("--fwhm-ps", ja.fwhm_ps, "detector jitter FWHM");
  jitter->add_option("--reference-ps", ja.reference_ps, "reference FWHM for the delta column");

  auto* crosstalk = app.add_subcommand("crosstalk", "measure relative count increase from neighbouring slots");
  add_common(crosstalk, xt, true);

  bool quiet = false;
  auto* pipeline = app.add_subcommand("pipeline", "streaming simulate, sync, sift and key rate");
  add_common(pipeline, pipe, true);
  pipeline->add_flag("--quiet", quiet, "no progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sim);
    if (*sync) return cmd_sync(syn, events);
    if (*keyrate) return cmd_keyrate(key, ka);
    if (*capacity) return cmd_capacity(cap);
    if (*jitter) return cmd_jitter(jit, ja);
    if (*crosstalk) return cmd_crosstalk(xt);
    if (*pipeline) return cmd_pipeline(pipe, quiet);
  } catch (const ConfigError& e) {
    std::cerr << "qan: configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const SchemaError& e) {
    std::cerr << "qan: input error: " << e.what() << '\n';
    return kConfig;
  } catch (const ParameterError& e) {
    std::cerr << "qan: invalid parameter: " << e.what() << '\n';
    return kConfig;
  } catch (const ConfigurationError& e) {
    std::cerr << "qan: configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const ClockNotFoundError& e) {
    std::cerr << "qan: synchronization failed: " << e.what() << '\n';
    return kIdentification;
  } catch (const RefinementError& e) {
    std::cerr << "qan: synchronization failed: " << e.what() << '\n';
    return kIdentification;
  } catch (const DemarcationError& e) {
    std::cerr << "qan: synchronization failed: " << e.what() << '\n';
    return kIdentification;
  } catch (const IdentificationError& e) {
    std::cerr << "qan: identification failed: " << e.what() << '\n';
    return kIdentification;
  } catch (const std::exception& e) {
    std::cerr << "qan: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
