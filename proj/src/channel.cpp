#include "qan/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "qan/errors.hpp"
#include "qan/random.hpp"

namespace qan {

namespace {

constexpr std::uint64_t kStreamPulse = 0x70756c7365ULL;
constexpr std::uint64_t kStreamDark = 0x6461726bULL;
constexpr std::uint64_t kStreamCrosstalk = 0x78746c6bULL;
constexpr std::int64_t kCrosstalkReach = 1000;  // periods

double db_to_transmittance(double db) { return std::pow(10.0, -db / 10.0); }

bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

struct RawEvent {
  std::int64_t t;
  Detector ch;
  TruthEntry truth;
};

bool raw_less(const RawEvent& a, const RawEvent& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.truth.source != b.truth.source) return a.truth.source < b.truth.source;
  if (a.truth.index != b.truth.index) return a.truth.index < b.truth.index;
  return a.ch < b.ch;
}

EventRecord finish(std::vector<RawEvent>& raw, std::int64_t period, std::int64_t t0, std::int64_t t1) {
  std::sort(raw.begin(), raw.end(), raw_less);
  EventRecord rec;
  rec.period_ps = period;
  rec.t_begin_ps = t0;
  rec.t_end_ps = t1;
  rec.events.reserve(raw.size());
  rec.truth.reserve(raw.size());
  for (const auto& r : raw) {
    rec.events.push_back({r.t, r.ch});
    rec.truth.push_back(r.truth);
  }
  return rec;
}

Detector measure(const QubitSymbol& sent, double z_fraction, double p_opt, Engine& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Basis rb = u(rng) < z_fraction ? Basis::Z : Basis::X;
  std::uint8_t bit;
  if (rb == sent.basis) {
    bit = sent.bit;
    if (u(rng) < p_opt) bit ^= 1U;
  } else {
    bit = u(rng) < 0.5 ? 1 : 0;
  }
  return make_detector(rb, bit);
}

void simulate_one(const TransmitterConfig& tx, std::size_t tx_index, const ReceiverConfig& rx, std::int64_t t0,
                  std::int64_t t1, std::uint64_t seed, std::vector<RawEvent>& out) {
  const double eta = total_transmittance(tx, rx);
  const double k_max = std::max(tx.mu, tx.nu);
  const double p_max = -std::expm1(-k_max * eta);
  if (!(p_max > 0.0)) return;

  const long double tau = static_cast<long double>(tx.effective_period_ps());
  const long double slot = static_cast<long double>(tx.slot_ps);
  const long double k0 = static_cast<long double>(tx.start_period);
  auto first_pulse = [&](std::int64_t t) -> std::uint64_t {
    const long double n = std::ceil((static_cast<long double>(t) - slot) / tau - k0);
    return n <= 0 ? 0 : static_cast<std::uint64_t>(n);
  };
  const std::uint64_t n_begin = first_pulse(t0);
  const std::uint64_t n_end = first_pulse(t1);
  if (n_end <= n_begin) return;

  auto rng = make_engine(seed, {kStreamPulse, tx_index, static_cast<std::uint64_t>(t0)});
  const bool every_pulse = p_max >= 1.0 - 1e-12;
  std::geometric_distribution<std::uint64_t> geometric(every_pulse ? 0.5 : p_max);
  auto skip = [&](Engine& g) -> std::uint64_t { return every_pulse ? 0 : geometric(g); };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, rx.jitter_ps > 0 ? rx.jitter_ps : 1.0);
  const double accept_mu = -std::expm1(-tx.mu * eta) / p_max;
  const double accept_nu = -std::expm1(-tx.nu * eta) / p_max;
  const TransmitterRecord record = tx.record();

  for (std::uint64_t n = n_begin + skip(rng); n < n_end; n += 1 + skip(rng)) {
    const QubitSymbol s = record.symbol_at(n);
    const double accept = s.intensity == Intensity::Signal ? accept_mu : accept_nu;
    if (accept < 1.0 && u(rng) >= accept) continue;
    const Detector ch = measure(s, rx.z_fraction, tx.p_opt, rng);
    long double t = slot + (k0 + static_cast<long double>(n)) * tau;
    if (rx.jitter_ps > 0) t += jitter(rng);
    const auto ts = static_cast<std::int64_t>(std::llround(t));
    if (ts < t0 || ts >= t1) continue;
    out.push_back({ts, ch, {tx.id, n}});
  }
}

void add_dark_counts(const ReceiverConfig& rx, std::int64_t t0, std::int64_t t1, std::uint64_t seed,
                     std::vector<RawEvent>& out) {
  if (rx.p_dc <= 0.0) return;
  auto rng = make_engine(seed, {kStreamDark, static_cast<std::uint64_t>(t0)});
  const double mean = rx.p_dc / rx.gate_ps * static_cast<double>(t1 - t0);
  std::poisson_distribution<std::int64_t> count(mean);
  std::uniform_int_distribution<std::int64_t> when(t0, t1 - 1);
  for (std::uint8_t c = 0; c < 4; ++c) {
    const auto k = count(rng);
    for (std::int64_t i = 0; i < k; ++i) out.push_back({when(rng), static_cast<Detector>(c), {TruthEntry::kDark, 0}});
  }
}

double in_gate_fraction(double center, double sigma, double gate) {
  const boost::math::normal_distribution<double> z(center, sigma);
  return boost::math::cdf(z, gate / 2) - boost::math::cdf(z, -gate / 2);
}

}  // namespace

double TransmitterConfig::eta_channel() const {
  const double db = channel_loss_db ? *channel_loss_db : alpha_db_per_km * fiber_km;
  return db_to_transmittance(db);
}

SyncString TransmitterConfig::code() const {
  return generate_sync_string(frame.sync_length, frame.period_length, id, code_seed);
}

TransmitterRecord TransmitterConfig::record() const {
  return TransmitterRecord(code(), frame.interleave, PayloadSource(payload_seed ^ mix64(static_cast<std::uint64_t>(id)), probs),
                           sync_intensity);
}

void TransmitterConfig::validate() const {
  const std::string who = "transmitter " + std::to_string(id) + ": ";
  if (!(period_ps > 0)) throw ParameterError(who + "period must be positive");
  if (!(std::abs(clock_error_ppm) < 1e4)) throw ParameterError(who + "clock error out of range");
  if (!(slot_ps >= 0 && slot_ps < period_ps)) throw ParameterError(who + "slot must lie inside the period");
  if (channel_loss_db && !(*channel_loss_db >= 0)) throw ParameterError(who + "channel loss must be >= 0 dB");
  if (!(fiber_km >= 0) || !(alpha_db_per_km >= 0)) throw ParameterError(who + "fiber parameters must be >= 0");
  if (!(mu > nu) || !(nu >= 0)) throw ParameterError(who + "intensities need mu > nu >= 0");
  if (!is_probability(p_opt)) throw ParameterError(who + "p_opt must lie in [0, 1]");
  frame.validate();
  probs.validate();
}

double ReceiverConfig::eta_splitter() const { return db_to_transmittance(splitter_loss_db); }

void ReceiverConfig::validate() const {
  if (!is_probability(detector_efficiency) || !is_probability(p_dc) || !is_probability(eta_r) ||
      !is_probability(z_fraction)) {
    throw ParameterError("receiver: probabilities must lie in [0, 1]");
  }
  if (!(jitter_ps >= 0)) throw ParameterError("receiver: jitter must be >= 0");
  if (!(splitter_loss_db >= 0)) throw ParameterError("receiver: splitter loss must be >= 0 dB");
  if (!(period_ps > 0) || max_slots < 1) throw ParameterError("receiver: period and slot count must be positive");
  if (!(gate_ps > 0) || gate_ps > period_ps / max_slots * (1 + 1e-12)) {
    throw ConfigurationError("receiver: gate width must not exceed period / N_c");
  }
}

double total_transmittance(const TransmitterConfig& tx, const ReceiverConfig& rx) {
  return tx.eta_channel() * rx.eta_splitter() * rx.eta_r * rx.detector_efficiency;
}

EventRecord simulate_window(const std::vector<TransmitterConfig>& txs, const ReceiverConfig& rx,
                            std::int64_t t_begin_ps, std::int64_t t_end_ps, std::uint64_t seed) {
  if (txs.empty()) throw ParameterError("simulation needs at least one transmitter");
  if (t_begin_ps < 0 || t_end_ps < t_begin_ps) throw ParameterError("simulation window must be non-negative");
  rx.validate();
  if (static_cast<int>(txs.size()) > rx.max_slots) throw ConfigurationError("more transmitters than slots");
  for (std::size_t i = 0; i < txs.size(); ++i) {
    txs[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (txs[i].id == txs[j].id) throw ConfigurationError("duplicate transmitter id " + std::to_string(txs[i].id));
      const double d = std::fmod(std::abs(txs[i].slot_ps - txs[j].slot_ps), rx.period_ps);
      if (std::min(d, rx.period_ps - d) < rx.gate_ps) {
        throw ConfigurationError("slots of transmitters " + std::to_string(txs[j].id) + " and " +
                                 std::to_string(txs[i].id) + " overlap");
      }
    }
  }

  std::vector<RawEvent> raw;
  if (t_end_ps > t_begin_ps) {
    for (std::size_t i = 0; i < txs.size(); ++i) simulate_one(txs[i], i, rx, t_begin_ps, t_end_ps, seed, raw);
    add_dark_counts(rx, t_begin_ps, t_end_ps, seed, raw);
  }
  return finish(raw, std::llround(rx.period_ps), t_begin_ps, t_end_ps);
}

EventRecord simulate_transmission(const std::vector<TransmitterConfig>& txs, const ReceiverConfig& rx,
                                  double duration_s, std::uint64_t seed) {
  if (!(duration_s >= 0)) throw ParameterError("duration must be >= 0");
  return simulate_window(txs, rx, 0, std::llround(duration_s * 1e12), seed);
}

EventRecord apply_crosstalk(const EventRecord& in, const CrosstalkSpec& spec, const ReceiverConfig& rx,
                            std::uint64_t seed) {
  if (spec.capacity < 1 || spec.active_users < 1 || spec.active_users > spec.capacity) {
    throw ParameterError("cross-talk: need 1 <= n <= N_c");
  }
  if (!(spec.p_t >= 0 && spec.p_t < 1)) throw ParameterError("cross-talk: p_T must lie in [0, 1)");
  if (spec.active_users == 1) return in;
  if (!in.truth.empty() && in.truth.size() != in.events.size()) {
    throw ParameterError("cross-talk: truth and events differ in length");
  }

  const double rho = spec.p_t * (spec.active_users - 1) / (spec.capacity - 1);
  auto rng = make_engine(seed, {kStreamCrosstalk, static_cast<std::uint64_t>(in.t_begin_ps)});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> hop(1, kCrosstalkReach);
  std::normal_distribution<double> jitter(0.0, rx.jitter_ps > 0 ? rx.jitter_ps : 1.0);

  std::vector<RawEvent> raw;
  raw.reserve(in.events.size() + static_cast<std::size_t>(rho * static_cast<double>(in.events.size()) * 2) + 16);
  for (std::size_t i = 0; i < in.events.size(); ++i) {
    const TruthEntry truth = in.truth.empty() ? TruthEntry{0, 0} : in.truth[i];
    raw.push_back({in.events[i].t_ps, in.events[i].channel, truth});
    if (truth.source < 0 || u(rng) >= rho) continue;
    const std::int64_t d = (u(rng) < 0.5 ? -1 : 1) * hop(rng);
    double t = static_cast<double>(in.events[i].t_ps + d * in.period_ps);
    if (rx.jitter_ps > 0) t += jitter(rng);
    const auto ts = std::llround(t);
    const Basis b = u(rng) < rx.z_fraction ? Basis::Z : Basis::X;
    const std::uint8_t bit = u(rng) < 0.5 ? 1 : 0;
    if (ts < in.t_begin_ps || ts >= in.t_end_ps) continue;
    raw.push_back({ts, make_detector(b, bit), {TruthEntry::kCrosstalk, 0}});
  }
  EventRecord out = finish(raw, in.period_ps, in.t_begin_ps, in.t_end_ps);
  if (in.truth.empty()) out.truth.clear();
  return out;
}

double expected_crosstalk(int offset, const CrosstalkJitter& j, double spacing_ps, double gate_ps) {
  const double center = offset * spacing_ps + j.bias_ps;
  return in_gate_fraction(center, j.sigma_ps, gate_ps) / in_gate_fraction(0.0, j.sigma_ps, gate_ps);
}

CrosstalkJitter calibrate_crosstalk_jitter(double increase_plus, double increase_minus, double spacing_ps,
                                           double gate_ps) {
  if (!(increase_plus > 0 && increase_plus < 0.5 && increase_minus > 0 && increase_minus < 0.5)) {
    throw ParameterError("cross-talk calibration: increases must lie in (0, 0.5)");
  }
  if (!(spacing_ps > gate_ps / 2) || !(gate_ps > 0)) {
    throw ParameterError("cross-talk calibration: need spacing > gate/2 > 0");
  }
  const boost::math::normal_distribution<double> std_normal;
  CrosstalkJitter j;
  double in_gate = 1.0;
  // Near-tail closed form; the victim's own in-gate fraction is folded in by
  // fixed-point iteration (it moves the answer by well under a percent).
  for (int it = 0; it < 50; ++it) {
    const double zp = boost::math::quantile(std_normal, increase_plus * in_gate);
    const double zm = boost::math::quantile(std_normal, increase_minus * in_gate);
    CrosstalkJitter next;
    next.sigma_ps = (gate_ps - 2 * spacing_ps) / (zp + zm);
    next.bias_ps = next.sigma_ps * (zm - zp) / 2;
    const bool done = std::abs(next.sigma_ps - j.sigma_ps) < 1e-9 * next.sigma_ps;
    j = next;
    in_gate = in_gate_fraction(0.0, j.sigma_ps, gate_ps);
    if (done) break;
  }
  return j;
}

std::vector<CrosstalkPoint> measure_crosstalk(const TransmitterConfig& victim, const ReceiverConfig& rx,
                                              const std::vector<int>& offsets, double spacing_ps,
                                              double bias_ps, double duration_s, int repeats,
                                              std::uint64_t seed) {
  if (repeats < 2) throw ParameterError("cross-talk measurement needs at least 2 repeats");
  if (!(duration_s > 0)) throw ParameterError("cross-talk measurement needs a positive duration");
  const double tau = victim.effective_period_ps();
  const double center = victim.slot_ps;
  auto in_victim_gate = [&](std::int64_t t) {
    double r = std::fmod(static_cast<double>(t) - center, tau);
    if (r < 0) r += tau;
    if (r > tau / 2) r -= tau;
    return std::abs(r) <= rx.gate_ps / 2;
  };
  auto count = [&](const EventRecord& rec) {
    std::size_t c = 0;
    for (const auto& e : rec.events) c += in_victim_gate(e.t_ps);
    return c;
  };

  ReceiverConfig quiet = rx;
  quiet.p_dc = 0.0;
  quiet.max_slots = 1;
  quiet.gate_ps = std::min(rx.gate_ps, rx.period_ps / 2);

  std::vector<std::vector<double>> samples(offsets.size());
  for (int r = 0; r < repeats; ++r) {
    const std::uint64_t rseed = mix64(seed + static_cast<std::uint64_t>(r));
    const auto base = simulate_transmission({victim}, rx, duration_s, rseed);
    const std::size_t baseline = count(base);
    if (baseline == 0) throw MeasurementError("cross-talk: zero baseline counts in the victim gate");
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      TransmitterConfig agg = victim;
      agg.id = victim.id + 1;
      agg.payload_seed = mix64(victim.payload_seed + 0x9e37ULL);
      double slot = std::fmod(victim.slot_ps + offsets[k] * spacing_ps + bias_ps, tau);
      if (slot < 0) slot += tau;
      agg.slot_ps = slot;
      const auto leak = simulate_transmission({agg}, quiet, duration_s, mix64(rseed ^ (k + 1)));
      samples[k].push_back(static_cast<double>(count(leak)) / static_cast<double>(baseline));
    }
  }

  std::vector<CrosstalkPoint> out;
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    const auto& s = samples[k];
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    double ss = 0;
    for (double x : s) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(s.size() - 1));
    out.push_back({offsets[k], mean, sd / std::sqrt(static_cast<double>(s.size())), repeats});
  }
  return out;
}

}  // namespace qan
