#include "qan/keyrate.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "qan/errors.hpp"

namespace qan {

namespace {

bool probability(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

struct Click {
  std::uint64_t pulse;
  Detector channel;
};

/// Tallies clicks ordered by pulse; clicks sharing a pulse must agree.
void tally_clicks(SiftedTally& t, std::span<const Click> clicks, const TransmitterRecord& tx) {
  std::size_t i = 0;
  while (i < clicks.size()) {
    std::size_t j = i + 1;
    bool agree = true;
    while (j < clicks.size() && clicks[j].pulse == clicks[i].pulse) {
      agree = agree && clicks[j].channel == clicks[i].channel;
      ++j;
    }
    if (agree) {
      const QubitSymbol s = tx.symbol_at(clicks[i].pulse);
      const Detector d = clicks[i].channel;
      if (s.role == Role::Random && detector_basis(d) == s.basis) {
        auto& c = t.at(s.basis, s.intensity);
        ++c.detected;
        if (detector_bit(d) != s.bit) ++c.errors;
      }
    }
    i = j;
  }
}

void sort_clicks(std::vector<Click>& clicks) {
  std::stable_sort(clicks.begin(), clicks.end(), [](const Click& a, const Click& b) { return a.pulse < b.pulse; });
}

}  // namespace

std::uint64_t SiftedTally::detected(Basis b) const {
  return at(b, Intensity::Signal).detected + at(b, Intensity::Decoy).detected;
}

std::uint64_t SiftedTally::errors(Basis b) const {
  return at(b, Intensity::Signal).errors + at(b, Intensity::Decoy).errors;
}

std::uint64_t SiftedTally::pulses() const {
  std::uint64_t n = 0;
  for (const auto& row : cells)
    for (const auto& c : row) n += c.sent;
  return n;
}

double SiftedTally::e_z() const {
  const auto n = n_z();
  return n == 0 ? 0.0 : static_cast<double>(errors(Basis::Z)) / static_cast<double>(n);
}

SiftedTally& SiftedTally::operator+=(const SiftedTally& o) {
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 2; ++k) {
      cells[b][k].sent += o.cells[b][k].sent;
      cells[b][k].detected += o.cells[b][k].detected;
      cells[b][k].errors += o.cells[b][k].errors;
    }
  }
  return *this;
}

void SiftedTally::validate() const {
  for (const auto& row : cells) {
    for (const auto& c : row) {
      if (c.errors > c.detected) throw ParameterError("tally: errors exceed detections");
      if (c.detected > c.sent) throw ParameterError("tally: detections exceed sent pulses");
    }
  }
}

PulseRange pulse_range(double offset_ps, double period_ps, std::int64_t t_begin, std::int64_t t_end) {
  if (!(period_ps > 0)) throw ParameterError("pulse range: period must be positive");
  auto first_at_or_after = [&](std::int64_t t) {
    const double n = std::ceil((static_cast<double>(t) - offset_ps) / period_ps);
    return n <= 0 ? std::uint64_t{0} : static_cast<std::uint64_t>(n);
  };
  PulseRange r{first_at_or_after(t_begin), first_at_or_after(t_end)};
  r.end = std::max(r.end, r.first);
  return r;
}

void count_sent(SiftedTally& tally, const TransmitterRecord& tx, PulseRange range) {
  const std::uint64_t m = tx.spec().interleave;
  const std::uint64_t stride = m + 1;
  const auto& payload = tx.payload();
  // pulse a*(M+1) + j, j >= 1, carries payload index a*M + j - 1
  for (std::uint64_t n = range.first; n < range.end; ++n) {
    const std::uint64_t a = n / stride, j = n % stride;
    if (j == 0) continue;
    const QubitSymbol s = payload(a * m + j - 1);
    ++tally.at(s.basis, s.intensity).sent;
  }
}

SiftedTally sift(std::span<const DetectionEvent> events, const SlotAssignment& slots, int slot,
                 std::int64_t start_period, const TransmitterRecord& tx, PulseRange range) {
  if (slot < 0 || static_cast<std::size_t>(slot) >= slots.clusters.size()) throw ParameterError("sift: unknown slot");
  if (slots.label.size() != events.size()) throw ParameterError("sift: assignment does not match events");
  const auto& cluster = slots.clusters[static_cast<std::size_t>(slot)];
  std::vector<Click> clicks;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (slots.label[i] != slot) continue;
    const std::int64_t n = period_index(events[i].t_ps, cluster, slots.period_ps) - start_period;
    if (n < 0) continue;
    const auto p = static_cast<std::uint64_t>(n);
    if (p < range.first || p >= range.end) continue;
    clicks.push_back({p, events[i].channel});
  }
  sort_clicks(clicks);
  SiftedTally t;
  count_sent(t, tx, range);
  tally_clicks(t, clicks, tx);
  return t;
}

SiftedTally sift(std::span<const DetectionEvent> events, const SlotAssignment& slots, int slot,
                 const SlotReport& report, const TransmitterRecord& tx, PulseRange range) {
  if (!report.id || !report.failure.empty()) {
    throw IdentificationError(report.ambiguous ? IdentificationError::Kind::Ambiguous
                                               : IdentificationError::Kind::BelowThreshold,
                              "sift: slot " + std::to_string(slot) + " is not identified" +
                                  (report.failure.empty() ? "" : " (" + report.failure + ")"),
                              report.id.value_or(IdentificationResult{}));
  }
  return sift(events, slots, slot, report.id->start_period, tx, range);
}

SiftedTally sift_ground_truth(std::span<const DetectionEvent> events, std::span<const TruthEntry> truth,
                              int transmitter_id, const TransmitterRecord& tx, PulseRange range) {
  if (truth.size() != events.size()) throw ParameterError("sift: ground truth does not match events");
  std::vector<Click> clicks;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (truth[i].source != transmitter_id) continue;
    const auto p = truth[i].index;
    if (p < range.first || p >= range.end) continue;
    clicks.push_back({p, events[i].channel});
  }
  sort_clicks(clicks);
  SiftedTally t;
  count_sent(t, tx, range);
  tally_clicks(t, clicks, tx);
  return t;
}

double binary_entropy(double x) {
  if (!probability(x)) throw ParameterError("binary entropy: argument outside [0, 1]");
  if (x == 0.0 || x == 1.0) return 0.0;
  return -x * std::log2(x) - (1 - x) * std::log2(1 - x);
}

double lambda_ec(double n_z, double e_z, double f_e) {
  if (!(n_z >= 0)) throw ParameterError("lambda_ec: n_z must be non-negative");
  if (!(f_e >= 1)) throw ParameterError("lambda_ec: f_e must be >= 1");
  return n_z * f_e * binary_entropy(e_z);
}

double security_constant(double eps_sec, double eps_cor) {
  if (!(eps_sec > 0 && eps_sec < 1) || !(eps_cor > 0 && eps_cor < 1)) {
    throw ParameterError("security parameters must lie in (0, 1)");
  }
  return 6 * std::log2(19 / eps_sec) + std::log2(2 / eps_cor);
}

DecoyBounds decoy_bounds(const SiftedTally& tally, const DecoyParams& p) {
  const double mu = p.mu, nu = p.nu;
  if (!(mu > nu && nu >= 0)) throw ParameterError("decoy bounds: need mu > nu >= 0");
  if (!(p.p_mu > 0 && p.p_nu > 0) || std::abs(p.p_mu + p.p_nu - 1) > 1e-9) {
    throw ParameterError("decoy bounds: intensity probabilities must be positive and sum to 1");
  }
  if (!(p.eps_sec > 0 && p.eps_sec < 1)) throw ParameterError("decoy bounds: eps_sec must lie in (0, 1)");
  tally.validate();

  const double ln_budget = std::log(19 / p.eps_sec);
  auto dev = [&](double n) { return p.asymptotic ? 0.0 : std::sqrt(n / 2 * ln_budget); };
  const double tau0 = p.p_mu * std::exp(-mu) + p.p_nu * std::exp(-nu);
  const double tau1 = p.p_mu * std::exp(-mu) * mu + p.p_nu * std::exp(-nu) * nu;

  // Hoeffding intervals on the counts that each intensity would have produced
  // had it been sent every time: e^k/p_k (n_k -+ delta).
  struct Scaled {
    double lo_mu, hi_mu, lo_nu, hi_nu;
  };
  auto scaled = [&](double n_mu, double n_nu) {
    const double d = dev(n_mu + n_nu);
    const double a = std::exp(mu) / p.p_mu, b = std::exp(nu) / p.p_nu;
    return Scaled{a * (n_mu - d), a * (n_mu + d), b * (n_nu - d), b * (n_nu + d)};
  };
  auto count = [&](Basis b, Intensity k, bool errors) {
    const auto& c = tally.at(b, k);
    return static_cast<double>(errors ? c.errors : c.detected);
  };

  auto single_photon = [&](const Scaled& n, double s0u) {
    return tau1 * mu / (nu * (mu - nu)) *
           (n.lo_nu - nu * nu / (mu * mu) * n.hi_mu - (mu * mu - nu * nu) / (mu * mu) * s0u / tau0);
  };

  DecoyBounds out;
  const auto nz = scaled(count(Basis::Z, Intensity::Signal, false), count(Basis::Z, Intensity::Decoy, false));
  const auto mz = scaled(count(Basis::Z, Intensity::Signal, true), count(Basis::Z, Intensity::Decoy, true));
  out.s0_lower = std::max(0.0, tau0 * (mu * nz.lo_nu - nu * nz.hi_mu) / (mu - nu));
  out.s0_upper = 2 * tau0 * mz.hi_nu;
  out.s1_lower = single_photon(nz, out.s0_upper);

  const auto nx = scaled(count(Basis::X, Intensity::Signal, false), count(Basis::X, Intensity::Decoy, false));
  const auto mx = scaled(count(Basis::X, Intensity::Signal, true), count(Basis::X, Intensity::Decoy, true));
  const double sx0u = 2 * tau0 * mx.hi_nu;
  out.x_s1_lower = single_photon(nx, sx0u);
  out.x_v1_upper = tau1 * (mx.hi_mu - mx.lo_nu) / (mu - nu);

  out.valid = out.s1_lower > 0 && out.x_s1_lower > 0;
  if (!out.valid) return out;

  const double b = std::clamp(out.x_v1_upper / out.x_s1_lower, 0.0, 1.0);
  double gamma = 0.0;
  if (!p.asymptotic && b > 0 && b < 1) {
    const double c = out.s1_lower, d = out.x_s1_lower;
    const double inner = (c + d) / (c * d * (1 - b) * b) * (19.0 * 19.0) / (p.eps_sec * p.eps_sec);
    gamma = std::sqrt((c + d) * (1 - b) * b / (c * d * std::log(2.0)) * std::log2(inner));
  }
  out.phase_error = std::min(0.5, b + gamma);
  return out;
}

void KeyRateInputs::validate() const {
  if (!(eps_cor > 0 && eps_cor < 1)) throw ParameterError("key rate: eps_cor must lie in (0, 1)");
  if (!(f_e >= 1)) throw ParameterError("key rate: f_e must be >= 1");
  if (!(frequency_hz > 0)) throw ParameterError("key rate: frequency must be positive");
  if (!(pulses >= 0)) throw ParameterError("key rate: pulse count must be non-negative");
  if (!(duty > 0 && duty <= 1)) throw ParameterError("key rate: duty ratio must lie in (0, 1]");
}

KeyRateResult secure_key_rate(const KeyRateInputs& in) {
  in.validate();
  KeyRateResult r;
  r.bounds = decoy_bounds(in.tally, in.decoy);
  r.n_z = static_cast<double>(in.tally.n_z());
  r.e_z = in.tally.e_z();
  r.lambda_ec = lambda_ec(r.n_z, r.e_z, in.f_e);
  const double n = in.pulses > 0 ? in.pulses : static_cast<double>(in.tally.pulses());
  if (!r.bounds.valid || n <= 0) return r;
  const double ell = r.bounds.s0_lower + r.bounds.s1_lower * (1 - binary_entropy(r.bounds.phase_error)) -
                     r.lambda_ec - security_constant(in.decoy.eps_sec, in.eps_cor);
  r.secret_bits = std::max(0.0, ell);
  r.rate_bps = r.secret_bits * in.duty * in.frequency_hz / n;
  return r;
}

void write_tally_csv(std::ostream& os, const SiftedTally& t) {
  os << "basis,intensity,sent,detected,errors\n";
  for (Basis b : {Basis::Z, Basis::X}) {
    for (Intensity k : {Intensity::Signal, Intensity::Decoy}) {
      const auto& c = t.at(b, k);
      os << (b == Basis::Z ? "Z" : "X") << ',' << (k == Intensity::Signal ? "signal" : "decoy") << ',' << c.sent
         << ',' << c.detected << ',' << c.errors << '\n';
    }
  }
}

SiftedTally read_tally_csv(std::istream& is) {
  SiftedTally t;
  std::array<std::array<bool, 2>, 2> seen{};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  auto fail = [&](const std::string& why) {
    throw SchemaError("tally csv line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      if (line != "basis,intensity,sent,detected,errors") fail("expected header basis,intensity,sent,detected,errors");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) fail("expected 5 fields");
    Basis b;
    if (f[0] == "Z" || f[0] == "z") b = Basis::Z;
    else if (f[0] == "X" || f[0] == "x") b = Basis::X;
    else fail("unknown basis '" + f[0] + "'");
    Intensity k;
    if (f[1] == "signal" || f[1] == "mu") k = Intensity::Signal;
    else if (f[1] == "decoy" || f[1] == "nu") k = Intensity::Decoy;
    else fail("unknown intensity '" + f[1] + "'");
    auto number = [&](const std::string& s) -> std::uint64_t {
      if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) fail("not a count: '" + s + "'");
      try {
        return std::stoull(s);
      } catch (const std::out_of_range&) {
        fail("count out of range: '" + s + "'");
      }
      return 0;
    };
    auto& c = t.at(b, k);
    if (seen[static_cast<int>(b)][static_cast<int>(k)]) fail("duplicate row");
    seen[static_cast<int>(b)][static_cast<int>(k)] = true;
    c = {number(f[2]), number(f[3]), number(f[4])};
    if (c.errors > c.detected || c.detected > c.sent) fail("need errors <= detected <= sent");
  }
  if (!header) throw SchemaError("tally csv: missing header");
  return t;
}

}  // namespace qan
