#include "qan/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <boost/math/special_functions/erf.hpp>

#include "qan/errors.hpp"

namespace qan {

namespace {

bool probability(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

double crosstalk_factor(const CapacityParams& p) {
  if (p.capacity < 2) return 0.0;
  return p.p_t / (p.capacity - 1) * (p.active_users - 1);
}

double random_pulses(const CapacityParams& p) {
  const auto qm = gain_qber(p.decoy.mu, p);
  const auto qn = gain_qber(p.decoy.nu, p);
  return p.n_z / (p.p_z * p.p_z * (p.decoy.p_mu * qm.gain + p.decoy.p_nu * qn.gain));
}

}  // namespace

double CapacityParams::eta() const {
  return std::pow(10.0, -(alpha_db_per_km * fiber_km + splitter_loss_db) / 10) * eta_r;
}

double CapacityParams::total_loss_db() const { return -10 * std::log10(eta()); }

double CapacityParams::repetition_hz() const {
  return std::min(laser_hz, 1.0 / (static_cast<double>(capacity) * slot_width_s));
}

void CapacityParams::validate() const {
  if (capacity < 1 || active_users < 1 || active_users > capacity) {
    throw ParameterError("capacity: need 1 <= n <= N_c");
  }
  if (!probability(p_dc) || !probability(p_opt) || !probability(p_t) || !probability(p_z)) {
    throw ParameterError("capacity: probabilities must lie in [0, 1]");
  }
  if (!(eta_r > 0 && eta_r <= 1)) throw ParameterError("capacity: eta_r must lie in (0, 1]");
  if (!(alpha_db_per_km >= 0) || !(fiber_km >= 0) || !(splitter_loss_db >= 0)) {
    throw ParameterError("capacity: losses must be non-negative");
  }
  if (!(n_z > 0)) throw ParameterError("capacity: block size must be positive");
  if (!(laser_hz > 0) || !(slot_width_s > 0)) throw ParameterError("capacity: rates must be positive");
  if (interleave < 1) throw ParameterError("capacity: interleave M must be >= 1");
}

GainQber gain_qber(double k, const CapacityParams& p) {
  p.validate();
  const double eta = p.eta();
  const double ct = crosstalk_factor(p);
  GainQber g;
  g.gain = k * eta * (1 + ct) + p.p_dc;
  if (!(g.gain > 0)) throw ParameterError("gain_qber: zero gain");
  g.qber = (k * eta * (p.p_opt + ct / 2) + p.p_dc / 2) / g.gain;
  return g;
}

double weighted_qber(const CapacityParams& p) {
  const auto m = gain_qber(p.decoy.mu, p);
  const auto n = gain_qber(p.decoy.nu, p);
  const double den = p.decoy.p_mu * m.gain + p.decoy.p_nu * n.gain;
  if (!(den > 0)) throw ParameterError("weighted_qber: zero total gain");
  return (p.decoy.p_mu * m.qber * m.gain + p.decoy.p_nu * n.qber * n.gain) / den;
}

SiftedTally expected_tally(const CapacityParams& p) {
  const double n = random_pulses(p);
  SiftedTally t;
  for (Basis b : {Basis::Z, Basis::X}) {
    const double pb = b == Basis::Z ? p.p_z : 1 - p.p_z;
    for (Intensity k : {Intensity::Signal, Intensity::Decoy}) {
      const bool sig = k == Intensity::Signal;
      const auto g = gain_qber(sig ? p.decoy.mu : p.decoy.nu, p);
      const double pk = sig ? p.decoy.p_mu : p.decoy.p_nu;
      const double det = n * pk * pb * pb * g.gain;
      t.at(b, k) = {static_cast<std::uint64_t>(std::llround(n * pk * pb)),
                    static_cast<std::uint64_t>(std::llround(det)),
                    static_cast<std::uint64_t>(std::llround(det * g.qber))};
    }
  }
  return t;
}

CapacityPoint simulate_capacity(int users, double distance_km, CapacityParams p) {
  p.active_users = users;
  p.fiber_km = distance_km;
  p.validate();
  CapacityPoint pt;
  pt.users = users;
  pt.distance_km = distance_km;
  pt.total_loss_db = p.total_loss_db();
  pt.e_z = weighted_qber(p);
  pt.repetition_hz = p.repetition_hz();

  KeyRateInputs in;
  in.tally = expected_tally(p);
  in.decoy = p.decoy;
  in.eps_cor = p.eps_cor;
  in.f_e = p.f_e;
  in.frequency_hz = pt.repetition_hz;
  in.pulses = random_pulses(p);
  in.duty = duty_ratio(p.interleave);
  pt.detail = secure_key_rate(in);
  pt.rate_bps = pt.detail.rate_bps;
  return pt;
}

std::vector<CapacityPoint> capacity_sweep(const CapacityParams& p, const std::vector<int>& users,
                                          const std::vector<double>& distances_km) {
  std::vector<CapacityPoint> out;
  for (int n : users)
    for (double d : distances_km) out.push_back(simulate_capacity(n, d, p));
  return out;
}

void write_capacity_csv(std::ostream& os, const std::vector<CapacityPoint>& points) {
  os << "n_users,distance_km,total_loss_dB,e_z,R_bps\n";
  const auto precision = os.precision(10);
  for (const auto& pt : points) {
    os << pt.users << ',' << pt.distance_km << ',' << pt.total_loss_db << ',' << pt.e_z << ',' << pt.rate_bps
       << '\n';
  }
  os.precision(precision);
}

double splitter_loss_db(int ports, double excess_db) {
  if (ports < 1) throw ParameterError("splitter: need at least one port");
  if (!(excess_db >= 0)) throw ParameterError("splitter: excess loss must be >= 0");
  return 10 * std::log10(static_cast<double>(ports)) + excess_db;
}

double calibrate_misalignment(double target_qber, double eta, const DecoyParams& d, double p_dc) {
  if (!(target_qber >= 0 && target_qber < 0.5)) throw ParameterError("calibration: QBER must lie in [0, 0.5)");
  if (!(eta > 0 && eta <= 1)) throw ParameterError("calibration: eta must lie in (0, 1]");
  // e = (sum P_k k eta p_opt + p_dc/2) / sum P_k (k eta + p_dc) is linear in p_opt
  const double signal = eta * (d.p_mu * d.mu + d.p_nu * d.nu);
  const double total = signal + p_dc;
  const double p_opt = (target_qber * total - p_dc / 2) / signal;
  if (!(p_opt >= 0 && p_opt <= 1)) throw ParameterError("calibration: target QBER unreachable with p_opt in [0, 1]");
  return p_opt;
}

double JitterSpec::sigma_s() const { return fwhm_s / (2 * std::sqrt(2 * std::numbers::ln2)); }

double jitter_qber(const JitterSpec& s) {
  if (!(s.frequency_hz > 0) || !(s.fwhm_s >= 0)) throw ParameterError("jitter: need f > 0 and FWHM >= 0");
  if (s.fwhm_s == 0) return 0.0;
  const double p = std::erf(1 / (2 * s.frequency_hz) / (s.sigma_s() * std::numbers::sqrt2));
  return (1 - p) / 2;
}

double max_jitter(double frequency_hz, double e_max) {
  if (!(frequency_hz > 0)) throw ParameterError("jitter: f must be positive");
  if (!(e_max > 0 && e_max < 0.5)) throw ParameterError("jitter: E_max must lie in (0, 0.5)");
  const double x = boost::math::erf_inv(1 - 2 * e_max);
  const double sigma = 1 / (2 * frequency_hz * std::numbers::sqrt2 * x);
  return sigma * 2 * std::sqrt(2 * std::numbers::ln2);
}

}  // namespace qan
