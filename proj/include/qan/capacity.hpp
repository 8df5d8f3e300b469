#pragma once

// Analytic network capacity: cross-talk gain/QBER model, expected tallies,
// per-user secure rate, and the timing-jitter design rule.

#include <iosfwd>
#include <vector>

#include "qan/keyrate.hpp"

namespace qan {

struct CapacityParams {
  int capacity = 64;       // N_c
  int active_users = 64;   // n
  double p_dc = 6e-8;
  double p_opt = 0.01;
  double p_t = 0.0098;
  double alpha_db_per_km = 0.2;
  double fiber_km = 20.0;
  double splitter_loss_db = 19.5;
  double eta_r = 0.388;
  double p_z = 0.9;        // basis choice, both ends
  DecoyParams decoy;
  double n_z = 1e7;        // sifted Z block
  double f_e = 1.16;
  double eps_cor = 1e-15;
  double laser_hz = 50e6;
  double slot_width_s = 1e-9;
  std::size_t interleave = 1;  // M

  double eta() const;
  double total_loss_db() const;
  /// Per-user pulse rate: one slot of width slot_width_s per user per period.
  double repetition_hz() const;
  void validate() const;
};

struct GainQber {
  double gain = 0.0;  // Q_z,k
  double qber = 0.0;  // E_z,k
};

/// Q = k eta (1 + p_T (n-1)/(N_c-1)) + p_dc,  E = (k eta (p_opt + p_T (n-1)/(2(N_c-1))) + p_dc/2) / Q.
GainQber gain_qber(double k, const CapacityParams& p);

/// (P_mu E_mu Q_mu + P_nu E_nu Q_nu) / (P_mu Q_mu + P_nu Q_nu).
double weighted_qber(const CapacityParams& p);

/// Expected counts for a block of n_z sifted Z detections, rounded to integers.
SiftedTally expected_tally(const CapacityParams& p);

struct CapacityPoint {
  int users = 0;
  double distance_km = 0.0;
  double total_loss_db = 0.0;
  double e_z = 0.0;
  double rate_bps = 0.0;
  double repetition_hz = 0.0;
  KeyRateResult detail;
};

/// Per-user secure rate with n active users at the given fiber length.
CapacityPoint simulate_capacity(int users, double distance_km, CapacityParams p);

std::vector<CapacityPoint> capacity_sweep(const CapacityParams& p, const std::vector<int>& users,
                                          const std::vector<double>& distances_km);

/// Columns n_users,distance_km,total_loss_dB,e_z,R_bps.
void write_capacity_csv(std::ostream& os, const std::vector<CapacityPoint>& points);

/// Loss of a 1xN splitter: ideal 10 log10(N) plus an excess fitted to 19.5 dB at 1x64.
double splitter_loss_db(int ports, double excess_db = 1.44);

/// p_opt for which the single-user model yields the target Z-basis QBER.
double calibrate_misalignment(double target_qber, double eta, const DecoyParams& decoy, double p_dc);

struct JitterSpec {
  double frequency_hz = 0.0;
  double fwhm_s = 0.0;
  double sigma_s() const;
};

/// (1 - P) / 2 with P = erf((1/(2f)) / (sigma sqrt 2)).
double jitter_qber(const JitterSpec& spec);

/// FWHM at which jitter_qber equals e_max.
double max_jitter(double frequency_hz, double e_max);

}  // namespace qan
