#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "qan/channel.hpp"
#include "qan/errors.hpp"
#include "qan/keyrate.hpp"
#include "qan/sync.hpp"

using namespace qan;

namespace {

// Rows (sent, detected, errors) in the order Z signal, Z decoy, X signal, X decoy,
// produced by tests/oracles/keyrate_oracle.py.
SiftedTally rows(std::array<std::array<std::uint64_t, 3>, 4> r) {
  SiftedTally t;
  t.at(Basis::Z, Intensity::Signal) = {r[0][0], r[0][1], r[0][2]};
  t.at(Basis::Z, Intensity::Decoy) = {r[1][0], r[1][1], r[1][2]};
  t.at(Basis::X, Intensity::Signal) = {r[2][0], r[2][1], r[2][2]};
  t.at(Basis::X, Intensity::Decoy) = {r[3][0], r[3][1], r[3][2]};
  return t;
}

const SiftedTally kUser1 = rows({{{814873807, 8990215, 62054},
                                  {366102725, 1009785, 6977},
                                  {90541534, 110990, 766},
                                  {40678081, 12466, 86}}});
const SiftedTally kUser2 = rows({{{80870547, 899021, 8183},
                                  {36333144, 100979, 920},
                                  {8985616, 11099, 101},
                                  {4037016, 1247, 11}}});
const SiftedTally kNoiseless = rows({{{192098889167, 899022801, 0},
                                      {86305298032, 100977199, 0},
                                      {21344321019, 11099047, 0},
                                      {9589477559, 1246632, 0}}});

KeyRateInputs inputs(const SiftedTally& t) {
  KeyRateInputs in;
  in.tally = t;
  return in;
}

TransmitterConfig user(int id, double slot_ps, double loss_db, std::size_t L, std::size_t L1) {
  TransmitterConfig t;
  t.id = id;
  t.slot_ps = slot_ps;
  t.channel_loss_db = loss_db;
  t.frame = {L, L1, 1};
  t.code_seed = 5;
  t.payload_seed = 50 + static_cast<std::uint64_t>(id);
  return t;
}

}  // namespace

TEST_CASE("binary entropy") {
  CHECK(binary_entropy(0) == 0);
  CHECK(binary_entropy(1) == 0);
  CHECK(binary_entropy(0.5) == 1);
  CHECK(binary_entropy(0.0069) == doctest::Approx(0.0594565698304418).epsilon(1e-13));
  CHECK(binary_entropy(0.11) == doctest::Approx(binary_entropy(0.89)).epsilon(1e-15));
  CHECK_THROWS_AS(binary_entropy(-1e-9), ParameterError);
  CHECK_THROWS_AS(binary_entropy(1.5), ParameterError);
  CHECK_THROWS_AS(binary_entropy(std::nan("")), ParameterError);
}

TEST_CASE("lambda_ec") {
  CHECK(lambda_ec(1e7, 0, 1.16) == 0);
  CHECK(lambda_ec(1e7, 0.0069, 1.16) == doctest::Approx(689696.210033125).epsilon(1e-12));
  CHECK(lambda_ec(12345, 0.5, 1) == 12345);
  CHECK_THROWS_AS(lambda_ec(1e7, 0.01, 0.9), ParameterError);
}

TEST_CASE("security constant and duty ratio") {
  const double c = security_constant(1e-9, 1e-15);
  CHECK(c == doctest::Approx(255.70060362789).epsilon(1e-12));
  CHECK(std::abs(c - 256) <= 1);
  CHECK(duty_ratio(1) == 0.5);
  CHECK(duty_ratio(3) == 0.75);
  CHECK_THROWS_AS(security_constant(0, 1e-15), ParameterError);
}

TEST_CASE("finite-key rate matches the high-precision evaluation, n_z = 1e7") {
  const auto r = secure_key_rate(inputs(kUser1));
  REQUIRE(r.bounds.valid);
  CHECK(r.bounds.s0_lower == 0);
  CHECK(r.bounds.s0_upper == doctest::Approx(39514.4264998387).epsilon(1e-10));
  CHECK(r.bounds.s1_lower == doctest::Approx(5723839.08140439).epsilon(1e-10));
  CHECK(r.bounds.x_s1_lower == doctest::Approx(58609.1140729953).epsilon(1e-10));
  CHECK(r.bounds.x_v1_upper == doctest::Approx(1380.61797354542).epsilon(1e-10));
  CHECK(r.bounds.phase_error == doctest::Approx(0.0293116436092637).epsilon(1e-10));
  CHECK(r.lambda_ec == doctest::Approx(689954.002689591).epsilon(1e-10));
  CHECK(r.secret_bits == doctest::Approx(3940788.51066582).epsilon(1e-10));
  CHECK(r.rate_bps == doctest::Approx(75080.0198521276).epsilon(1e-10));
  CHECK(kUser1.pulses() == 1312196147u);
}

TEST_CASE("finite-key rate matches the high-precision evaluation, n_z = 1e6") {
  const auto r = secure_key_rate(inputs(kUser2));
  CHECK(r.bounds.s1_lower == doctest::Approx(541348.51032953).epsilon(1e-10));
  CHECK(r.bounds.phase_error == doctest::Approx(0.149548580918995).epsilon(1e-10));
  CHECK(r.lambda_ec == doctest::Approx(86751.9443877666).epsilon(1e-10));
  CHECK(r.secret_bits == doctest::Approx(124816.898120197).epsilon(1e-10));
  CHECK(r.rate_bps == doctest::Approx(23961.533898219).epsilon(1e-10));
}

TEST_CASE("noiseless asymptote of the single-photon bound") {
  DecoyParams p;
  p.asymptotic = true;
  const auto a = decoy_bounds(kNoiseless, p);
  const double n_z_sent = static_cast<double>(kNoiseless.at(Basis::Z, Intensity::Signal).sent +
                                              kNoiseless.at(Basis::Z, Intensity::Decoy).sent);
  CHECK(a.s1_lower == doctest::Approx(596834297.023292).epsilon(1e-10));
  CHECK(a.phase_error == 0);
  const double eta = 0.01;
  const double tau1 = 0.69 * 0.52 * std::exp(-0.52) + 0.31 * 0.13 * std::exp(-0.13);
  // a lower bound on the true single-photon count, close to the signal-intensity share
  CHECK(a.s1_lower / n_z_sent < tau1 * eta);
  CHECK(std::abs(a.s1_lower / n_z_sent / (0.69 * 0.52 * std::exp(-0.52) * eta) - 1) < 0.01);

  const auto f = decoy_bounds(kNoiseless, DecoyParams{});
  CHECK(f.s1_lower == doctest::Approx(595772647.776155).epsilon(1e-10));
  CHECK(std::abs(f.s1_lower / a.s1_lower - 1) <= 0.05);
  CHECK(std::abs(f.x_s1_lower / a.x_s1_lower - 1) <= 0.05);
}

TEST_CASE("zero tally gives zero rate") {
  const auto r = secure_key_rate(inputs(SiftedTally{}));
  CHECK(r.secret_bits == 0);
  CHECK(r.rate_bps == 0);
  CHECK_FALSE(r.bounds.valid);
}

TEST_CASE("rate is non-increasing in e_z and in eps_sec tightening") {
  double last = std::numeric_limits<double>::infinity();
  for (std::uint64_t extra = 0; extra <= 1500000; extra += 50000) {
    auto t = kUser1;
    t.at(Basis::Z, Intensity::Signal).errors += extra;
    const double r = secure_key_rate(inputs(t)).rate_bps;
    CHECK(r <= last);
    last = r;
  }
  CHECK(last == 0);
  last = std::numeric_limits<double>::infinity();
  for (double eps = 1e-3; eps >= 1e-30; eps /= 100) {
    auto in = inputs(kUser2);
    in.decoy.eps_sec = eps;
    const double r = secure_key_rate(in).rate_bps;
    CHECK(r <= last);
    last = r;
  }
}

TEST_CASE("rate scales exactly with frequency and pulse count") {
  auto in = inputs(kUser1);
  const auto base = secure_key_rate(in);
  in.frequency_hz *= 2;
  const auto twice = secure_key_rate(in);
  CHECK(twice.secret_bits == base.secret_bits);
  CHECK(twice.rate_bps == doctest::Approx(2 * base.rate_bps).epsilon(1e-15));
  in.pulses = 2 * static_cast<double>(kUser1.pulses());
  CHECK(secure_key_rate(in).rate_bps == doctest::Approx(base.rate_bps).epsilon(1e-15));
}

TEST_CASE("phase error bound is never below the observed X error rate") {
  std::mt19937_64 g(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::uniform_real_distribution<double> eta(1e-4, 0.2), err(0, 0.08);
    const double e = eta(g), q = err(g);
    SiftedTally t;
    const double n = 1e9;
    for (Basis b : {Basis::Z, Basis::X}) {
      const double pb = b == Basis::Z ? 0.9 : 0.1;
      for (Intensity k : {Intensity::Signal, Intensity::Decoy}) {
        const double mu = k == Intensity::Signal ? 0.52 : 0.13, pk = k == Intensity::Signal ? 0.69 : 0.31;
        const double det = std::round(n * pk * pb * pb * (1 - std::exp(-mu * e)));
        t.at(b, k) = {static_cast<std::uint64_t>(n * pk * pb), static_cast<std::uint64_t>(det),
                      static_cast<std::uint64_t>(std::round(det * q))};
      }
    }
    const auto bd = decoy_bounds(t, DecoyParams{});
    if (!bd.valid) continue;
    const double observed = static_cast<double>(t.errors(Basis::X)) / static_cast<double>(t.detected(Basis::X));
    CHECK(bd.phase_error >= observed);
  }
}

TEST_CASE("decoy bounds reject bad parameters") {
  DecoyParams p;
  p.nu = 0.6;
  CHECK_THROWS_AS(decoy_bounds(kUser1, p), ParameterError);
  p = {};
  p.p_mu = 0.5;
  CHECK_THROWS_AS(decoy_bounds(kUser1, p), ParameterError);
  auto bad = kUser1;
  bad.at(Basis::X, Intensity::Decoy).errors = bad.at(Basis::X, Intensity::Decoy).detected + 1;
  CHECK_THROWS_AS(decoy_bounds(bad, DecoyParams{}), ParameterError);
}

TEST_CASE("tally csv round trip") {
  std::stringstream a;
  write_tally_csv(a, kUser1);
  std::stringstream in("# exported tally\n" + a.str() + "# end\n");
  const auto t = read_tally_csv(in);
  CHECK(t == kUser1);
  std::stringstream b;
  write_tally_csv(b, t);
  CHECK(b.str() == a.str());

  std::stringstream zero("basis,intensity,sent,detected,errors\n");
  CHECK(secure_key_rate(inputs(read_tally_csv(zero))).rate_bps == 0);
}

TEST_CASE("tally csv schema errors carry the line number") {
  auto fails_at = [](const std::string& text, const std::string& where) {
    std::stringstream s(text);
    try {
      read_tally_csv(s);
    } catch (const SchemaError& e) {
      return std::string(e.what()).find(where) != std::string::npos;
    }
    return false;
  };
  const std::string h = "basis,intensity,sent,detected,errors\n";
  CHECK(fails_at("", "missing header"));
  CHECK(fails_at("basis,sent\n", "line 1"));
  CHECK(fails_at(h + "Z,signal,10,5\n", "line 2"));
  CHECK(fails_at(h + "# c\nY,signal,10,5,1\n", "line 3"));
  CHECK(fails_at(h + "Z,signal,10,11,1\n", "line 2"));
  CHECK(fails_at(h + "Z,signal,10,5,-1\n", "line 2"));
  CHECK(fails_at(h + "Z,decoy,10,5,1\nZ,nu,10,5,1\n", "duplicate"));
}

TEST_CASE("pulse range") {
  const auto r = pulse_range(4000, 20000, 0, 20000 * 10);
  CHECK(r.first == 0);
  CHECK(r.end == 10);
  const auto s = pulse_range(4000, 20000, 4001, 44000);
  CHECK(s.first == 1);
  CHECK(s.end == 2);
  CHECK(pulse_range(1e9, 20000, 0, 1000).end == 0);
}

TEST_CASE("sift: noiseless full detection in Z gives n_z = M L per frame and no errors") {
  ReceiverConfig rx;
  rx.p_dc = 0;
  rx.jitter_ps = 0;
  rx.eta_r = 1;
  rx.z_fraction = 1;
  auto tx = user(1, 4000, 0, 1000, 100);
  tx.mu = 60;
  tx.nu = 50;
  tx.p_opt = 0;
  tx.probs.z = 1;
  tx.probs.x = 0;
  const auto rec = simulate_transmission({tx}, rx, 2000 * 20000e-12, 1);
  const auto record = tx.record();
  const auto range = pulse_range(tx.slot_ps, tx.period_ps, rec.t_begin_ps, rec.t_end_ps);
  REQUIRE(range.end - range.first == 2000);
  const auto truth = sift_ground_truth(rec.events, rec.truth, 1, record, range);
  CHECK(truth.n_z() == 1000);
  CHECK(truth.e_z() == 0);
  CHECK(truth.pulses() == 1000);

  ClockEstimate clock;
  clock.period_ps = 20000;
  const auto slots = demarcate_slots(rec.events, clock, rx.gate_ps, rx.max_slots);
  REQUIRE(slots.clusters.size() == 1);
  CHECK(sift(rec.events, slots, 0, 0, record, range) == truth);
}

TEST_CASE("sift via identification equals sift via ground truth") {
  ReceiverConfig rx;
  rx.p_dc = 0;
  auto t1 = user(1, 4000, 12.164, 100000, 1000);
  auto t2 = user(2, 9000, 12.131, 100000, 1000);
  t1.start_period = 1234;
  t2.start_period = 77;
  t1.clock_error_ppm = t2.clock_error_ppm = -2;
  const auto rec = simulate_transmission({t1, t2}, rx, 0.02, 21);
  const std::vector<SyncString> codes = {t1.code(), t2.code()};
  SyncOptions opt;
  opt.frame = t1.frame;
  const auto rep = recover(rec, codes, opt);
  REQUIRE(rep.reports.size() == 2);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& r = rep.reports[s];
    REQUIRE(r.failure.empty());
    const auto& tx = r.id->transmitter_id == 1 ? t1 : t2;
    const auto record = tx.record();
    const auto range = pulse_range(r.id->offset_ps, rep.clock.period_ps, rec.t_begin_ps, rec.t_end_ps);
    const auto a = sift(rec.events, rep.slots, static_cast<int>(s), r, record, range);
    const auto b = sift_ground_truth(rec.events, rec.truth, tx.id, record, range);
    CHECK(a == b);
    CHECK(a.n_z() > 1000);
  }
}

TEST_CASE("sift refuses an unidentified slot") {
  SlotAssignment slots;
  slots.period_ps = 20000;
  slots.clusters.push_back({});
  SlotReport failed;
  failed.failure = "below threshold";
  const auto tx = user(1, 0, 0, 1000, 100).record();
  CHECK_THROWS_AS(sift({}, slots, 0, failed, tx, {0, 10}), IdentificationError);
  CHECK_THROWS_AS(sift({}, slots, 0, SlotReport{}, tx, {0, 10}), IdentificationError);
}

TEST_CASE("sift statistics: basis match fraction and calibrated QBER") {
  ReceiverConfig rx;
  auto tx = user(1, 4000, 12.164, 100000, 1000);
  tx.p_opt = 0.0069;
  const auto rec = simulate_transmission({tx}, rx, 0.1, 33);
  const auto record = tx.record();
  const auto range = pulse_range(tx.slot_ps, tx.period_ps, rec.t_begin_ps, rec.t_end_ps);
  const auto t = sift_ground_truth(rec.events, rec.truth, 1, record, range);

  double random_clicks = 0;
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    if (rec.truth[i].source == 1 && record.symbol_at(rec.truth[i].index).role == Role::Random) random_clicks += 1;
  }
  const double sifted = static_cast<double>(t.detected(Basis::Z) + t.detected(Basis::X));
  const double p = 0.9 * 0.9 + 0.1 * 0.1;
  CHECK(std::abs(sifted / random_clicks - p) <= 3 * std::sqrt(p * (1 - p) / random_clicks));

  const double n = static_cast<double>(t.n_z());
  CHECK(std::abs(t.e_z() - 0.0069) <= 4 * std::sqrt(0.0069 * (1 - 0.0069) / n));
}
