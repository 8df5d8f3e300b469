#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "qan/channel.hpp"
#include "qan/errors.hpp"
#include "qan/event_io.hpp"

using namespace qan;

namespace {

TransmitterConfig user(int id, double slot_ps, double loss_db) {
  TransmitterConfig t;
  t.id = id;
  t.slot_ps = slot_ps;
  t.channel_loss_db = loss_db;
  t.frame = {10000, 1000, 1};
  t.code_seed = 11;
  t.payload_seed = 100 + static_cast<std::uint64_t>(id);
  return t;
}

ReceiverConfig quiet_receiver() {
  ReceiverConfig rx;
  rx.p_dc = 0;
  rx.jitter_ps = 0;
  rx.eta_r = 1;
  return rx;
}

std::size_t count_source(const EventRecord& r, int source) {
  std::size_t n = 0;
  for (const auto& t : r.truth) n += t.source == source;
  return n;
}

}  // namespace

TEST_CASE("noiseless limit: one event per period at exact times") {
  auto tx = user(1, 3000, 0.0);
  tx.mu = 50;
  tx.probs = {1.0, 0.0, 0.9, 0.1};
  tx.start_period = 7;
  const auto rec = simulate_window({tx}, quiet_receiver(), 0, 20000LL * 1000, 1);
  REQUIRE(rec.events.size() == 1000 - 7);
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    CHECK(rec.events[i].t_ps == 3000 + static_cast<std::int64_t>(i + 7) * 20000);
    CHECK(rec.truth[i].source == 1);
    CHECK(rec.truth[i].index == i);
  }
}

TEST_CASE("two users form two residue clusters") {
  ReceiverConfig rx;
  const auto rec = simulate_transmission({user(1, 4000, 12.164), user(2, 9000, 12.131)}, rx, 0.01, 5);
  std::map<std::int64_t, std::size_t> hist;  // 500 ps bins centred on multiples of 500
  for (const auto& e : rec.events) hist[(e.t_ps % 20000 + 250) / 500]++;
  std::size_t big = 0;
  for (const auto& [bin, n] : hist) big += n > rec.events.size() / 10;
  CHECK(big == 2);
  CHECK(hist[4000 / 500] > rec.events.size() / 3);
  CHECK(hist[9000 / 500] > rec.events.size() / 3);
}

TEST_CASE("click probability matches the Poisson model") {
  ReceiverConfig rx;
  rx.p_dc = 0;
  const auto tx = user(1, 5000, 12.16);
  const double seconds = 0.05;
  const auto rec = simulate_transmission({tx}, rx, seconds, 9);
  const double pulses = seconds * 5e7;
  const double eta = total_transmittance(tx, rx);
  // sync pulses are always signal intensity; random pulses follow P_mu/P_nu
  const double p_sig = -std::expm1(-tx.mu * eta);
  const double p_dec = -std::expm1(-tx.nu * eta);
  const double p = 0.5 * p_sig + 0.5 * (0.69 * p_sig + 0.31 * p_dec);
  const double mean = pulses * p;
  const double sd = std::sqrt(pulses * p * (1 - p));
  CHECK(std::abs(static_cast<double>(rec.events.size()) - mean) < 3 * sd);
  // first-order approximation mu*eta stays within 1% at this loss
  CHECK(std::abs(p / (eta * (0.5 * tx.mu + 0.5 * (0.69 * tx.mu + 0.31 * tx.nu))) - 1) < 0.01);
}

TEST_CASE("determinism, ordering and window bounds") {
  ReceiverConfig rx;
  rx.p_dc = 1e-4;
  const std::vector<TransmitterConfig> txs = {user(1, 4000, 3), user(2, 9000, 3)};
  const auto a = simulate_transmission(txs, rx, 0.002, 77);
  const auto b = simulate_transmission(txs, rx, 0.002, 77);
  const auto c = simulate_transmission(txs, rx, 0.002, 78);
  CHECK(a.events == b.events);
  CHECK(a.truth == b.truth);
  CHECK_FALSE(a.events == c.events);
  for (std::size_t i = 1; i < a.events.size(); ++i) CHECK(a.events[i - 1].t_ps <= a.events[i].t_ps);
  CHECK(a.events.front().t_ps >= 0);
  CHECK(a.events.back().t_ps < 2000000000LL);
  CHECK(count_source(a, TruthEntry::kDark) > 0);
}

TEST_CASE("zero duration gives an empty record") {
  const auto r = simulate_transmission({user(1, 0, 0)}, ReceiverConfig{}, 0.0, 1);
  CHECK(r.events.empty());
}

TEST_CASE("sigma = 0: residues equal slot positions and truth is total") {
  auto rx = quiet_receiver();
  auto t1 = user(1, 4000, 1);
  auto t2 = user(2, 9000, 1);
  t1.p_opt = t2.p_opt = 0;
  const auto rec = simulate_transmission({t1, t2}, rx, 0.001, 3);
  REQUIRE(!rec.events.empty());
  const auto r1 = t1.record();
  const auto r2 = t2.record();
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const auto& tr = rec.truth[i];
    REQUIRE(tr.source >= 1);
    const auto& tx = tr.source == 1 ? t1 : t2;
    CHECK(rec.events[i].t_ps % 20000 == static_cast<std::int64_t>(tx.slot_ps));
    const auto sent = (tr.source == 1 ? r1 : r2).symbol_at(tr.index);
    const auto ch = rec.events[i].channel;
    if (detector_basis(ch) == sent.basis) CHECK(detector_bit(ch) == sent.bit);
  }
}

TEST_CASE("QBER equals p_opt and basis split is 9:1") {
  auto rx = quiet_receiver();
  auto tx = user(1, 4000, 6);
  tx.p_opt = 0.02;
  const auto rec = simulate_transmission({tx}, rx, 0.02, 21);
  const auto r = tx.record();
  double n = 0, err = 0, z = 0;
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const auto sent = r.symbol_at(rec.truth[i].index);
    const auto ch = rec.events[i].channel;
    z += detector_basis(ch) == Basis::Z;
    if (detector_basis(ch) != sent.basis) continue;
    n += 1;
    err += detector_bit(ch) != sent.bit;
  }
  const double e = err / n;
  CHECK(std::abs(e - 0.02) < 3 * std::sqrt(0.02 * 0.98 / n));
  const double total = static_cast<double>(rec.events.size());
  CHECK(std::abs(z / total - 0.9) < 3 * std::sqrt(0.09 / total));
}

TEST_CASE("dark counts follow the per-gate rate") {
  auto rx = quiet_receiver();
  rx.p_dc = 1e-3;
  auto tx = user(1, 4000, 300);  // effectively dark
  const auto rec = simulate_transmission({tx}, rx, 0.01, 4);
  const double mean = 4 * 1e-3 / 1000.0 * 1e10;
  CHECK(std::abs(static_cast<double>(count_source(rec, TruthEntry::kDark)) - mean) < 4 * std::sqrt(mean));
}

TEST_CASE("configuration errors") {
  ReceiverConfig rx;
  CHECK_THROWS_AS(simulate_transmission({user(1, 4000, 1), user(2, 4500, 1)}, rx, 0.001, 1), ConfigurationError);
  CHECK_THROWS_AS(simulate_transmission({user(1, 19900, 1), user(2, 100, 1)}, rx, 0.001, 1), ConfigurationError);
  CHECK_THROWS_AS(simulate_transmission({}, rx, 0.001, 1), ParameterError);
  rx.gate_ps = 1500;
  CHECK_THROWS_AS(simulate_transmission({user(1, 0, 1)}, rx, 0.001, 1), ConfigurationError);
}

TEST_CASE("cross-talk injection rates") {
  ReceiverConfig rx;
  rx.p_dc = 0;
  const auto base = simulate_transmission({user(1, 4000, 3)}, rx, 0.02, 8);
  const double n0 = static_cast<double>(count_source(base, 1));

  SUBCASE("n = 1 is the identity") {
    const auto out = apply_crosstalk(base, {0.0098, 1, 20}, rx, 1);
    CHECK(out.events == base.events);
    CHECK(out.truth == base.truth);
  }
  SUBCASE("n = N_c raises the in-slot rate by p_T") {
    const auto out = apply_crosstalk(base, {0.0098, 20, 20}, rx, 2);
    const double extra = static_cast<double>(count_source(out, TruthEntry::kCrosstalk));
    CHECK(std::abs(extra / n0 - 0.0098) < 3 * std::sqrt(0.0098 / n0));
    for (std::size_t i = 1; i < out.events.size(); ++i) CHECK(out.events[i - 1].t_ps <= out.events[i].t_ps);
  }
  SUBCASE("n = 2 of 20 raises the rate by p_T/19") {
    const auto out = apply_crosstalk(base, {0.0098, 2, 20}, rx, 3);
    const double extra = static_cast<double>(count_source(out, TruthEntry::kCrosstalk));
    const double rho = 0.0098 / 19;
    CHECK(std::abs(extra / n0 - rho) < 3 * std::sqrt(rho / n0));
  }
  SUBCASE("n > N_c is rejected") {
    CHECK_THROWS_AS(apply_crosstalk(base, {0.0098, 21, 20}, rx, 1), ParameterError);
  }
}

TEST_CASE("cross-talk jitter calibration reproduces its targets analytically") {
  const auto j = calibrate_crosstalk_jitter(0.0043, 0.0055, 1000, 1000);
  CHECK(j.sigma_ps > 150);
  CHECK(j.sigma_ps < 250);
  CHECK(j.bias_ps > 0);
  CHECK(expected_crosstalk(1, j, 1000, 1000) == doctest::Approx(0.0043).epsilon(1e-6));
  CHECK(expected_crosstalk(-1, j, 1000, 1000) == doctest::Approx(0.0055).epsilon(1e-6));
  double prev = 1;
  for (int d = 1; d <= 10; ++d) {
    const double v = expected_crosstalk(d, j, 1000, 1000);
    CHECK(v <= prev);
    prev = v;
  }
  CHECK(expected_crosstalk(10, j, 1000, 1000) < 1e-12);
}

TEST_CASE("measured cross-talk matches the jitter-tail model") {
  const auto j = calibrate_crosstalk_jitter(0.0043, 0.0055, 1000, 1000);
  ReceiverConfig rx;
  rx.jitter_ps = j.sigma_ps;
  rx.eta_r = 1;
  rx.p_dc = 0;
  auto victim = user(1, 10000, 3);
  const auto pts = measure_crosstalk(victim, rx, {-1, 1, 2, 10}, 1000, j.bias_ps, 0.01, 4, 12);
  REQUIRE(pts.size() == 4);
  CHECK(std::abs(pts[0].increase - 0.0055) < 0.0015);
  CHECK(std::abs(pts[1].increase - 0.0043) < 0.0015);
  CHECK(pts[2].increase <= pts[1].increase);
  CHECK(std::abs(pts[3].increase) <= 3 * pts[3].std_error + 1e-12);
  CHECK(pts[1].std_error > 0);

  victim.channel_loss_db = 400;
  CHECK_THROWS_AS(measure_crosstalk(victim, rx, {1}, 1000, 0, 0.0001, 2, 1), MeasurementError);
}

TEST_CASE("event file round trips") {
  ReceiverConfig rx;
  rx.p_dc = 1e-4;
  const auto rec = simulate_transmission({user(1, 4000, 3)}, rx, 0.001, 2);
  std::stringstream bs;
  write_events(bs, rec);
  CHECK(bs.str().size() == 16 + 9 * rec.events.size());
  const auto back = read_events(bs);
  CHECK(back.events == rec.events);
  CHECK(back.period_ps == 20000);

  std::stringstream ts;
  write_truth(ts, rec);
  auto with_truth = back;
  read_truth(ts, with_truth);
  CHECK(with_truth.truth == rec.truth);

  std::stringstream cs;
  write_events_csv(cs, rec);
  CHECK(read_events_csv(cs, 20000).events == rec.events);
}

TEST_CASE("corrupted event files are rejected") {
  EventRecord rec;
  rec.period_ps = 20000;
  rec.events = {{10, Detector::H}, {20, Detector::V}};
  std::stringstream good;
  write_events(good, rec);
  const std::string bytes = good.str();

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_events(truncated), SchemaError);

  std::string bad_channel = bytes;
  bad_channel[16 + 8] = 9;
  std::stringstream bc(bad_channel);
  CHECK_THROWS_AS(read_events(bc), SchemaError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream bm(bad_magic);
  CHECK_THROWS_AS(read_events(bm), SchemaError);

  rec.events = {{20, Detector::H}, {10, Detector::V}};
  std::stringstream unordered;
  write_events(unordered, rec);
  CHECK_THROWS_AS(read_events(unordered), SchemaError);
}
