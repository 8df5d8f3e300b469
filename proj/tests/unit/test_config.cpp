#include <cmath>
#include <string>

#include "doctest.h"
#include "qan/capacity.hpp"
#include "qan/config.hpp"

using namespace qan;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "t.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

// single-user analytic QBER with the transmittance folded into the splitter
double model_qber(const TransmitterConfig& t, const ReceiverConfig& rx) {
  CapacityParams p;
  p.capacity = 2;
  p.active_users = 1;
  p.p_t = 0;
  p.fiber_km = 0;
  p.eta_r = 1;
  p.splitter_loss_db = -10 * std::log10(total_transmittance(t, rx));
  p.p_dc = rx.p_dc;
  p.p_opt = t.p_opt;
  p.decoy = {t.mu, t.nu, t.probs.signal, t.probs.decoy};
  return weighted_qber(p);
}

}  // namespace

TEST_CASE("shipped two-user scenario parses with calibrated misalignment") {
  const RunConfig c = load_config(QAN_SOURCE_DIR "/config/two_user.yaml");
  CHECK(c.scenario == "two-user");
  CHECK(c.frame.sync_length == 100000);
  CHECK(c.frame.period_length == 1000);
  CHECK(c.frame.interleave == 1);
  REQUIRE(c.transmitters.size() == 2);
  CHECK(c.transmitters[0].mu == 0.52);
  CHECK(c.transmitters[1].probs.signal == 0.69);
  CHECK(c.transmitters[0].channel_loss_db == 12.164);
  CHECK(model_qber(c.transmitters[0], c.receiver) == doctest::Approx(0.0069).epsilon(1e-9));
  CHECK(model_qber(c.transmitters[1], c.receiver) == doctest::Approx(0.0091).epsilon(1e-9));
  CHECK(c.codes().size() == 2);
  CHECK(c.pipeline().target_n_z == 1e7);
  c.pipeline().validate();
  CHECK(c.crosstalk.has_value());
  CHECK(c.sha256.size() == 64);
}

TEST_CASE("shipped capacity sweeps expand their distance ranges") {
  const RunConfig a = load_config(QAN_SOURCE_DIR "/config/capacity_64_users.yaml");
  REQUIRE(a.capacity);
  CHECK(a.capacity->distances_km.size() == 26);
  CHECK(a.capacity->distances_km.back() == 25);
  const RunConfig b = load_config(QAN_SOURCE_DIR "/config/capacity_2_users.yaml");
  REQUIRE(b.capacity);
  CHECK(b.capacity->params.splitter_loss_db == doctest::Approx(10 * std::log10(2.0) + 1.44));
  CHECK(b.capacity->distances_km.back() == 60);
}

TEST_CASE("errors name file, line and column") {
  const auto e = error_of("seed: 1\nframe:\n  L: 100\n  Lx: 4\n");
  CHECK(e.find("t.yaml:4:") != std::string::npos);
  CHECK(e.find("Lx") != std::string::npos);
  CHECK(error_of("scenario: x\n").find("seed") != std::string::npos);
  CHECK(error_of("seed: -1\n").find("t.yaml:1:") != std::string::npos);
  CHECK(error_of("seed: 1\nreceiver: {p_dc: oops}\n").find("t.yaml:2:") != std::string::npos);
  CHECK(error_of("seed: 1\ntransmitters:\n  - {id: 1, p_opt: 0.01, qber: 0.01}\n").find("t.yaml:3:") !=
        std::string::npos);
  CHECK(error_of("seed: 1\ntransmitters:\n  - {id: 1}\n  - {id: 1}\n").find("duplicate") != std::string::npos);
  CHECK(error_of("seed: 1\nreceiver: {gate_ps: -5}\n").find("t.yaml:2:") != std::string::npos);
  CHECK(error_of("seed: [1\n") != "");
  CHECK(error_of("seed: 1\n").empty());
}

TEST_CASE("defaults apply to every transmitter and ids count up") {
  const RunConfig c = parse_config(
      "seed: 3\ndefaults: {mu: 0.6, clock_error_ppm: 2}\ntransmitters:\n  - {slot_ps: 1000}\n  - {slot_ps: 3000, mu: 0.5}\n");
  REQUIRE(c.transmitters.size() == 2);
  CHECK(c.transmitters[0].id == 1);
  CHECK(c.transmitters[1].id == 2);
  CHECK(c.transmitters[0].mu == 0.6);
  CHECK(c.transmitters[1].mu == 0.5);
  CHECK(c.transmitters[1].clock_error_ppm == 2);
}

TEST_CASE("sha256 matches the standard test vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(parse_config("seed: 1\n").sha256 == sha256_hex("seed: 1\n"));
}
