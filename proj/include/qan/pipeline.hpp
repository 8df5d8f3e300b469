#pragma once

// Streaming simulate -> sync -> sift -> key rate over consecutive windows.
// The first window fixes clock, slots and identities; later windows are
// labeled against the same slot lines and sifted until every identified
// user holds the target number of sifted Z detections.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qan/channel.hpp"
#include "qan/keyrate.hpp"
#include "qan/sync.hpp"

namespace qan {

struct PipelineConfig {
  std::vector<TransmitterConfig> transmitters;
  ReceiverConfig receiver;
  SyncOptions sync;  // frame and gate are taken from the transmitters and receiver
  double window_s = 1.0;
  double target_n_z = 1e7;
  double max_duration_s = 120.0;
  double eps_sec = 1e-9;
  double eps_cor = 1e-15;
  double f_e = 1.16;
  std::uint64_t seed = 1;

  /// Shared frame, offsets inside one sync period, window positive.
  void validate() const;
};

struct UserOutcome {
  int slot = -1;
  int transmitter_id = 0;  // 0 when unidentified
  SlotReport report;
  SiftedTally tally;
  KeyRateResult rate;
};

struct PipelineResult {
  ClockEstimate clock;
  std::vector<UserOutcome> users;  // one per recovered slot
  double duration_s = 0.0;
  std::size_t windows = 0;
  std::size_t events = 0;
};

/// Called after each window with (windows done, seconds simulated).
using PipelineProgress = std::function<void(std::size_t, double)>;

PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineProgress& progress = {});

}  // namespace qan
