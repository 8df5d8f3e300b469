#pragma once

// YAML run configuration. Every scenario (simulation, sync, key rate,
// capacity sweep, cross-talk, jitter) reads from one file; errors carry the
// file name, line and column of the offending node.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qan/capacity.hpp"
#include "qan/channel.hpp"
#include "qan/pipeline.hpp"
#include "qan/sync.hpp"

namespace qan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeyRateSettings {
  double eps_sec = 1e-9;
  double eps_cor = 1e-15;
  double f_e = 1.16;
  double target_n_z = 1e7;
  double window_s = 1.0;
  double max_duration_s = 120.0;
};

struct CapacitySweep {
  CapacityParams params;
  std::vector<int> users;
  std::vector<double> distances_km;
};

struct CrosstalkSettings {
  double increase_plus = 0.0043;
  double increase_minus = 0.0055;
  double spacing_ps = 1000.0;
  std::vector<int> offsets = {-3, -2, -1, 1, 2, 3};
  double duration_s = 0.02;
  int repeats = 20;
};

struct RunConfig {
  std::string scenario;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  FrameSpec frame;
  ReceiverConfig receiver;
  std::vector<TransmitterConfig> transmitters;
  SyncOptions sync;
  KeyRateSettings keyrate;
  std::optional<CapacitySweep> capacity;
  std::optional<CrosstalkSettings> crosstalk;
  std::string sha256;  // of the configuration text

  std::vector<SyncString> codes() const;
  PipelineConfig pipeline() const;
};

/// Parses configuration text; `name` prefixes error locations.
RunConfig parse_config(std::string_view text, const std::string& name = "<config>");
RunConfig load_config(const std::string& path);

std::string sha256_hex(std::string_view data);

}  // namespace qan
