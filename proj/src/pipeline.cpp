#include "qan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "qan/errors.hpp"

namespace qan {

void PipelineConfig::validate() const {
  if (transmitters.empty()) throw ConfigurationError("pipeline: no transmitters");
  receiver.validate();
  const auto& frame = transmitters.front().frame;
  const auto sync_period = (frame.interleave + 1) * frame.period_length;
  for (const auto& tx : transmitters) {
    tx.validate();
    if (tx.frame.sync_length != frame.sync_length || tx.frame.period_length != frame.period_length ||
        tx.frame.interleave != frame.interleave) {
      throw ConfigurationError("pipeline: transmitters must share L, L1 and M");
    }
    // identification resolves the offset modulo one sync period only
    if (tx.start_period >= sync_period) {
      throw ConfigurationError("pipeline: transmitter " + std::to_string(tx.id) + " start period " +
                               std::to_string(tx.start_period) + " must be below (M+1) L1 = " +
                               std::to_string(sync_period));
    }
  }
  if (!(window_s > 0) || !(max_duration_s >= window_s)) {
    throw ConfigurationError("pipeline: need 0 < window <= max duration");
  }
  // one recovered period serves every slot, so the slots may not walk apart
  // by more than a quarter gate within a window
  const double tau = transmitters.front().effective_period_ps();
  for (const auto& tx : transmitters) {
    const double walk = std::abs(tx.effective_period_ps() - tau) * window_s * 1e12 / tau;
    if (walk > receiver.gate_ps / 4) {
      throw ConfigurationError("pipeline: transmitter " + std::to_string(tx.id) +
                               " clock rate differs from the others by more than the slots can absorb");
    }
  }
  if (!(target_n_z > 0)) throw ConfigurationError("pipeline: target n_z must be positive");
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineProgress& progress) {
  cfg.validate();
  const auto& rx = cfg.receiver;
  std::vector<SyncString> codes;
  std::vector<TransmitterRecord> records;
  for (const auto& tx : cfg.transmitters) {
    codes.push_back(tx.code());
    records.push_back(tx.record());
  }
  SyncOptions opt = cfg.sync;
  opt.frame = cfg.transmitters.front().frame;
  opt.gate_ps = rx.gate_ps;
  opt.max_slots = rx.max_slots;
  opt.period_hint_ps = rx.period_ps;

  auto window_edge = [&](std::size_t k) {
    return static_cast<std::int64_t>(std::llround(static_cast<double>(k) * cfg.window_s * 1e12));
  };

  PipelineResult out;
  std::optional<SlotAssignment> lines;
  std::vector<int> tx_of_slot;  // index into cfg.transmitters or -1
  const auto max_windows = static_cast<std::size_t>(std::floor(cfg.max_duration_s / cfg.window_s + 1e-9));

  for (std::size_t w = 0; w < max_windows; ++w) {
    const std::int64_t t0 = window_edge(w), t1 = window_edge(w + 1);
    const EventRecord rec = simulate_window(cfg.transmitters, rx, t0, t1, cfg.seed);
    out.events += rec.events.size();
    SlotAssignment slots;
    if (!lines) {
      const SyncReport rep = recover(rec, codes, opt);
      out.clock = rep.clock;
      slots = rep.slots;
      lines = rep.slots;
      for (std::size_t s = 0; s < rep.reports.size(); ++s) {
        UserOutcome u;
        u.slot = static_cast<int>(s);
        u.report = rep.reports[s];
        int index = -1;
        if (u.report.failure.empty() && u.report.id) {
          for (std::size_t i = 0; i < cfg.transmitters.size(); ++i) {
            if (cfg.transmitters[i].id == u.report.id->transmitter_id) index = static_cast<int>(i);
          }
          u.transmitter_id = u.report.id->transmitter_id;
        }
        tx_of_slot.push_back(index);
        out.users.push_back(std::move(u));
      }
    } else {
      slots = assign_slots(rec.events, lines->period_ps, lines->clusters, rx.gate_ps);
    }

    bool done = true;
    for (std::size_t s = 0; s < out.users.size(); ++s) {
      if (tx_of_slot[s] < 0) continue;
      auto& u = out.users[s];
      const auto range = pulse_range(u.report.id->offset_ps, out.clock.period_ps, t0, t1);
      u.tally += sift(rec.events, slots, u.slot, u.report, records[static_cast<std::size_t>(tx_of_slot[s])], range);
      done = done && static_cast<double>(u.tally.n_z()) >= cfg.target_n_z;
    }
    out.windows = w + 1;
    out.duration_s = static_cast<double>(t1) * 1e-12;
    if (progress) progress(out.windows, out.duration_s);
    if (done) break;
  }

  for (std::size_t s = 0; s < out.users.size(); ++s) {
    if (tx_of_slot[s] < 0) continue;
    const auto& tx = cfg.transmitters[static_cast<std::size_t>(tx_of_slot[s])];
    auto& u = out.users[s];
    KeyRateInputs in;
    in.tally = u.tally;
    in.decoy = {tx.mu, tx.nu, tx.probs.signal, tx.probs.decoy, cfg.eps_sec, false};
    in.eps_cor = cfg.eps_cor;
    in.f_e = cfg.f_e;
    in.frequency_hz = 1e12 / out.clock.period_ps;
    in.duty = duty_ratio(tx.frame.interleave);
    u.rate = secure_key_rate(in);
  }
  return out;
}

}  // namespace qan
