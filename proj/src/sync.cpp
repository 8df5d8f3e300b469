#include "qan/sync.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/erf.hpp>

#include "qan/errors.hpp"

namespace qan {

namespace {

using ld = long double;

double wrap(double d, double period) {
  d = std::fmod(d, period);
  if (d > period / 2) d -= period;
  if (d < -period / 2) d += period;
  return d;
}

double residue(std::int64_t t, double period) {
  const ld p = period;
  ld r = std::fmod(static_cast<ld>(t), p);
  if (r < 0) r += p;
  return static_cast<double>(r);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

/// Peaks of a circular residue histogram, refined by circular mean.
std::vector<double> residue_peaks(std::span<const double> res, double period, double bin_width, double half_window) {
  const auto nb = static_cast<std::size_t>(std::max(1.0, std::ceil(period / bin_width)));
  const double bw = period / static_cast<double>(nb);
  std::vector<double> hist(nb, 0.0);
  for (double r : res) hist[std::min(nb - 1, static_cast<std::size_t>(r / bw))] += 1;

  const double med = median_of(hist);
  const double threshold = med + std::max(5 * std::sqrt(med), 3.0);
  std::vector<std::size_t> order(nb);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return hist[a] > hist[b]; });
  const auto reach = static_cast<long>(std::ceil(half_window / bw));
  std::vector<std::size_t> peaks;
  for (auto i : order) {
    if (hist[i] < threshold) break;
    // a jitter tail is monotone, so only local maxima can seed a cluster
    if (hist[i] < hist[(i + 1) % nb] || hist[i] < hist[(i + nb - 1) % nb]) continue;
    bool clear = true;
    for (auto p : peaks) {
      long d = std::labs(static_cast<long>(p) - static_cast<long>(i));
      d = std::min<long>(d, static_cast<long>(nb) - d);
      if (d <= 2 * reach) clear = false;
    }
    if (clear) peaks.push_back(i);
  }

  std::vector<double> sx(peaks.size(), 0.0), sy(peaks.size(), 0.0);
  const double w = 2 * std::numbers::pi / period;
  for (double r : res) {
    for (std::size_t k = 0; k < peaks.size(); ++k) {
      const double c = (static_cast<double>(peaks[k]) + 0.5) * bw;
      if (std::abs(wrap(r - c, period)) <= half_window) {
        sx[k] += std::cos(w * r);
        sy[k] += std::sin(w * r);
        break;
      }
    }
  }
  std::vector<double> centers;
  for (std::size_t k = 0; k < peaks.size(); ++k) {
    double c = std::atan2(sy[k], sx[k]) / w;
    if (c < 0) c += period;
    centers.push_back(c);
  }
  std::sort(centers.begin(), centers.end());
  return centers;
}

/// E[z^2 | |z| <= q] for a standard normal kept with probability 1 - trim.
double trimmed_variance_factor(double trim) {
  const double keep = 1.0 - trim;
  const double q = std::sqrt(2.0) * boost::math::erf_inv(keep);
  const double phi = std::exp(-q * q / 2) / std::sqrt(2 * std::numbers::pi);
  return 1.0 - 2 * q * phi / keep;
}

struct PairFit {
  double period;
  double rel_uncertainty;
};

/// Stage 1: period from intervals t_{a+b} - t_a ~ k tau, fitted through the origin.
PairFit fit_interval_pairs(std::span<const std::int64_t> ts, double tau, const LtsOptions& opt) {
  constexpr std::size_t kMaxEvents = 200000;
  const std::size_t n = std::min(ts.size(), kMaxEvents);
  double u = opt.prior_ppm * 1e-6;
  std::vector<std::pair<double, double>> pairs;  // (k, dt)
  std::vector<double> r2;
  for (int round = 0; round < 6; ++round) {
    const double k_max = std::max(1.0, std::floor(opt.window_ps / (4 * u * tau)));
    pairs.clear();
    double k_seen = 0;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 1; b <= opt.pair_depth && a + b < n; ++b) {
        const double dt = static_cast<double>(ts[a + b] - ts[a]);
        const double k = std::nearbyint(dt / tau);
        if (k < 1) continue;
        k_seen = std::max(k_seen, k);
        if (k > k_max) continue;
        if (std::abs(dt - k * tau) <= opt.window_ps) pairs.emplace_back(k, dt);
      }
    }
    if (pairs.size() < 10) throw RefinementError("clock refinement: too few consistent intervals", {});

    double ms_prev = -1;
    for (int it = 0; it < opt.max_iterations; ++it) {
      r2.resize(pairs.size());
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double r = pairs[i].second - pairs[i].first * tau;
        r2[i] = r * r;
      }
      auto keep = static_cast<std::size_t>(std::ceil((1 - opt.trim) * static_cast<double>(pairs.size())));
      keep = std::max<std::size_t>(1, std::min(keep, pairs.size()));
      std::vector<double> sorted = r2;
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep - 1), sorted.end());
      const double cut = sorted[keep - 1];
      ld skt = 0, skk = 0;
      std::size_t used = 0;
      for (std::size_t i = 0; i < pairs.size() && used < keep; ++i) {
        if (r2[i] > cut) continue;
        skt += static_cast<ld>(pairs[i].first) * pairs[i].second;
        skk += static_cast<ld>(pairs[i].first) * pairs[i].first;
        ++used;
      }
      tau = static_cast<double>(skt / skk);
      double ms = 0;
      used = 0;
      for (std::size_t i = 0; i < pairs.size() && used < keep; ++i) {
        if (r2[i] > cut) continue;
        const double r = pairs[i].second - pairs[i].first * tau;
        ms += r * r;
        ++used;
      }
      ms /= static_cast<double>(used);
      const double se = std::sqrt(ms / static_cast<double>(skk)) / tau;
      u = std::max(10 * se, 1e-12);
      if (ms_prev >= 0 && std::abs(ms - ms_prev) <= opt.tolerance * std::max(ms_prev, 1e-12)) break;
      ms_prev = ms;
    }
    if (k_max >= k_seen) break;
  }
  return {tau, u};
}

struct SlotFit {
  double tau = 0;
  std::vector<double> phase;  // t ~ phase_s + p * tau
  double trimmed_ms = 0;
  double rel_uncertainty = 0;
  int iterations = 0;
};

struct Member {
  std::size_t idx;
  int slot;
  std::int64_t p;
  double r;
};

std::vector<Member> members(std::span<const std::int64_t> ts, std::size_t count, const SlotFit& f, double window) {
  std::vector<Member> out;
  out.reserve(count);
  for (std::size_t a = 0; a < count; ++a) {
    int best = -1;
    double best_r = 0;
    std::int64_t best_p = 0;
    for (std::size_t s = 0; s < f.phase.size(); ++s) {
      const ld x = (static_cast<ld>(ts[a]) - f.phase[s]) / static_cast<ld>(f.tau);
      const auto p = static_cast<std::int64_t>(std::llround(x));
      const double r = static_cast<double>(static_cast<ld>(ts[a]) - f.phase[s] - static_cast<ld>(p) * f.tau);
      if (std::abs(r) <= window && (best < 0 || std::abs(r) < std::abs(best_r))) {
        best = static_cast<int>(s);
        best_r = r;
        best_p = p;
      }
    }
    if (best >= 0) out.push_back({a, best, best_p, best_r});
  }
  return out;
}

/// One LTS fit (C-steps) over the first `count` timestamps.
void fit_span(std::span<const std::int64_t> ts, std::size_t count, SlotFit& f, const LtsOptions& opt) {
  double ms_prev = -1;
  const std::size_t ns = f.phase.size();
  for (int it = 1; it <= opt.max_iterations; ++it) {
    auto mem = members(ts, count, f, opt.window_ps);
    if (mem.size() < 2 * ns + 2) throw RefinementError("clock refinement: too few in-slot events", {});
    auto keep = static_cast<std::size_t>(std::ceil((1 - opt.trim) * static_cast<double>(mem.size())));
    keep = std::max<std::size_t>(2 * ns + 2, std::min(keep, mem.size()));
    std::nth_element(mem.begin(), mem.begin() + static_cast<std::ptrdiff_t>(keep - 1), mem.end(),
                     [](const Member& a, const Member& b) { return std::abs(a.r) < std::abs(b.r); });
    mem.resize(keep);

    std::vector<ld> sp(ns, 0), st(ns, 0);
    std::vector<std::size_t> cnt(ns, 0);
    for (const auto& m : mem) {
      sp[m.slot] += static_cast<ld>(m.p);
      st[m.slot] += static_cast<ld>(ts[m.idx]);
      ++cnt[m.slot];
    }
    for (std::size_t s = 0; s < ns; ++s) {
      if (cnt[s]) {
        sp[s] /= static_cast<ld>(cnt[s]);
        st[s] /= static_cast<ld>(cnt[s]);
      }
    }
    ld sxy = 0, sxx = 0;
    for (const auto& m : mem) {
      const ld dp = static_cast<ld>(m.p) - sp[m.slot];
      sxy += dp * (static_cast<ld>(ts[m.idx]) - st[m.slot]);
      sxx += dp * dp;
    }
    if (sxx > 0) f.tau = static_cast<double>(sxy / sxx);
    for (std::size_t s = 0; s < ns; ++s) {
      if (cnt[s]) f.phase[s] = static_cast<double>(st[s] - static_cast<ld>(f.tau) * sp[s]);
    }
    double ms = 0;
    for (const auto& m : mem) {
      const double r = static_cast<double>(static_cast<ld>(ts[m.idx]) - f.phase[m.slot] - static_cast<ld>(m.p) * f.tau);
      ms += r * r;
    }
    ms /= static_cast<double>(mem.size());
    f.trimmed_ms = ms;
    f.iterations += 1;
    const double factor = trimmed_variance_factor(opt.trim);
    f.rel_uncertainty = sxx > 0 ? std::max(10 * std::sqrt(ms / factor / static_cast<double>(sxx)) / f.tau, 1e-15) : 1.0;
    const bool settled = ms_prev >= 0 && std::abs(ms - ms_prev) <= opt.tolerance * ms_prev;
    if (settled || (ms_prev >= 0 && ms < 1e-6 && ms_prev < 1e-6)) return;
    ms_prev = ms;
  }
  ClockEstimate last;
  last.period_ps = f.tau;
  last.slot_phase_ps = f.phase;
  last.iterations = f.iterations;
  throw RefinementError("clock refinement did not converge", last);
}

}  // namespace

double estimate_clock_fft(std::span<const std::int64_t> ts, double hint, std::size_t n_f) {
  if (!(hint > 0) || n_f < 16) throw ParameterError("clock estimate: need a positive period hint and n_f >= 16");
  if (ts.size() < 1000) throw ParameterError("clock estimate: need at least 1000 events");
  if (static_cast<double>(ts.back() - ts.front()) < 1000 * hint) {
    throw ParameterError("clock estimate: events must span at least 1000 periods");
  }
  const double grid = hint / 4;
  const std::size_t n = n_f;
  std::unique_ptr<double, decltype(&fftw_free)> in(fftw_alloc_real(n), fftw_free);
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> out(fftw_alloc_complex(n / 2 + 1), fftw_free);
  std::fill(in.get(), in.get() + n, 0.0);
  for (auto t : ts) {
    const auto i = static_cast<std::size_t>(static_cast<double>(t - ts.front()) / grid);
    if (i >= n) break;
    in.get()[i] += 1.0;
  }
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::hypot(out.get()[k][0], out.get()[k][1]);
  const double floor = median_of(std::vector<double>(mag.begin() + 1, mag.end()));

  const double k_nom = static_cast<double>(n) / 4.0;
  const auto lo = static_cast<std::size_t>(std::max(1.0, std::floor(k_nom * 0.95)));
  const auto hi = std::min(mag.size() - 1, static_cast<std::size_t>(std::ceil(k_nom * 1.05)));
  std::size_t best = lo;
  for (std::size_t k = lo; k <= hi; ++k) {
    if (mag[k] > mag[best]) best = k;
  }
  if (!(mag[best] >= 5 * floor) || mag[best] == 0) {
    throw ClockNotFoundError("clock estimate: no spectral line above 5x the median magnitude near the nominal rate");
  }
  return static_cast<double>(n) * grid / static_cast<double>(best);
}

ClockEstimate refine_clock_lts(std::span<const std::int64_t> ts, double coarse, const LtsOptions& opt) {
  if (!(coarse > 0)) throw ParameterError("clock refinement: coarse period must be positive");
  if (!(opt.trim >= 0 && opt.trim < 0.5) || opt.pair_depth < 2 || opt.max_iterations < 1) {
    throw ParameterError("clock refinement: invalid options");
  }
  if (ts.size() < 100) throw ParameterError("clock refinement: need at least 100 events");

  const PairFit pf = fit_interval_pairs(ts, coarse, opt);

  SlotFit f;
  f.tau = pf.period;
  f.rel_uncertainty = pf.rel_uncertainty;
  const ld t0 = static_cast<ld>(ts.front());
  auto span_count = [&](double periods) {
    const ld limit = t0 + static_cast<ld>(periods) * f.tau;
    return static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), limit,
                                                     [](ld v, std::int64_t t) { return v < static_cast<ld>(t); }) -
                                    ts.begin());
  };
  double periods = opt.window_ps / (4 * f.rel_uncertainty * f.tau);
  std::size_t count = std::max(span_count(periods), std::min<std::size_t>(ts.size(), 2000));

  std::vector<double> res(count);
  for (std::size_t a = 0; a < count; ++a) res[a] = residue(ts[a], f.tau);
  f.phase = residue_peaks(res, f.tau, opt.window_ps / 4, opt.window_ps);
  if (f.phase.empty()) throw RefinementError("clock refinement: no slot phase found", {});

  while (true) {
    fit_span(ts, count, f, opt);
    if (count == ts.size()) break;
    periods = std::max(2 * static_cast<double>(ts[count - 1] - ts.front()) / f.tau,
                       opt.window_ps / (4 * f.rel_uncertainty * f.tau));
    count = std::max(count + 1, span_count(periods));
    count = std::min(count, ts.size());
  }

  ClockEstimate est;
  est.coarse_period_ps = coarse;
  est.period_ps = f.tau;
  est.iterations = f.iterations;
  est.scale_sigma_ps = std::sqrt(f.trimmed_ms / trimmed_variance_factor(opt.trim));
  const double keep_cut = std::max(3 * est.scale_sigma_ps, 1.0);

  const auto mem = members(ts, ts.size(), f, opt.window_ps);
  std::vector<std::vector<double>> per_slot(f.phase.size());
  double ss = 0;
  for (const auto& m : mem) {
    if (std::abs(m.r) > keep_cut) continue;
    ss += m.r * m.r;
    per_slot[m.slot].push_back(m.r);
  }
  est.retained = 0;
  for (const auto& s : per_slot) est.retained += s.size();
  est.residual_variance_ps2 = est.retained ? ss / static_cast<double>(est.retained) : 0.0;
  est.residual_rms_ps = std::sqrt(est.residual_variance_ps2);

  double ims = 0;
  std::size_t terms = 0;
  for (const auto& s : per_slot) {
    for (const auto& series : interval_errors(s, opt.pair_depth)) {
      for (double e : series) ims += e * e;
      terms += series.size();
    }
  }
  est.interval_error_ms_ps2 = terms ? ims / static_cast<double>(terms) / 2 : 0.0;

  for (auto& p : f.phase) {
    p = std::fmod(p, f.tau);
    if (p < 0) p += f.tau;
  }
  est.slot_phase_ps = f.phase;
  return est;
}

std::vector<std::vector<double>> interval_errors(std::span<const double> r, std::size_t depth) {
  if (depth < 1) throw ParameterError("interval errors: depth must be >= 1");
  std::vector<std::vector<double>> out(depth);
  for (std::size_t b = 1; b <= depth; ++b) {
    if (r.size() <= b) continue;
    out[b - 1].reserve(r.size() - b);
    for (std::size_t a = 0; a + b < r.size(); ++a) out[b - 1].push_back(r[a + b] - r[a]);
  }
  return out;
}

std::int64_t period_index(std::int64_t t, const SlotCluster& c, double period) {
  const ld x = (static_cast<ld>(t) - c.center_at(static_cast<double>(t))) / static_cast<ld>(period);
  return static_cast<std::int64_t>(std::llround(x));
}

SlotAssignment demarcate_slots(std::span<const DetectionEvent> events, const ClockEstimate& clock, double gate,
                               int max_slots) {
  if (!(clock.period_ps > 0)) throw ParameterError("demarcation: clock not recovered");
  if (!(gate > 0) || gate >= clock.period_ps) throw ParameterError("demarcation: gate must lie in (0, period)");
  const double tau = clock.period_ps;
  SlotAssignment out;
  out.period_ps = tau;
  out.residue_ps.resize(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) out.residue_ps[i] = residue(events[i].t_ps, tau);

  const auto centers = residue_peaks(out.residue_ps, tau, gate / 4, gate / 2);
  if (static_cast<int>(centers.size()) > max_slots) {
    throw DemarcationError("demarcation: " + std::to_string(centers.size()) + " clusters exceed the capacity of " +
                           std::to_string(max_slots));
  }
  const double t_mid = events.empty() ? 0.0 : 0.5 * static_cast<double>(events.front().t_ps + events.back().t_ps);
  for (double c : centers) out.clusters.push_back({c, 0.0, t_mid, 0});

  auto nearest = [&](std::size_t i, double& dist) {
    int best = -1;
    dist = 0;
    const double t = static_cast<double>(events[i].t_ps);
    for (std::size_t k = 0; k < out.clusters.size(); ++k) {
      const double d = wrap(out.residue_ps[i] - out.clusters[k].center_at(t), tau);
      if (std::abs(d) <= gate / 2 && (best < 0 || std::abs(d) < std::abs(dist))) {
        best = static_cast<int>(k);
        dist = d;
      }
    }
    return best;
  };

  // Track each cluster as a line over time. Two gated passes let the line
  // settle; the last pass keeps members within 3 robust scales of it so that
  // dark counts inside the gate do not pull the center.
  std::vector<double> cut(out.clusters.size(), gate / 2);
  for (int pass = 0; pass < 3; ++pass) {
    const std::size_t k = out.clusters.size();
    if (pass == 2) {
      std::vector<std::vector<double>> dev(k);
      for (std::size_t i = 0; i < events.size(); ++i) {
        double d;
        const int c = nearest(i, d);
        if (c >= 0) dev[c].push_back(std::abs(d));
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (!dev[c].empty()) cut[c] = std::min(gate / 2, std::max(3 * 1.4826 * median_of(dev[c]), 1.0));
      }
    }
    std::vector<ld> n(k, 0), st(k, 0), sd(k, 0), stt(k, 0), std_(k, 0);
    for (std::size_t i = 0; i < events.size(); ++i) {
      double d;
      const int c = nearest(i, d);
      if (c < 0 || std::abs(d) > cut[c]) continue;
      const ld t = static_cast<ld>(events[i].t_ps) - t_mid;
      const ld dd = d + out.clusters[c].drift * static_cast<double>(t);  // deviation from the flat center
      n[c] += 1;
      st[c] += t;
      sd[c] += dd;
      stt[c] += t * t;
      std_[c] += t * dd;
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (n[c] < 2) continue;
      const ld mt = st[c] / n[c], md = sd[c] / n[c];
      const ld var = stt[c] / n[c] - mt * mt;
      const ld slope = var > 0 ? (std_[c] / n[c] - mt * md) / var : 0;
      double center = out.clusters[c].center_ps + static_cast<double>(md - slope * mt);
      center = std::fmod(center, tau);
      if (center < 0) center += tau;
      out.clusters[c].center_ps = center;
      out.clusters[c].drift = static_cast<double>(slope);
    }
  }

  return assign_slots(events, tau, std::move(out.clusters), gate);
}

SlotAssignment assign_slots(std::span<const DetectionEvent> events, double tau, std::vector<SlotCluster> clusters,
                            double gate) {
  if (!(tau > 0)) throw ParameterError("slot assignment: period must be positive");
  if (!(gate > 0) || gate >= tau) throw ParameterError("slot assignment: gate must lie in (0, period)");
  SlotAssignment out;
  out.period_ps = tau;
  out.clusters = std::move(clusters);
  out.residue_ps.resize(events.size());
  out.label.assign(events.size(), -1);
  for (auto& c : out.clusters) c.count = 0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    out.residue_ps[i] = residue(events[i].t_ps, tau);
    const double t = static_cast<double>(events[i].t_ps);
    double dist = 0;
    for (std::size_t k = 0; k < out.clusters.size(); ++k) {
      const double d = wrap(out.residue_ps[i] - out.clusters[k].center_at(t), tau);
      if (std::abs(d) <= gate / 2 && (out.label[i] < 0 || std::abs(d) < std::abs(dist))) {
        out.label[i] = static_cast<int>(k);
        dist = d;
      }
    }
    if (out.label[i] >= 0) out.clusters[static_cast<std::size_t>(out.label[i])].count++;
  }
  return out;
}

ReceivedFrame extract_received_frame(std::span<const DetectionEvent> events, const SlotAssignment& slots, int slot,
                                     const FrameSpec& spec, std::int64_t origin) {
  spec.validate();
  if (slot < 0 || static_cast<std::size_t>(slot) >= slots.clusters.size()) {
    throw ParameterError("frame extraction: unknown slot");
  }
  if (slots.label.size() != events.size()) throw ParameterError("frame extraction: assignment does not match events");
  ReceivedFrame f;
  f.slot = slot;
  f.origin = origin;
  f.interleave = spec.interleave;
  const auto len = static_cast<std::int64_t>(spec.frame_length());
  f.values.assign(static_cast<std::size_t>(len), 0);
  std::vector<std::uint8_t> state(static_cast<std::size_t>(len), 0);  // 0 empty, 1 set, 2 conflict
  const auto& cluster = slots.clusters[static_cast<std::size_t>(slot)];
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (slots.label[i] != slot) continue;
    const std::int64_t j = period_index(events[i].t_ps, cluster, slots.period_ps) - origin;
    if (j < 0 || j >= len) continue;
    const auto ch = events[i].channel;
    const Ternary v = ch == Detector::H ? 1 : ch == Detector::V ? -1 : 0;
    const auto u = static_cast<std::size_t>(j);
    ++f.clicks;
    if (state[u] == 0) {
      state[u] = 1;
      f.values[u] = v;
    } else if (state[u] == 1 && f.values[u] != v) {
      state[u] = 2;
      f.values[u] = 0;
      ++f.conflicts;
    }
  }
  return f;
}

std::vector<long> matrix_correlation(std::span<const Ternary> sub, std::span<const Ternary> base) {
  const std::size_t l1 = base.size();
  if (l1 == 0 || sub.size() % l1 != 0) throw ParameterError("matrix correlation: L1 does not divide the length");
  std::vector<long> col(l1, 0);
  for (std::size_t i = 0; i < sub.size(); ++i) col[i % l1] += sub[i];
  std::vector<long> twice(2 * l1);
  for (std::size_t i = 0; i < 2 * l1; ++i) twice[i] = base[i % l1];
  std::vector<long> out(l1, 0);
  for (std::size_t k = 0; k < l1; ++k) {
    long acc = 0;
    for (std::size_t c = 0; c < l1; ++c) acc += col[c] * twice[c + k];
    out[k] = acc;
  }
  return out;
}

IdentificationResult identify_transmitter(const ReceivedFrame& frame, std::span<const SyncString> codes,
                                          const IdentifyOptions& opt) {
  if (codes.empty()) throw ParameterError("identification: no public codes");
  const std::size_t stride = frame.interleave + 1;
  if (frame.interleave < 1 || frame.values.size() % stride != 0) {
    throw ParameterError("identification: frame length is not a multiple of M+1");
  }
  const std::size_t L = frame.values.size() / stride;
  for (const auto& c : codes) {
    if (c.length() != L) throw ParameterError("identification: code length differs from the frame's L");
  }

  IdentificationResult best;
  std::size_t best_l1 = 0;
  long best_val = std::numeric_limits<long>::min();
  long runner = std::numeric_limits<long>::min();
  std::vector<Ternary> sub(L);
  std::vector<std::size_t> nnz(stride, 0);
  for (std::size_t u = 0; u < stride; ++u) {
    for (std::size_t k = 0; k < L; ++k) {
      sub[k] = frame.values[k * stride + u];
      nnz[u] += sub[k] != 0;
    }
    for (const auto& code : codes) {
      const auto corr = matrix_correlation(sub, code.base());
      for (std::size_t lag = 0; lag < corr.size(); ++lag) {
        if (corr[lag] > best_val) {
          runner = best_val;
          best_val = corr[lag];
          best.transmitter_id = code.id();
          best.substream = u;
          best.lag = lag;
          best_l1 = code.period_length();
        } else if (corr[lag] > runner) {
          runner = corr[lag];
        }
      }
    }
  }

  const auto period = static_cast<std::int64_t>(stride * best_l1);
  const std::int64_t raw = frame.origin + static_cast<std::int64_t>(best.substream) -
                           static_cast<std::int64_t>(best.lag) * static_cast<std::int64_t>(stride);
  best.start_period = ((raw % period) + period) % period;
  best.slot = frame.slot;
  best.peak = best_val;
  best.nonzero = nnz[best.substream];
  best.delta = best.nonzero ? static_cast<double>(best_val) / std::sqrt(static_cast<double>(best.nonzero)) : 0.0;
  best.runner_up_ratio = best_val > 0 ? static_cast<double>(std::max(runner, 0L)) / static_cast<double>(best_val) : 1.0;

  if (!(best.delta >= opt.delta_threshold)) {
    throw IdentificationError(IdentificationError::Kind::BelowThreshold,
                              "identification: delta " + std::to_string(best.delta) + " below threshold " +
                                  std::to_string(opt.delta_threshold),
                              best);
  }
  if (best.runner_up_ratio >= opt.ambiguity_ratio) {
    throw IdentificationError(IdentificationError::Kind::Ambiguous, "identification: two correlation peaks within " +
                                                                        std::to_string(1 - opt.ambiguity_ratio) +
                                                                        " of each other",
                              best);
  }
  return best;
}

double snr_delta(double length, double eta) {
  if (!(length >= 1) || !(eta > 0 && eta <= 1)) throw ParameterError("snr_delta: need L >= 1 and eta in (0, 1]");
  return std::sqrt(length * eta);
}

std::uint64_t min_sync_length(double eta) {
  if (!(eta > 0 && eta <= 1)) throw ParameterError("min_sync_length: eta must lie in (0, 1]");
  const double x = 100.0 / eta;
  // values within rounding of an integer (100 / 1e-3) are not pushed up by one
  const double r = std::nearbyint(x);
  return static_cast<std::uint64_t>(std::abs(x - r) <= 1e-9 * r ? r : std::ceil(x));
}

SyncReport recover(const EventRecord& rec, std::span<const SyncString> codes, const SyncOptions& opt) {
  std::vector<std::int64_t> ts(rec.events.size());
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = rec.events[i].t_ps;
  SyncReport rep;
  const double coarse = estimate_clock_fft(ts, opt.period_hint_ps, opt.n_f);
  rep.clock = refine_clock_lts(ts, coarse, opt.lts);
  rep.slots = demarcate_slots(rec.events, rep.clock, opt.gate_ps, opt.max_slots);

  for (std::size_t s = 0; s < rep.slots.clusters.size(); ++s) {
    SlotReport sr;
    sr.cluster = rep.slots.clusters[s];
    std::int64_t origin = 0;
    bool found = false;
    for (std::size_t i = 0; i < rec.events.size(); ++i) {
      if (rep.slots.label[i] == static_cast<int>(s)) {
        origin = period_index(rec.events[i].t_ps, sr.cluster, rep.clock.period_ps);
        found = true;
        break;
      }
    }
    if (!found) {
      sr.failure = "empty slot";
      rep.reports.push_back(sr);
      continue;
    }
    const auto frame = extract_received_frame(rec.events, rep.slots, static_cast<int>(s), opt.frame, origin);
    try {
      auto id = identify_transmitter(frame, codes, opt.identify);
      id.offset_ps = sr.cluster.center_ps + static_cast<double>(id.start_period) * rep.clock.period_ps;
      sr.id = id;
    } catch (const IdentificationError& e) {
      sr.failure = e.what();
      sr.ambiguous = e.kind() == IdentificationError::Kind::Ambiguous;
      sr.id = e.best();
    }
    rep.reports.push_back(sr);
  }
  return rep;
}

}  // namespace qan
