#include "qan/event_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "qan/binary.hpp"
#include "qan/errors.hpp"

namespace qan {

namespace {

constexpr std::uint32_t kVersion = 1;

Detector channel_from_name(const std::string& s, std::size_t line) {
  if (s == "H") return Detector::H;
  if (s == "V") return Detector::V;
  if (s == "D") return Detector::D;
  if (s == "A") return Detector::A;
  throw SchemaError("events csv line " + std::to_string(line) + ": unknown channel '" + s + "'");
}

}  // namespace

char channel_name(Detector d) { return "HVDA"[static_cast<int>(d) & 3]; }

void write_events(std::ostream& os, const EventRecord& rec) {
  bin::put_magic(os, "QANE");
  bin::put<std::uint32_t>(os, kVersion);
  bin::put<std::uint64_t>(os, static_cast<std::uint64_t>(rec.period_ps));
  for (const auto& e : rec.events) {
    bin::put<std::uint64_t>(os, static_cast<std::uint64_t>(e.t_ps));
    bin::put<std::uint8_t>(os, static_cast<std::uint8_t>(e.channel));
  }
}

EventRecord read_events(std::istream& is) {
  bin::expect_magic(is, "QANE");
  if (bin::get<std::uint32_t>(is) != kVersion) throw SchemaError("events: unsupported version");
  EventRecord rec;
  rec.period_ps = static_cast<std::int64_t>(bin::get<std::uint64_t>(is));
  if (rec.period_ps <= 0) throw SchemaError("events: receiver period must be positive");
  std::uint64_t t = 0;
  while (bin::try_get(is, t)) {
    std::uint8_t ch = 0;
    if (!bin::try_get(is, ch)) throw SchemaError("events: truncated record");
    if (ch > 3) throw SchemaError("events: unknown channel " + std::to_string(ch));
    if (t > static_cast<std::uint64_t>(INT64_MAX)) throw SchemaError("events: timestamp out of range");
    const auto ts = static_cast<std::int64_t>(t);
    if (!rec.events.empty() && ts < rec.events.back().t_ps) {
      throw SchemaError("events: timestamps decrease at record " + std::to_string(rec.events.size()));
    }
    rec.events.push_back({ts, static_cast<Detector>(ch)});
  }
  if (!rec.events.empty()) {
    rec.t_begin_ps = rec.events.front().t_ps;
    rec.t_end_ps = rec.events.back().t_ps + 1;
  }
  return rec;
}

void write_truth(std::ostream& os, const EventRecord& rec) {
  bin::put_magic(os, "QANT");
  bin::put<std::uint32_t>(os, kVersion);
  bin::put<std::uint64_t>(os, rec.truth.size());
  for (const auto& t : rec.truth) {
    bin::put<std::int32_t>(os, t.source);
    bin::put<std::uint64_t>(os, t.index);
  }
}

void read_truth(std::istream& is, EventRecord& rec) {
  bin::expect_magic(is, "QANT");
  if (bin::get<std::uint32_t>(is) != kVersion) throw SchemaError("truth: unsupported version");
  const auto n = bin::get<std::uint64_t>(is);
  if (n != rec.events.size()) throw SchemaError("truth: record count does not match events");
  rec.truth.resize(n);
  for (auto& t : rec.truth) {
    t.source = bin::get<std::int32_t>(is);
    t.index = bin::get<std::uint64_t>(is);
  }
}

void write_events_csv(std::ostream& os, const EventRecord& rec) {
  os << "timestamp_ps,channel\n";
  for (const auto& e : rec.events) os << e.t_ps << ',' << channel_name(e.channel) << '\n';
}

EventRecord read_events_csv(std::istream& is, std::int64_t period_ps) {
  EventRecord rec;
  rec.period_ps = period_ps;
  std::string line;
  std::size_t no = 0;
  while (std::getline(is, line)) {
    ++no;
    if (line.empty() || line[0] == '#' || line.rfind("timestamp_ps", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw SchemaError("events csv line " + std::to_string(no) + ": expected 2 fields");
    std::int64_t t = 0;
    std::istringstream ts(line.substr(0, comma));
    if (!(ts >> t) || t < 0) throw SchemaError("events csv line " + std::to_string(no) + ": bad timestamp");
    std::string ch = line.substr(comma + 1);
    if (!ch.empty() && ch.back() == '\r') ch.pop_back();
    if (!rec.events.empty() && t < rec.events.back().t_ps) {
      throw SchemaError("events csv line " + std::to_string(no) + ": timestamps decrease");
    }
    rec.events.push_back({t, channel_from_name(ch, no)});
  }
  if (!rec.events.empty()) {
    rec.t_begin_ps = rec.events.front().t_ps;
    rec.t_end_ps = rec.events.back().t_ps + 1;
  }
  return rec;
}

void save_events(const std::string& path, const EventRecord& rec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_events(os, rec);
}

EventRecord load_events(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_events(is);
}

}  // namespace qan
