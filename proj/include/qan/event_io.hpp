#pragma once

// Event record files.
//
// Events: 16-byte header ("QANE", u32 version, u64 receiver period ps), then
//         packed 9-byte records (u64 timestamp ps, u8 channel 0..3 = H V D A),
//         little-endian, timestamps non-decreasing.
// Truth:  16-byte header ("QANT", u32 version, u64 record count), then 12-byte
//         records (i32 source, u64 pulse index) in event order.
// CSV:    "timestamp_ps,channel" with channel as H/V/D/A.

#include <iosfwd>
#include <string>

#include "qan/channel.hpp"

namespace qan {

void write_events(std::ostream& os, const EventRecord& rec);
/// Throws SchemaError on bad magic, truncation, unknown channel or decreasing timestamps.
EventRecord read_events(std::istream& is);

void write_truth(std::ostream& os, const EventRecord& rec);
/// Fills rec.truth; the count must match rec.events.
void read_truth(std::istream& is, EventRecord& rec);

void write_events_csv(std::ostream& os, const EventRecord& rec);
EventRecord read_events_csv(std::istream& is, std::int64_t period_ps);

char channel_name(Detector d);

void save_events(const std::string& path, const EventRecord& rec);
EventRecord load_events(const std::string& path);

}  // namespace qan
