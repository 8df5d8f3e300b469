#pragma once

// Text and binary records for sync strings and frames.
//
// Text:   "<id> <L> <L1> <M> <values>" on one line.
//         sync values are '+'/'-'; frame symbols are H V D A for signal
//         intensity, h v d a for decoy. Sync positions must be H/V (h/v).
// Binary: magic "QSYN"/"QFRM", u32 version, i32 id, u64 L, u64 L1, u64 M,
//         little-endian. Sync values are bit-packed (bit set = -1, LSB first);
//         frames use one byte per symbol: bit0 bit, bit1 basis X,
//         bit2 decoy, bit3 sync role.

#include <iosfwd>
#include <string>

#include "qan/protocol.hpp"

namespace qan {

struct FrameRecord {
  int id = 0;
  std::size_t period_length = 0;  // L1 of the sync string carried by the frame
  BitFrame frame;
};

std::string sync_to_text(const SyncString& s, std::size_t interleave = 1);
SyncString sync_from_text(const std::string& line);

std::string frame_to_text(const FrameRecord& r);
FrameRecord frame_from_text(const std::string& line);

void write_sync_binary(std::ostream& os, const SyncString& s, std::size_t interleave = 1);
SyncString read_sync_binary(std::istream& is);

void write_frame_binary(std::ostream& os, const FrameRecord& r);
FrameRecord read_frame_binary(std::istream& is);

}  // namespace qan
