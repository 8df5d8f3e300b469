#include "qan/protocol_io.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include "qan/binary.hpp"
#include "qan/errors.hpp"

namespace qan {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 32;

struct Header {
  int id = 0;
  std::uint64_t L = 0;
  std::uint64_t L1 = 0;
  std::uint64_t M = 0;
};

Header parse_text_header(std::istringstream& in, std::string& values) {
  Header h;
  long long L = 0, L1 = 0, M = 0;
  if (!(in >> h.id >> L >> L1 >> M >> values)) throw SchemaError("record: expected 'id L L1 M values'");
  if (L <= 0 || L1 <= 0 || M <= 0) throw SchemaError("record: L, L1 and M must be positive");
  std::string extra;
  if (in >> extra) throw SchemaError("record: trailing fields");
  h.L = static_cast<std::uint64_t>(L);
  h.L1 = static_cast<std::uint64_t>(L1);
  h.M = static_cast<std::uint64_t>(M);
  if (h.L % h.L1 != 0) throw SchemaError("record: L1 does not divide L");
  return h;
}

void check_binary_header(const Header& h) {
  if (h.L == 0 || h.L1 == 0 || h.M == 0 || h.L > kMaxLength || h.M > kMaxLength) {
    throw SchemaError("record: implausible header");
  }
  if (h.L % h.L1 != 0) throw SchemaError("record: L1 does not divide L");
}

void write_header(std::ostream& os, const char (&magic)[5], const Header& h) {
  bin::put_magic(os, magic);
  bin::put<std::uint32_t>(os, kVersion);
  bin::put<std::int32_t>(os, h.id);
  bin::put<std::uint64_t>(os, h.L);
  bin::put<std::uint64_t>(os, h.L1);
  bin::put<std::uint64_t>(os, h.M);
}

Header read_header(std::istream& is, const char (&magic)[5]) {
  bin::expect_magic(is, magic);
  if (bin::get<std::uint32_t>(is) != kVersion) throw SchemaError("record: unsupported version");
  Header h;
  h.id = bin::get<std::int32_t>(is);
  h.L = bin::get<std::uint64_t>(is);
  h.L1 = bin::get<std::uint64_t>(is);
  h.M = bin::get<std::uint64_t>(is);
  check_binary_header(h);
  return h;
}

SyncString sync_from_values(int id, const std::vector<Ternary>& v, std::size_t L1) {
  const std::size_t periods = v.size() / L1;
  std::vector<Ternary> base(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(L1));
  for (std::size_t i = L1; i < v.size(); ++i) {
    if (v[i] != base[i % L1]) throw SchemaError("sync record: values are not L1-periodic");
  }
  try {
    return SyncString(id, std::move(base), periods);
  } catch (const ParameterError& e) {
    throw SchemaError(e.what());
  }
}

char symbol_char(const QubitSymbol& s) {
  static constexpr char kUpper[2][2] = {{'H', 'V'}, {'D', 'A'}};
  const char c = kUpper[static_cast<int>(s.basis)][s.bit & 1U];
  return s.intensity == Intensity::Decoy ? static_cast<char>(c + ('a' - 'A')) : c;
}

QubitSymbol symbol_from_char(char c) {
  QubitSymbol s;
  s.intensity = (c >= 'a' && c <= 'z') ? Intensity::Decoy : Intensity::Signal;
  switch (c) {
    case 'H': case 'h': s.basis = Basis::Z; s.bit = 0; break;
    case 'V': case 'v': s.basis = Basis::Z; s.bit = 1; break;
    case 'D': case 'd': s.basis = Basis::X; s.bit = 0; break;
    case 'A': case 'a': s.basis = Basis::X; s.bit = 1; break;
    default: throw SchemaError(std::string("frame record: bad symbol '") + c + "'");
  }
  return s;
}

std::uint8_t pack_symbol(const QubitSymbol& s) {
  return static_cast<std::uint8_t>((s.bit & 1U) | (s.basis == Basis::X ? 2U : 0U) |
                                   (s.intensity == Intensity::Decoy ? 4U : 0U) |
                                   (s.role == Role::Sync ? 8U : 0U));
}

QubitSymbol unpack_symbol(std::uint8_t b) {
  if (b & 0xF0U) throw SchemaError("frame record: reserved bits set");
  QubitSymbol s;
  s.bit = b & 1U;
  s.basis = (b & 2U) ? Basis::X : Basis::Z;
  s.intensity = (b & 4U) ? Intensity::Decoy : Intensity::Signal;
  s.role = (b & 8U) ? Role::Sync : Role::Random;
  return s;
}

void check_frame_roles(const BitFrame& f) {
  const std::size_t stride = f.interleave + 1;
  for (std::size_t i = 0; i < f.symbols.size(); ++i) {
    const bool sync = i % stride == 0;
    if ((f.symbols[i].role == Role::Sync) != sync) throw SchemaError("frame record: role/position mismatch");
    if (sync && f.symbols[i].basis != Basis::Z) throw SchemaError("frame record: sync symbol not in Z basis");
  }
}

}  // namespace

std::string sync_to_text(const SyncString& s, std::size_t interleave) {
  std::ostringstream out;
  out << s.id() << ' ' << s.length() << ' ' << s.period_length() << ' ' << interleave << ' ';
  for (std::size_t i = 0; i < s.length(); ++i) out << (s[i] == 1 ? '+' : '-');
  return out.str();
}

SyncString sync_from_text(const std::string& line) {
  std::istringstream in(line);
  std::string values;
  const Header h = parse_text_header(in, values);
  if (values.size() != h.L) throw SchemaError("sync record: value count != L");
  std::vector<Ternary> v(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == '+') v[i] = 1;
    else if (values[i] == '-') v[i] = -1;
    else throw SchemaError("sync record: values must be '+' or '-'");
  }
  return sync_from_values(h.id, v, h.L1);
}

std::string frame_to_text(const FrameRecord& r) {
  const std::size_t stride = r.frame.interleave + 1;
  std::ostringstream out;
  out << r.id << ' ' << r.frame.symbols.size() / stride << ' ' << r.period_length << ' '
      << r.frame.interleave << ' ';
  for (const auto& s : r.frame.symbols) out << symbol_char(s);
  return out.str();
}

FrameRecord frame_from_text(const std::string& line) {
  std::istringstream in(line);
  std::string values;
  const Header h = parse_text_header(in, values);
  if (values.size() != (h.M + 1) * h.L) throw SchemaError("frame record: symbol count != (M+1)L");
  FrameRecord r;
  r.id = h.id;
  r.period_length = h.L1;
  r.frame.interleave = h.M;
  r.frame.symbols.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    QubitSymbol s = symbol_from_char(values[i]);
    s.role = i % (h.M + 1) == 0 ? Role::Sync : Role::Random;
    r.frame.symbols[i] = s;
  }
  check_frame_roles(r.frame);
  return r;
}

void write_sync_binary(std::ostream& os, const SyncString& s, std::size_t interleave) {
  write_header(os, "QSYN", {s.id(), s.length(), s.period_length(), interleave});
  std::vector<char> packed((s.length() + 7) / 8, 0);
  for (std::size_t i = 0; i < s.length(); ++i) {
    if (s[i] == -1) packed[i / 8] = static_cast<char>(packed[i / 8] | (1 << (i % 8)));
  }
  os.write(packed.data(), static_cast<std::streamsize>(packed.size()));
}

SyncString read_sync_binary(std::istream& is) {
  const Header h = read_header(is, "QSYN");
  std::vector<char> packed((h.L + 7) / 8);
  is.read(packed.data(), static_cast<std::streamsize>(packed.size()));
  if (is.gcount() != static_cast<std::streamsize>(packed.size())) throw SchemaError("sync record: truncated");
  std::vector<Ternary> v(h.L);
  for (std::size_t i = 0; i < h.L; ++i) v[i] = (packed[i / 8] >> (i % 8)) & 1 ? -1 : 1;
  return sync_from_values(h.id, v, h.L1);
}

void write_frame_binary(std::ostream& os, const FrameRecord& r) {
  const std::size_t stride = r.frame.interleave + 1;
  write_header(os, "QFRM", {r.id, r.frame.symbols.size() / stride, r.period_length, r.frame.interleave});
  std::vector<char> bytes(r.frame.symbols.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(pack_symbol(r.frame.symbols[i]));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FrameRecord read_frame_binary(std::istream& is) {
  const Header h = read_header(is, "QFRM");
  std::vector<char> bytes((h.M + 1) * h.L);
  is.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != static_cast<std::streamsize>(bytes.size())) throw SchemaError("frame record: truncated");
  FrameRecord r;
  r.id = h.id;
  r.period_length = h.L1;
  r.frame.interleave = h.M;
  r.frame.symbols.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) r.frame.symbols[i] = unpack_symbol(static_cast<std::uint8_t>(bytes[i]));
  check_frame_roles(r.frame);
  return r;
}

}  // namespace qan
