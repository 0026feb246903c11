#include "nfw/timetag.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <limits>
#include <string>
#include <string_view>

#include "nfw/errors.hpp"

namespace nfw {

namespace {

constexpr std::array<char, 4> kMagic{'N', 'T', 'A', 'G'};
constexpr std::string_view kCsvHeader = "time_ps,channel";

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::byte>(u & 0xFFu));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get_le(std::span<const std::byte> in, std::size_t offset) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<U>(static_cast<U>(std::to_integer<unsigned>(in[offset + i])) << (8 * i));
  }
  return static_cast<T>(u);
}

std::vector<std::byte> write_binary(const TagStream& stream) {
  std::vector<std::byte> out;
  out.reserve(kNtagHeaderSize + kNtagRecordSize * stream.size());
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_le<std::uint16_t>(out, kNtagVersion);
  put_le<std::uint16_t>(out, 0);
  put_le<std::uint64_t>(out, stream.size());
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(stream.meta().resolution));
  for (const TimeTag& t : stream.tags()) {
    put_le<std::int64_t>(out, t.time);
    out.push_back(static_cast<std::byte>(t.channel));
    out.insert(out.end(), 7, std::byte{0});
  }
  return out;
}

std::vector<std::byte> write_csv(const TagStream& stream) {
  std::string text;
  text.reserve(16 + 24 * stream.size());
  text.append(kCsvHeader);
  text.push_back('\n');
  std::array<char, 32> buf{};
  for (const TimeTag& t : stream.tags()) {
    char* end = std::to_chars(buf.data(), buf.data() + buf.size(), t.time).ptr;
    text.append(buf.data(), end);
    text.push_back(',');
    end = std::to_chars(buf.data(), buf.data() + buf.size(), unsigned{t.channel}).ptr;
    text.append(buf.data(), end);
    text.push_back('\n');
  }
  std::vector<std::byte> out(text.size());
  std::memcpy(out.data(), text.data(), text.size());
  return out;
}

TagStream read_binary(std::span<const std::byte> in) {
  if (in.size() < kNtagHeaderSize) {
    throw FormatError("NTAG: truncated header (" + std::to_string(in.size()) + " bytes)");
  }
  for (std::size_t i = 0; i < kMagic.size(); ++i) {
    if (std::to_integer<char>(in[i]) != kMagic[i]) throw FormatError("NTAG: magic number mismatch");
  }
  const auto version = get_le<std::uint16_t>(in, 4);
  if (version != kNtagVersion) {
    throw FormatError("NTAG: unsupported version " + std::to_string(version));
  }
  const auto count = get_le<std::uint64_t>(in, 8);
  const auto resolution = get_le<std::int64_t>(in, 16);
  const std::size_t payload = in.size() - kNtagHeaderSize;
  if (count > payload / kNtagRecordSize || payload != count * kNtagRecordSize) {
    throw FormatError("NTAG: framing error, header declares " + std::to_string(count) +
                          " records but payload holds " + std::to_string(payload) + " bytes",
                      static_cast<std::ptrdiff_t>(payload / kNtagRecordSize));
  }
  std::vector<TimeTag> tags(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = kNtagHeaderSize + i * kNtagRecordSize;
    tags[i].time = get_le<std::int64_t>(in, off);
    tags[i].channel = std::to_integer<std::uint8_t>(in[off + 8]);
  }
  StreamMeta meta;
  meta.resolution = resolution;
  meta.duration = tags.empty() ? 0 : tags.back().time;
  return TagStream(std::move(tags), meta);
}

TagStream read_csv(std::span<const std::byte> in) {
  const std::string_view text(reinterpret_cast<const char*>(in.data()), in.size());
  std::vector<TimeTag> tags;
  bool header_seen = false;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kCsvHeader) throw FormatError("CSV: expected header '" + std::string(kCsvHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto record = static_cast<std::ptrdiff_t>(tags.size());
    const std::size_t comma = line.find(',');
    if (comma == std::string_view::npos) {
      throw FormatError("CSV: line " + std::to_string(line_no) + ": expected 'time_ps,channel'", record);
    }
    TimeTag tag;
    unsigned channel = 0;
    const char* b = line.data();
    auto r1 = std::from_chars(b, b + comma, tag.time);
    auto r2 = std::from_chars(b + comma + 1, b + line.size(), channel);
    if (r1.ec != std::errc{} || r1.ptr != b + comma || r2.ec != std::errc{} ||
        r2.ptr != b + line.size() || channel > std::numeric_limits<std::uint8_t>::max()) {
      throw FormatError("CSV: line " + std::to_string(line_no) + ": malformed record", record);
    }
    tag.channel = static_cast<std::uint8_t>(channel);
    tags.push_back(tag);
  }
  if (!header_seen) throw FormatError("CSV: missing header");
  StreamMeta meta;
  meta.duration = tags.empty() ? 0 : tags.back().time;
  return TagStream(std::move(tags), meta);
}

}  // namespace

void validate_tags(std::span<const TimeTag> tags) {
  std::array<Picoseconds, 256> last{};
  last.fill(-1);
  Picoseconds prev = 0;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const TimeTag& t = tags[i];
    const auto idx = static_cast<std::ptrdiff_t>(i);
    if (t.time < 0) throw ValidationError("negative time at index " + std::to_string(i), idx);
    if (t.time < prev) throw ValidationError("non-monotonic time at index " + std::to_string(i), idx);
    if (t.time <= last[t.channel]) {
      throw ValidationError("duplicate time within channel " + std::to_string(t.channel) +
                                " at index " + std::to_string(i),
                            idx);
    }
    last[t.channel] = t.time;
    prev = t.time;
  }
}

TagStream::TagStream(std::vector<TimeTag> tags, StreamMeta meta)
    : tags_(std::move(tags)), meta_(std::move(meta)) {
  if (meta_.resolution <= 0) throw ValidationError("stream resolution must be positive");
  validate_tags(tags_);
  if (!tags_.empty() && meta_.duration < tags_.back().time) {
    throw ValidationError("stream duration shorter than last tag time");
  }
}

std::vector<std::byte> write_tags(const TagStream& stream, TagFormat format) {
  // Streams are validated on construction, so serialization cannot fail here.
  return format == TagFormat::binary ? write_binary(stream) : write_csv(stream);
}

TagStream read_tags(std::span<const std::byte> bytes, TagFormat format) {
  return format == TagFormat::binary ? read_binary(bytes) : read_csv(bytes);
}

ChannelTimes split_channels(const TagStream& stream) {
  ChannelTimes out;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const TimeTag& t = stream.tags()[i];
    if (t.channel == 0) {
      out.ch0.push_back(t.time);
    } else if (t.channel == 1) {
      out.ch1.push_back(t.time);
    } else {
      throw ValidationError("channel " + std::to_string(t.channel) + " outside {0,1} at index " +
                                std::to_string(i),
                            static_cast<std::ptrdiff_t>(i));
    }
  }
  return out;
}

}  // namespace nfw
