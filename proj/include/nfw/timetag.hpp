#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace nfw {

/// Picosecond timestamp. Signed so that differences never wrap.
using Picoseconds = std::int64_t;

struct TimeTag {
  Picoseconds time = 0;
  std::uint8_t channel = 0;

  friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

enum class ExcitationMode : std::uint8_t { pulsed, cw };

struct ExcitationDescriptor {
  ExcitationMode mode = ExcitationMode::pulsed;
  double repetition_period_ns = 200.0;
  double wavelength_nm = 405.0;
  double power_nw = 0.0;

  friend bool operator==(const ExcitationDescriptor&, const ExcitationDescriptor&) = default;
};

struct StreamMeta {
  Picoseconds resolution = 1;  ///< ps per tick
  Picoseconds duration = 0;    ///< total span, >= last tag time
  std::optional<ExcitationDescriptor> excitation;
  std::optional<std::uint64_t> rng_seed;

  friend bool operator==(const StreamMeta&, const StreamMeta&) = default;
};

/// Validated, immutable sequence of detection events.
///
/// Tags are sorted by time (ties across channels allowed); within a channel
/// times are strictly increasing. Construction rejects anything else with a
/// ValidationError carrying the offending index; nothing is re-sorted.
class TagStream {
 public:
  TagStream() = default;
  TagStream(std::vector<TimeTag> tags, StreamMeta meta);

  [[nodiscard]] std::span<const TimeTag> tags() const noexcept { return tags_; }
  [[nodiscard]] const StreamMeta& meta() const noexcept { return meta_; }
  [[nodiscard]] std::size_t size() const noexcept { return tags_.size(); }
  [[nodiscard]] bool empty() const noexcept { return tags_.empty(); }

  friend bool operator==(const TagStream&, const TagStream&) = default;

 private:
  std::vector<TimeTag> tags_;
  StreamMeta meta_;
};

/// Throws ValidationError (with index) if `tags` break the stream ordering rules.
void validate_tags(std::span<const TimeTag> tags);

enum class TagFormat { binary, csv };

/// Binary layout: "NTAG", u16 version (1), u16 flags, u64 count,
/// u64 resolution_ps, then count x {i64 time_ps, u8 channel, 7 zero bytes}.
/// Little-endian throughout. Only tags and resolution are stored; the rest of
/// StreamMeta travels in the sidecar config.
inline constexpr std::uint16_t kNtagVersion = 1;
inline constexpr std::size_t kNtagHeaderSize = 24;
inline constexpr std::size_t kNtagRecordSize = 16;

[[nodiscard]] std::vector<std::byte> write_tags(const TagStream& stream, TagFormat format);

/// Inverse of write_tags. The returned meta has the stored resolution (1 ps
/// for CSV) and duration equal to the last tag time.
[[nodiscard]] TagStream read_tags(std::span<const std::byte> bytes, TagFormat format);

struct ChannelTimes {
  std::vector<Picoseconds> ch0;
  std::vector<Picoseconds> ch1;
};

[[nodiscard]] ChannelTimes split_channels(const TagStream& stream);

}  // namespace nfw
