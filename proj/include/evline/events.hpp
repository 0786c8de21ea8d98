#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evline/common.hpp"

namespace evline {

struct Event {
  std::int32_t x = 0;
  std::int32_t y = 0;
  TimeUs t = 0;
  std::int8_t p = 1;  ///< -1 or +1
};

/// Time-sorted events of one sensor. Immutable after construction by convention.
struct EventStream {
  std::vector<Event> events;
  int width = 0;
  int height = 0;

  bool empty() const { return events.empty(); }
  std::size_t size() const { return events.size(); }
};

/// Event file: one ASCII record per line, `t_us x y p`, p in {-1, 1}
/// (0 is read as -1). Records are stably sorted by time on load.
EventStream load_events(const std::string& path, int width, int height);
void save_events(const std::string& path, const EventStream& stream);

enum class WindowDirection { kBefore, kCentered };

/// At most n_events events nearest to t_center, returned in time order.
/// kBefore takes the latest events with t <= t_center; kCentered the events
/// minimizing |t - t_center| (equal distances prefer the earlier event).
std::vector<Event> slice_window(const EventStream& stream, TimeUs t_center, std::size_t n_events,
                                WindowDirection direction = WindowDirection::kCentered);

/// Row-major single-channel image indexed (row = y, col = x).
using Image = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 1 where at least one event fired (either polarity), 0 elsewhere.
Image render_binary(std::span<const Event> events, int width, int height);

/// Latest timestamp of events of the given polarity per pixel, normalized
/// so that the window's [t_min, t_max] maps into (0, 1]; 0 where no such event.
/// t_min / t_max are taken over all events in the window.
Image render_timestamp(std::span<const Event> events, int width, int height, int polarity);

enum class Representation { kBinary, kTimestamp };
enum class ImageKind { kBinary, kTimestampPos, kTimestampNeg };

const char* to_string(ImageKind kind);

struct FrameImage {
  ImageKind kind = ImageKind::kBinary;
  std::size_t window_index = 0;
  std::size_t window_events = 0;
  Image image;
};

struct EventFrame {
  int frame_id = 0;
  TimeUs t_center = 0;
  /// Frame interval (t_begin, t_end]; the first frame also owns t_begin.
  TimeUs t_begin = 0;
  TimeUs t_end = 0;
  std::vector<FrameImage> images;
};

/// Number of frame intervals covering the stream, at least 1 for a
/// nonempty stream.
std::size_t frame_count(const EventStream& stream, TimeUs frame_interval);

/// Window sizes as fractions of the mean per-interval event count.
std::vector<std::size_t> window_counts(const EventStream& stream, TimeUs frame_interval,
                                       std::span<const double> fractions);

/// One frame per interval tick, each holding |windows| x |images per
/// representation| images rendered from centered count windows. The
/// timestamp representation contributes one image per polarity.
std::vector<EventFrame> build_frames(const EventStream& stream, TimeUs frame_interval,
                                     std::span<const std::size_t> windows,
                                     std::span<const Representation> representations);

/// Single frame at an arbitrary time (used by build_frames).
EventFrame build_frame(const EventStream& stream, int frame_id, TimeUs t_center,
                       std::span<const std::size_t> windows,
                       std::span<const Representation> representations);

}  // namespace evline
