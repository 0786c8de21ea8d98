#include "evline/events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "evline/io.hpp"

namespace evline {

EventStream load_events(const std::string& path, int width, int height) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open event file " + path);
  EventStream s;
  s.width = width;
  s.height = height;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    long long t, x, y, p;
    std::string extra;
    if (!(ss >> t >> x >> y >> p) || (ss >> extra))
      throw ParseError("expected `t_us x y p`", lineno);
    if (p == 0) p = -1;
    if (p != -1 && p != 1) throw ParseError("polarity must be -1, 0 or 1", lineno);
    if (x < 0 || y < 0 || x >= width || y >= height)
      throw ParseError("event (" + std::to_string(x) + ", " + std::to_string(y) +
                           ") outside the " + std::to_string(width) + "x" +
                           std::to_string(height) + " sensor",
                       lineno);
    s.events.push_back({static_cast<std::int32_t>(x), static_cast<std::int32_t>(y), t,
                        static_cast<std::int8_t>(p)});
  }
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return s;
}

void save_events(const std::string& path, const EventStream& stream) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write event file " + path);
  std::string buf;
  buf.reserve(1 << 20);
  for (const auto& e : stream.events) {
    buf += std::to_string(e.t);
    buf += ' ';
    buf += std::to_string(e.x);
    buf += ' ';
    buf += std::to_string(e.y);
    buf += e.p > 0 ? " 1\n" : " -1\n";
    if (buf.size() > (1u << 20) - 64) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

std::vector<Event> slice_window(const EventStream& stream, TimeUs t_center, std::size_t n_events,
                                WindowDirection direction) {
  if (n_events == 0) throw std::invalid_argument("slice_window: n_events must be >= 1");
  const auto& ev = stream.events;
  if (ev.empty()) return {};
  auto split = std::lower_bound(ev.begin(), ev.end(), t_center,
                                [](const Event& e, TimeUs t) { return e.t < t; });
  std::ptrdiff_t lo, hi;  // half-open [lo, hi)
  if (direction == WindowDirection::kBefore) {
    hi = std::upper_bound(ev.begin(), ev.end(), t_center,
                          [](TimeUs t, const Event& e) { return t < e.t; }) -
         ev.begin();
    lo = std::max<std::ptrdiff_t>(0, hi - static_cast<std::ptrdiff_t>(n_events));
  } else {
    lo = hi = split - ev.begin();
    const auto n = static_cast<std::ptrdiff_t>(ev.size());
    while (static_cast<std::size_t>(hi - lo) < n_events && (lo > 0 || hi < n)) {
      if (hi >= n) {
        --lo;
      } else if (lo <= 0) {
        ++hi;
      } else if (t_center - ev[lo - 1].t <= ev[hi].t - t_center) {
        --lo;
      } else {
        ++hi;
      }
    }
  }
  return {ev.begin() + lo, ev.begin() + hi};
}

Image render_binary(std::span<const Event> events, int width, int height) {
  Image img = Image::Zero(height, width);
  for (const auto& e : events) img(e.y, e.x) = 1.0f;
  return img;
}

Image render_timestamp(std::span<const Event> events, int width, int height, int polarity) {
  Image img = Image::Zero(height, width);
  if (events.empty()) return img;
  TimeUs t_min = events.front().t, t_max = events.front().t;
  for (const auto& e : events) {
    t_min = std::min(t_min, e.t);
    t_max = std::max(t_max, e.t);
  }
  // +1 keeps the oldest event strictly above zero.
  const double span = double(t_max - t_min) + 1.0;
  for (const auto& e : events) {
    if (e.p != polarity) continue;
    const float v = static_cast<float>((double(e.t - t_min) + 1.0) / span);
    img(e.y, e.x) = std::max(img(e.y, e.x), v);
  }
  return img;
}

const char* to_string(ImageKind kind) {
  switch (kind) {
    case ImageKind::kBinary: return "binary";
    case ImageKind::kTimestampPos: return "timestamp+";
    case ImageKind::kTimestampNeg: return "timestamp-";
  }
  return "?";
}

std::size_t frame_count(const EventStream& stream, TimeUs frame_interval) {
  if (frame_interval <= 0) throw std::invalid_argument("frame interval must be positive");
  if (stream.empty()) return 0;
  const TimeUs span = stream.events.back().t - stream.events.front().t;
  return std::max<std::size_t>(1, static_cast<std::size_t>((span + frame_interval - 1) / frame_interval));
}

std::vector<std::size_t> window_counts(const EventStream& stream, TimeUs frame_interval,
                                       std::span<const double> fractions) {
  const std::size_t frames = frame_count(stream, frame_interval);
  const double mean = frames ? double(stream.size()) / double(frames) : 0.0;
  std::vector<std::size_t> counts;
  for (double f : fractions)
    counts.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * mean))));
  return counts;
}

EventFrame build_frame(const EventStream& stream, int frame_id, TimeUs t_center,
                       std::span<const std::size_t> windows,
                       std::span<const Representation> representations) {
  EventFrame f;
  f.frame_id = frame_id;
  f.t_center = t_center;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto events = slice_window(stream, t_center, windows[w], WindowDirection::kCentered);
    for (auto rep : representations) {
      if (rep == Representation::kBinary) {
        f.images.push_back({ImageKind::kBinary, w, windows[w],
                            render_binary(events, stream.width, stream.height)});
      } else {
        f.images.push_back({ImageKind::kTimestampPos, w, windows[w],
                            render_timestamp(events, stream.width, stream.height, +1)});
        f.images.push_back({ImageKind::kTimestampNeg, w, windows[w],
                            render_timestamp(events, stream.width, stream.height, -1)});
      }
    }
  }
  return f;
}

std::vector<EventFrame> build_frames(const EventStream& stream, TimeUs frame_interval,
                                     std::span<const std::size_t> windows,
                                     std::span<const Representation> representations) {
  if (windows.empty()) throw std::invalid_argument("build_frames: no windows");
  const std::size_t n = frame_count(stream, frame_interval);
  std::vector<EventFrame> frames;
  frames.reserve(n);
  const TimeUs t0 = n ? stream.events.front().t : 0;
  for (std::size_t k = 0; k < n; ++k) {
    const TimeUs begin = t0 + TimeUs(k) * frame_interval;
    auto f = build_frame(stream, static_cast<int>(k), begin + frame_interval / 2, windows,
                         representations);
    f.t_begin = begin;
    f.t_end = begin + frame_interval;
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace evline
