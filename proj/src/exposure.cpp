#include "agriscan/exposure.hpp"

#include "agriscan/common.hpp"

#include <algorithm>
#include <cmath>

namespace agriscan {

namespace {

constexpr std::array<double, 31> kThirdStops = {1.0, 1.1, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.5, 2.8, 3.2,
                                                3.5, 4.0, 4.5, 5.0, 5.6, 6.3, 7.1, 8.0, 9.0, 10.0, 11.0,
                                                13.0, 14.0, 16.0, 18.0, 20.0, 22.0, 25.0, 29.0, 32.0};

std::size_t nearest_stop(double f) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < kThirdStops.size(); ++k) {
    if (std::abs(kThirdStops[k] - f) < std::abs(kThirdStops[best] - f)) best = k;
  }
  return best;
}

}  // namespace

std::span<const double> third_stop_sequence() { return kThirdStops; }

std::uint64_t Histogram8::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

Histogram8 compute_histogram(std::span<const GrayImage> images) {
  if (images.empty()) fail(ErrorCode::EmptyInput, "no images for the histogram");
  Histogram8 h;
  for (const GrayImage& img : images) {
    if (img.pixels.empty()) fail(ErrorCode::EmptyInput, "empty image");
    if (img.pixels.size() != static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height)) {
      fail(ErrorCode::InvalidArgument, "image size does not match its pixel buffer");
    }
    for (std::uint8_t v : img.pixels) ++h.counts[v >> 5];
  }
  return h;
}

void ExposureState::validate() const {
  const ExposureLimits& l = limits;
  if (l.iso_min <= 0 || l.iso_min > l.iso_max || !(l.f_min > 0.0) || l.f_min > l.f_max ||
      !(l.shutter_min_ms > 0.0) || l.shutter_min_ms > l.shutter_max_ms) {
    fail(ErrorCode::InvalidParams, "inconsistent exposure limits");
  }
  if (iso < l.iso_min || iso > l.iso_max || f_stop < l.f_min || f_stop > l.f_max || shutter_ms < l.shutter_min_ms ||
      shutter_ms > l.shutter_max_ms) {
    fail(ErrorCode::OutOfRange, "exposure state outside its limits");
  }
}

std::string to_string(ExposureAction a) {
  switch (a) {
    case ExposureAction::NoChange: return "NoChange";
    case ExposureAction::IsoUp: return "IsoUp";
    case ExposureAction::IsoDown: return "IsoDown";
    case ExposureAction::ApertureOpen: return "ApertureOpen";
    case ExposureAction::ApertureClose: return "ApertureClose";
    case ExposureAction::ShutterUp: return "ShutterUp";
    case ExposureAction::ShutterDown: return "ShutterDown";
    case ExposureAction::Saturated: return "Saturated";
  }
  return "Unknown";
}

ExposureDecision exposure_step(const Histogram8& hist, const ExposureState& state, const ExposureParams& params) {
  state.validate();
  ExposureDecision out{state, ExposureAction::NoChange};
  const std::uint64_t total = hist.total();
  if (total == 0) fail(ErrorCode::EmptyInput, "empty histogram");
  const double under = static_cast<double>(hist.counts[0]) / static_cast<double>(total);
  const double over = static_cast<double>(hist.counts[7]) / static_cast<double>(total);
  if (std::abs(under - over) <= params.tolerance) return out;

  const ExposureLimits& l = state.limits;
  ExposureState& s = out.state;
  const std::size_t stop = nearest_stop(state.f_stop);
  if (under > over) {
    if (s.iso < l.iso_max) {
      s.iso = std::min(s.iso + params.iso_step, l.iso_max);
      out.action = ExposureAction::IsoUp;
    } else if (stop > 0 && kThirdStops[stop - 1] >= l.f_min - 1e-9 && s.f_stop > l.f_min) {
      s.f_stop = kThirdStops[stop - 1];
      out.action = ExposureAction::ApertureOpen;
    } else if (s.shutter_ms < l.shutter_max_ms) {
      s.shutter_ms = std::min(s.shutter_ms + params.shutter_step_ms, l.shutter_max_ms);
      out.action = ExposureAction::ShutterUp;
    } else {
      out.action = ExposureAction::Saturated;
    }
  } else {
    if (s.iso > l.iso_min) {
      s.iso = std::max(s.iso - params.iso_step, l.iso_min);
      out.action = ExposureAction::IsoDown;
    } else if (stop + 1 < kThirdStops.size() && kThirdStops[stop + 1] <= l.f_max + 1e-9 && s.f_stop < l.f_max) {
      s.f_stop = kThirdStops[stop + 1];
      out.action = ExposureAction::ApertureClose;
    } else if (s.shutter_ms > l.shutter_min_ms) {
      s.shutter_ms = std::max(s.shutter_ms - params.shutter_step_ms, l.shutter_min_ms);
      out.action = ExposureAction::ShutterDown;
    } else {
      out.action = ExposureAction::Saturated;
    }
  }
  return out;
}

std::vector<ExposureTraceRow> exposure_replay(std::span<const Histogram8> histograms, const ExposureState& initial,
                                              const ExposureParams& params) {
  std::vector<ExposureTraceRow> trace;
  ExposureState s = initial;
  int step = 0;
  for (const Histogram8& h : histograms) {
    const ExposureDecision d = exposure_step(h, s, params);
    s = d.state;
    trace.push_back({step++, s, d.action});
  }
  return trace;
}

}  // namespace agriscan
