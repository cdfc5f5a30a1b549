#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace agriscan {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

struct Histogram8 {
  std::array<std::uint64_t, 8> counts{};
  std::uint64_t total() const;
};

/// Pooled 8-bin histogram, bin k = value >> 5. Throws EmptyInput.
Histogram8 compute_histogram(std::span<const GrayImage> images);

struct ExposureLimits {
  int iso_min = 100;
  int iso_max = 3200;
  double f_min = 5.6;
  double f_max = 22.0;
  double shutter_min_ms = 5.0;
  double shutter_max_ms = 40.0;
};

struct ExposureState {
  int iso = 400;
  double f_stop = 14.0;
  double shutter_ms = 10.0;
  ExposureLimits limits;

  void validate() const;
};

enum class ExposureAction { NoChange, IsoUp, IsoDown, ApertureOpen, ApertureClose, ShutterUp, ShutterDown, Saturated };

std::string to_string(ExposureAction a);

struct ExposureParams {
  double tolerance = 0.01;  // |under - over| as a fraction of all pixels
  int iso_step = 100;
  double shutter_step_ms = 5.0;
};

/// Third-stop aperture sequence from f/1 to f/32.
std::span<const double> third_stop_sequence();

struct ExposureDecision {
  ExposureState state;
  ExposureAction action = ExposureAction::NoChange;
};

/// One controller step. Brightening raises ISO, then opens the aperture one
/// third stop, then lengthens the shutter; darkening mirrors it. Exactly one
/// parameter moves per step.
ExposureDecision exposure_step(const Histogram8& hist, const ExposureState& state, const ExposureParams& params = {});

struct ExposureTraceRow {
  int step = 0;
  ExposureState state;  // after the step
  ExposureAction action = ExposureAction::NoChange;
};

/// Feeds recorded histograms through the controller in order.
std::vector<ExposureTraceRow> exposure_replay(std::span<const Histogram8> histograms, const ExposureState& initial,
                                              const ExposureParams& params = {});

}  // namespace agriscan
