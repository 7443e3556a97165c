#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pitchlab/config.hpp"
#include "pitchlab/rng.hpp"
#include "pitchlab/sim.hpp"

namespace pitchlab::render {

constexpr int kFrameWidth = 40;
constexpr int kFrameHeight = 30;
constexpr int kFrameChannels = 3;
constexpr int kFrameSize = kFrameWidth * kFrameHeight * kFrameChannels;

struct Frame {
  std::array<uint8_t, kFrameSize> data{};

  uint8_t& at(int row, int col, int ch) {
    return data[(row * kFrameWidth + col) * kFrameChannels + ch];
  }
  uint8_t at(int row, int col, int ch) const {
    return data[(row * kFrameWidth + col) * kFrameChannels + ch];
  }
  bool operator==(const Frame& o) const { return data == o.data; }
};

using Rgb = std::array<float, 3>;

// A baked background: cylindrical panorama plus the flat-surface palette used
// for rows the panorama does not cover.
struct SceneVariant {
  int id = 0;
  int width = 0;   // azimuth samples
  int height = 0;  // elevation samples
  std::vector<uint8_t> panorama;  // row-major RGB
  Rgb wall_color{};
  Rgb floor_color{};
  Rgb line_color{};
  float light_scale = 1.0f;

  // Bilinear in azimuth (wrapping), nearest in elevation. az in radians.
  Rgb sample(double az, double v_frac) const;
};

struct RenderConfig {
  double fov = 70.0 * M_PI / 180.0;
  double camera_height = 0.20;
  int horizon_row = 11;
  double wall_height = 0.30;
  int fallen_horizon_shift = 14;
  sim::PitchGeometry pitch;
  Rgb target_goal_color{60.0f, 90.0f, 220.0f};
  Rgb own_goal_color{220.0f, 70.0f, 50.0f};
  Rgb opponent_color{45.0f, 45.0f, 52.0f};

  double focal_px() const { return (kFrameWidth / 2.0) / std::tan(fov / 2.0); }
  static RenderConfig from(const Config& c);
};

struct AugmentConfig {
  double brightness_range = 25.5;
  double contrast_range = 0.1;
  double saturation_range = 0.1;
  double hue_range = 0.1;
  static AugmentConfig from(const Config& c);
};

// Procedurally baked stand-ins for the captured backgrounds: four variants
// with distinct lighting and palettes. Deterministic.
std::vector<SceneVariant> bake_default_variants(int count);

// Flat panorama container: magic "PANO", version, width, height, RGB bytes.
std::vector<uint8_t> serialize_panorama(const SceneVariant& v);
SceneVariant deserialize_panorama(const std::vector<uint8_t>& bytes);
void save_variant(const std::string& path, const SceneVariant& v);
SceneVariant load_variant(const std::string& path);

Frame render_egocentric(const sim::WorldState& world, int agent_id, const SceneVariant& scene,
                        const RenderConfig& config);

// Camera azimuth (heading + head_pan, wrapped).
double camera_azimuth(const sim::WorldState& world, int agent_id);
// Absolute bearing error between camera axis and ball, radians.
double gaze_error(const sim::WorldState& world, int agent_id);
// True when the ball projects inside the frame and the agent is upright.
bool ball_in_view(const sim::WorldState& world, int agent_id, const RenderConfig& config);

struct CalibrationStats {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> mean;    // per pixel, per channel
  std::vector<float> stddev;  // population
};

CalibrationStats fit_stats(const std::vector<Frame>& frames);
std::pair<CalibrationStats, CalibrationStats> fit_calibration(const std::vector<Frame>& a,
                                                              const std::vector<Frame>& b);
Frame calibrate_colors(const Frame& frame, const CalibrationStats& nerf_stats,
                       const CalibrationStats& real_stats);
std::vector<uint8_t> serialize_stats(const CalibrationStats& s);
CalibrationStats deserialize_stats(const std::vector<uint8_t>& bytes);

Frame apply_brightness(const Frame& f, double offset);
Frame apply_contrast(const Frame& f, double factor);
Frame apply_saturation(const Frame& f, double factor);
Frame apply_hue(const Frame& f, double radians);
Frame augment(const Frame& f, Rng& rng, const AugmentConfig& params);

sim::BallParams randomize_ball(Rng& rng, const sim::BallParams& base, double scale_min = 0.8,
                               double scale_max = 1.2);
const SceneVariant& sample_scene(Rng& rng, const std::vector<SceneVariant>& variants);

}  // namespace pitchlab::render
