#include "pitchlab/render.hpp"

#include <algorithm>
#include <cmath>

#include "pitchlab/report.hpp"

namespace pitchlab::render {

namespace {

constexpr double kTau = 2.0 * M_PI;

uint8_t quantize(double v) {
  return static_cast<uint8_t>(std::lround(clamp(v, 0.0, 255.0)));
}

double positive_mod(double a, double m) {
  double r = std::fmod(a, m);
  return r < 0 ? r + m : r;
}

struct FloatImage {
  std::array<float, kFrameSize> v{};
  float& at(int r, int c, int k) { return v[(r * kFrameWidth + c) * kFrameChannels + k]; }
};

Frame quantize_image(const FloatImage& img) {
  Frame f;
  for (int i = 0; i < kFrameSize; ++i) f.data[i] = quantize(img.v[i]);
  return f;
}

FloatImage to_float(const Frame& f) {
  FloatImage img;
  for (int i = 0; i < kFrameSize; ++i) img.v[i] = f.data[i];
  return img;
}

// Distance along (cos az, sin az) from `from` to the nearest pitch wall.
struct WallHit {
  double dist;
  int axis;  // 0 = x wall, 1 = y wall
  int end;   // 0 = low plane, 1 = high plane
  Vec2 point;
};

WallHit cast_to_wall(const Vec2& from, double az, const sim::PitchGeometry& pitch) {
  Vec2 d{std::cos(az), std::sin(az)};
  WallHit best{1e30, -1, -1, {}};
  auto consider = [&](int axis, double plane, int end) {
    double dir = axis == 0 ? d.x : d.y;
    if (std::abs(dir) < 1e-12) return;
    double origin = axis == 0 ? from.x : from.y;
    double t = (plane - origin) / dir;
    if (t <= 1e-9 || t >= best.dist) return;
    Vec2 p = from + d * t;
    double lateral = axis == 0 ? p.y : p.x;
    double extent = axis == 0 ? pitch.width : pitch.length;
    if (lateral < -1e-9 || lateral > extent + 1e-9) return;
    best = {t, axis, end, p};
  };
  consider(0, 0.0, 0);
  consider(0, pitch.length, 1);
  consider(1, 0.0, 0);
  consider(1, pitch.width, 1);
  return best;
}

Rgb scaled(const Rgb& c, double s) {
  return {static_cast<float>(c[0] * s), static_cast<float>(c[1] * s),
          static_cast<float>(c[2] * s)};
}

}  // namespace

RenderConfig RenderConfig::from(const Config& c) {
  RenderConfig r;
  r.fov = c.get_double("render.fov_deg") * M_PI / 180.0;
  if (r.fov <= 0 || r.fov >= M_PI)
    throw ConfigError("rejected configuration: render.fov_deg must be in (0, 180)");
  r.camera_height = c.get_double("render.camera_height");
  r.horizon_row = static_cast<int>(c.get_int("render.horizon_row"));
  r.wall_height = c.get_double("render.wall_height");
  r.pitch.length = c.get_double("sim.pitch_length");
  r.pitch.width = c.get_double("sim.pitch_width");
  r.pitch.goal_width = c.get_double("sim.goal_width");
  return r;
}

AugmentConfig AugmentConfig::from(const Config& c) {
  AugmentConfig a;
  a.brightness_range = c.get_double("render.brightness_range");
  a.contrast_range = c.get_double("render.contrast_range");
  a.saturation_range = c.get_double("render.saturation_range");
  a.hue_range = c.get_double("render.hue_range");
  return a;
}

Rgb SceneVariant::sample(double az, double v_frac) const {
  double u = positive_mod(az, kTau) / kTau * width;
  int c0 = static_cast<int>(u) % width;
  int c1 = (c0 + 1) % width;
  double frac = u - std::floor(u);
  int row = static_cast<int>(clamp(v_frac, 0.0, 1.0) * (height - 1) + 0.5);
  const uint8_t* a = &panorama[(row * width + c0) * 3];
  const uint8_t* b = &panorama[(row * width + c1) * 3];
  Rgb out;
  for (int k = 0; k < 3; ++k)
    out[k] = static_cast<float>(a[k] * (1.0 - frac) + b[k] * frac);
  return out;
}

std::vector<SceneVariant> bake_default_variants(int count) {
  if (count <= 0) throw ConfigError("rejected configuration: variant count must be positive");
  const int W = 256, H = 64;
  static const float kLight[] = {1.0f, 0.85f, 0.7f, 1.15f};
  static const Rgb kSkyTop[] = {{90, 110, 150}, {70, 80, 120}, {50, 55, 85}, {120, 135, 170}};
  static const Rgb kSkyHorizon[] = {{170, 170, 190}, {150, 140, 160}, {110, 105, 125},
                                    {200, 195, 205}};
  static const Rgb kFloor[] = {{60, 130, 70}, {55, 115, 65}, {45, 95, 55}, {70, 145, 80}};
  static const Rgb kWall[] = {{140, 140, 145}, {125, 120, 130}, {100, 95, 105}, {160, 158, 160}};

  std::vector<SceneVariant> variants;
  for (int id = 0; id < count; ++id) {
    SceneVariant v;
    v.id = id;
    v.width = W;
    v.height = H;
    v.light_scale = kLight[id % 4];
    v.wall_color = kWall[id % 4];
    v.floor_color = kFloor[id % 4];
    v.line_color = {230, 230, 230};
    v.panorama.resize(W * H * 3);

    Rng rng = Rng::derive(0xBA5Eu, "panorama", static_cast<uint64_t>(id));
    // Periodic azimuth harmonics keep the texture seamless by construction.
    double amp[5], phase[5];
    for (int k = 0; k < 5; ++k) {
      amp[k] = rng.uniform(4.0, 14.0) / (k + 1);
      phase[k] = rng.uniform(0.0, kTau);
    }
    // Blocky azimuth features (posters, furniture) give the background
    // structure the shift oracle can lock onto.
    struct Block {
      double a0, a1;
      Rgb color;
      double top, bottom;  // v range
    };
    std::vector<Block> blocks;
    for (int b = 0; b < 6; ++b) {
      double a0 = rng.uniform(0.05, kTau - 0.8);
      double span = rng.uniform(0.25, 0.7);
      Rgb col{static_cast<float>(rng.uniform(40, 220)), static_cast<float>(rng.uniform(40, 220)),
              static_cast<float>(rng.uniform(40, 220))};
      double top = rng.uniform(0.1, 0.4);
      blocks.push_back({a0, a0 + span, col, top, top + rng.uniform(0.2, 0.5)});
    }

    for (int y = 0; y < H; ++y) {
      double vf = double(y) / (H - 1);
      for (int x = 0; x < W; ++x) {
        double az = (x + 0.5) / W * kTau;
        double wave = 0.0;
        for (int k = 0; k < 5; ++k) wave += amp[k] * std::sin((k + 1) * az + phase[k]);
        Rgb c;
        for (int k = 0; k < 3; ++k)
          c[k] = static_cast<float>(kSkyTop[id % 4][k] * (1.0 - vf) +
                                    kSkyHorizon[id % 4][k] * vf + wave);
        for (const auto& b : blocks) {
          if (vf >= b.top && vf <= b.bottom && az >= b.a0 && az <= b.a1) c = b.color;
        }
        for (int k = 0; k < 3; ++k)
          v.panorama[(y * W + x) * 3 + k] = quantize(c[k] * v.light_scale);
      }
    }
    variants.push_back(std::move(v));
  }
  return variants;
}

std::vector<uint8_t> serialize_panorama(const SceneVariant& v) {
  ByteWriter w;
  w.raw("PANO", 4);
  w.pod<uint32_t>(1);  // version
  w.pod<uint32_t>(static_cast<uint32_t>(v.id));
  w.pod<uint32_t>(static_cast<uint32_t>(v.width));
  w.pod<uint32_t>(static_cast<uint32_t>(v.height));
  w.pod<float>(v.light_scale);
  for (const Rgb* c : {&v.wall_color, &v.floor_color, &v.line_color})
    for (float x : *c) w.pod<float>(x);
  w.raw(v.panorama.data(), v.panorama.size());
  return std::move(w.buf);
}

SceneVariant deserialize_panorama(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "PANO") throw DataError("panorama: bad magic");
  auto version = r.pod<uint32_t>();
  if (version != 1) throw DataError("panorama: unsupported version");
  SceneVariant v;
  v.id = static_cast<int>(r.pod<uint32_t>());
  v.width = static_cast<int>(r.pod<uint32_t>());
  v.height = static_cast<int>(r.pod<uint32_t>());
  if (v.width <= 0 || v.height <= 0 || v.width > 1 << 14 || v.height > 1 << 14)
    throw DataError("panorama: implausible dimensions");
  v.light_scale = r.pod<float>();
  for (Rgb* c : {&v.wall_color, &v.floor_color, &v.line_color})
    for (float& x : *c) x = r.pod<float>();
  v.panorama.resize(static_cast<size_t>(v.width) * v.height * 3);
  r.raw(v.panorama.data(), v.panorama.size());
  return v;
}

void save_variant(const std::string& path, const SceneVariant& v) {
  report::write_bytes(path, serialize_panorama(v));
}

SceneVariant load_variant(const std::string& path) {
  return deserialize_panorama(report::read_bytes(path));
}

double camera_azimuth(const sim::WorldState& world, int agent_id) {
  const auto& a = world.agents[agent_id];
  return wrap_angle(a.heading + a.head_pan);
}

double gaze_error(const sim::WorldState& world, int agent_id) {
  const auto& a = world.agents[agent_id];
  Vec2 rel = world.ball_position - a.position;
  double az_ball = std::atan2(rel.y, rel.x);
  return std::abs(wrap_angle(az_ball - camera_azimuth(world, agent_id)));
}

namespace {

struct Disc {
  double dist;        // horizontal range, m
  double col;         // screen center column
  double row;         // screen center row
  double radius_px;
  Rgb color;
};

bool project_disc(const Vec2& rel, double obj_radius, double obj_height, double cam_az,
                  const RenderConfig& cfg, int horizon, Disc* out) {
  double d = rel.norm();
  if (d < 1e-6) return false;
  double bearing = wrap_angle(std::atan2(rel.y, rel.x) - cam_az);
  if (std::abs(bearing) > cfg.fov * 0.75) return false;
  double f = cfg.focal_px();
  double col = (bearing / cfg.fov + 0.5) * kFrameWidth - 0.5;
  double row = horizon + f * (cfg.camera_height - obj_height) / d;
  double radius_px = f * obj_radius / d;
  out->dist = d;
  out->col = col;
  out->row = row;
  out->radius_px = radius_px;
  return true;
}

}  // namespace

bool ball_in_view(const sim::WorldState& world, int agent_id, const RenderConfig& config) {
  const auto& a = world.agents[agent_id];
  if (a.fallen) return false;
  Vec2 rel = world.ball_position - a.position;
  Disc d;
  if (!project_disc(rel, world.ball_params.radius, world.ball_params.radius,
                    camera_azimuth(world, agent_id), config, config.horizon_row, &d))
    return false;
  if (std::abs(wrap_angle(std::atan2(rel.y, rel.x) - camera_azimuth(world, agent_id))) >
      config.fov / 2)
    return false;
  return d.row >= 0.0 && d.row <= kFrameHeight - 1;
}

Frame render_egocentric(const sim::WorldState& world, int agent_id, const SceneVariant& scene,
                        const RenderConfig& config) {
  const auto& me = world.agents[agent_id];
  const auto& opp = world.agents[1 - agent_id];
  const double cam_az = camera_azimuth(world, agent_id);
  const double f = config.focal_px();
  const int horizon = config.horizon_row + (me.fallen ? config.fallen_horizon_shift : 0);
  const double light = scene.light_scale;
  const int target = sim::target_end(agent_id);

  FloatImage img;
  std::array<double, kFrameWidth> wall_dist;

  for (int c = 0; c < kFrameWidth; ++c) {
    double az = cam_az + ((c + 0.5) / kFrameWidth - 0.5) * config.fov;
    WallHit hit = cast_to_wall(me.position, az, config.pitch);
    wall_dist[c] = hit.dist;

    // Wall band rows; the goal mouths get team colors (target vs own).
    Rgb wall = scaled(scene.wall_color, light);
    if (hit.axis == 0) {
      double y = hit.point.y;
      if (config.pitch.in_goal_mouth(y))
        wall = hit.end == target ? config.target_goal_color : config.own_goal_color;
    }
    double shade = 1.0 / (1.0 + 0.12 * hit.dist);
    wall = scaled(wall, 0.55 + 0.45 * shade);

    double r_top_f = horizon - f * (config.wall_height - config.camera_height) / hit.dist;
    double r_base_f = horizon + f * config.camera_height / hit.dist;

    for (int r = 0; r < kFrameHeight; ++r) {
      Rgb px;
      if (r < r_top_f) {
        px = scene.sample(az, double(r) / (kFrameHeight - 1));
      } else if (r < r_base_f) {
        px = wall;
      } else {
        double depth = r - horizon;
        double d_ground = depth > 1e-6 ? f * config.camera_height / depth : 1e30;
        Vec2 p = me.position + Vec2{std::cos(az), std::sin(az)} * d_ground;
        Rgb floor = scene.floor_color;
        if (std::abs(p.x - config.pitch.length * 0.5) < 0.04) floor = scene.line_color;
        double ring = (p - config.pitch.center()).norm();
        if (std::abs(ring - 0.6) < 0.04) floor = scene.line_color;
        double fshade = 1.0 / (1.0 + 0.15 * d_ground);
        px = scaled(floor, light * (0.55 + 0.45 * fshade));
      }
      for (int k = 0; k < 3; ++k) img.at(r, c, k) = px[k];
    }
  }

  // Dynamic objects, painter's order (far to near), occluded by walls.
  std::vector<Disc> discs;
  Disc d;
  if (project_disc(opp.position - me.position, 0.15, 0.15, cam_az, config, horizon, &d)) {
    d.color = scaled(config.opponent_color, light);
    discs.push_back(d);
  }
  if (project_disc(world.ball_position - me.position, world.ball_params.radius,
                   world.ball_params.radius, cam_az, config, horizon, &d)) {
    d.color = scaled({world.ball_params.color[0], world.ball_params.color[1],
                      world.ball_params.color[2]},
                     light);
    discs.push_back(d);
  }
  std::sort(discs.begin(), discs.end(),
            [](const Disc& a, const Disc& b) { return a.dist > b.dist; });

  for (const auto& disc : discs) {
    int c0 = std::max(0, static_cast<int>(std::floor(disc.col - disc.radius_px)));
    int c1 = std::min(kFrameWidth - 1, static_cast<int>(std::ceil(disc.col + disc.radius_px)));
    int r0 = std::max(0, static_cast<int>(std::floor(disc.row - disc.radius_px)));
    int r1 = std::min(kFrameHeight - 1, static_cast<int>(std::ceil(disc.row + disc.radius_px)));
    for (int c = c0; c <= c1; ++c) {
      if (disc.dist >= wall_dist[c]) continue;
      for (int r = r0; r <= r1; ++r) {
        double dx = c - disc.col, dy = r - disc.row;
        if (dx * dx + dy * dy > disc.radius_px * disc.radius_px) continue;
        for (int k = 0; k < 3; ++k) img.at(r, c, k) = disc.color[k];
      }
    }
  }

  return quantize_image(img);
}

CalibrationStats fit_stats(const std::vector<Frame>& frames) {
  if (frames.empty()) throw DataError("calibration: empty frame sequence");
  CalibrationStats s;
  s.width = kFrameWidth;
  s.height = kFrameHeight;
  s.channels = kFrameChannels;
  s.mean.assign(kFrameSize, 0.0f);
  s.stddev.assign(kFrameSize, 0.0f);
  std::vector<double> sum(kFrameSize, 0.0), sumsq(kFrameSize, 0.0);
  for (const auto& f : frames) {
    for (int i = 0; i < kFrameSize; ++i) {
      sum[i] += f.data[i];
      sumsq[i] += double(f.data[i]) * f.data[i];
    }
  }
  const double n = static_cast<double>(frames.size());
  for (int i = 0; i < kFrameSize; ++i) {
    double mu = sum[i] / n;
    double var = std::max(0.0, sumsq[i] / n - mu * mu);
    s.mean[i] = static_cast<float>(mu);
    s.stddev[i] = static_cast<float>(std::sqrt(var));
  }
  return s;
}

std::pair<CalibrationStats, CalibrationStats> fit_calibration(const std::vector<Frame>& a,
                                                              const std::vector<Frame>& b) {
  return {fit_stats(a), fit_stats(b)};
}

Frame calibrate_colors(const Frame& frame, const CalibrationStats& nerf_stats,
                       const CalibrationStats& real_stats) {
  auto check = [](const CalibrationStats& s) {
    if (s.width != kFrameWidth || s.height != kFrameHeight || s.channels != kFrameChannels ||
        s.mean.size() != kFrameSize || s.stddev.size() != kFrameSize)
      throw DataError("calibration: stats shape mismatch");
  };
  check(nerf_stats);
  check(real_stats);
  Frame out;
  for (int i = 0; i < kFrameSize; ++i) {
    double v;
    if (nerf_stats.stddev[i] == 0.0f) {
      v = real_stats.mean[i];
    } else {
      double scale = double(real_stats.stddev[i]) / nerf_stats.stddev[i];
      v = scale * (frame.data[i] - double(nerf_stats.mean[i])) + real_stats.mean[i];
    }
    out.data[i] = quantize(v);
  }
  return out;
}

std::vector<uint8_t> serialize_stats(const CalibrationStats& s) {
  ByteWriter w;
  w.raw("CALB", 4);
  w.pod<uint32_t>(1);
  w.pod<uint32_t>(static_cast<uint32_t>(s.width));
  w.pod<uint32_t>(static_cast<uint32_t>(s.height));
  w.pod<uint32_t>(static_cast<uint32_t>(s.channels));
  const size_t plane = static_cast<size_t>(s.width) * s.height;
  for (int ch = 0; ch < s.channels; ++ch) {
    for (size_t p = 0; p < plane; ++p) w.pod<float>(s.mean[p * s.channels + ch]);
    for (size_t p = 0; p < plane; ++p) w.pod<float>(s.stddev[p * s.channels + ch]);
  }
  return std::move(w.buf);
}

CalibrationStats deserialize_stats(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "CALB") throw DataError("calibration stats: bad magic");
  if (r.pod<uint32_t>() != 1) throw DataError("calibration stats: unsupported version");
  CalibrationStats s;
  s.width = static_cast<int>(r.pod<uint32_t>());
  s.height = static_cast<int>(r.pod<uint32_t>());
  s.channels = static_cast<int>(r.pod<uint32_t>());
  if (s.width <= 0 || s.height <= 0 || s.channels <= 0 || s.channels > 16)
    throw DataError("calibration stats: implausible shape");
  const size_t plane = static_cast<size_t>(s.width) * s.height;
  s.mean.assign(plane * s.channels, 0.0f);
  s.stddev.assign(plane * s.channels, 0.0f);
  for (int ch = 0; ch < s.channels; ++ch) {
    for (size_t p = 0; p < plane; ++p) s.mean[p * s.channels + ch] = r.pod<float>();
    for (size_t p = 0; p < plane; ++p) {
      float sd = r.pod<float>();
      if (sd < 0.0f) throw DataError("calibration stats: negative stddev");
      s.stddev[p * s.channels + ch] = sd;
    }
  }
  return s;
}

Frame apply_brightness(const Frame& f, double offset) {
  FloatImage img = to_float(f);
  for (auto& v : img.v) v = static_cast<float>(v + offset);
  return quantize_image(img);
}

Frame apply_contrast(const Frame& f, double factor) {
  FloatImage img = to_float(f);
  double mean = 0.0;
  for (float v : img.v) mean += v;
  mean /= kFrameSize;
  for (auto& v : img.v) v = static_cast<float>(mean + factor * (v - mean));
  return quantize_image(img);
}

Frame apply_saturation(const Frame& f, double factor) {
  FloatImage img = to_float(f);
  for (int i = 0; i < kFrameSize; i += 3) {
    double gray = (img.v[i] + img.v[i + 1] + img.v[i + 2]) / 3.0;
    for (int k = 0; k < 3; ++k)
      img.v[i + k] = static_cast<float>(gray + factor * (img.v[i + k] - gray));
  }
  return quantize_image(img);
}

Frame apply_hue(const Frame& f, double radians) {
  // Rodrigues rotation about the gray axis (1,1,1)/sqrt(3).
  const double c = std::cos(radians), s = std::sin(radians);
  const double a = 1.0 / 3.0;
  double m[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[i][j] = a * (1.0 - c) + (i == j ? c : 0.0);
  const double k = s / std::sqrt(3.0);
  m[0][1] -= k;
  m[0][2] += k;
  m[1][0] += k;
  m[1][2] -= k;
  m[2][0] -= k;
  m[2][1] += k;

  FloatImage img = to_float(f);
  for (int i = 0; i < kFrameSize; i += 3) {
    double r0 = img.v[i], g0 = img.v[i + 1], b0 = img.v[i + 2];
    img.v[i] = static_cast<float>(m[0][0] * r0 + m[0][1] * g0 + m[0][2] * b0);
    img.v[i + 1] = static_cast<float>(m[1][0] * r0 + m[1][1] * g0 + m[1][2] * b0);
    img.v[i + 2] = static_cast<float>(m[2][0] * r0 + m[2][1] * g0 + m[2][2] * b0);
  }
  return quantize_image(img);
}

Frame augment(const Frame& f, Rng& rng, const AugmentConfig& params) {
  double b = rng.uniform(-params.brightness_range, params.brightness_range);
  double c = 1.0 + rng.uniform(-params.contrast_range, params.contrast_range);
  double s = 1.0 + rng.uniform(-params.saturation_range, params.saturation_range);
  double h = rng.uniform(-params.hue_range, params.hue_range);
  if (params.brightness_range == 0.0 && params.contrast_range == 0.0 &&
      params.saturation_range == 0.0 && params.hue_range == 0.0)
    return f;
  Frame out = apply_brightness(f, b);
  out = apply_contrast(out, c);
  out = apply_saturation(out, s);
  out = apply_hue(out, h);
  return out;
}

sim::BallParams randomize_ball(Rng& rng, const sim::BallParams& base, double scale_min,
                               double scale_max) {
  if (scale_min > scale_max || scale_min <= 0)
    throw ConfigError("rejected configuration: ball scale range must satisfy 0 < min <= max");
  sim::BallParams p = base;
  for (int k = 0; k < 3; ++k)
    p.color[k] = static_cast<float>(
        clamp(base.color[k] * rng.uniform(scale_min, scale_max), 0.0, 255.0));
  p.radius = base.radius * rng.uniform(scale_min, scale_max);
  p.mass = base.mass * rng.uniform(scale_min, scale_max);
  return p;
}

const SceneVariant& sample_scene(Rng& rng, const std::vector<SceneVariant>& variants) {
  if (variants.empty()) throw DataError("scene sampling: no variants loaded");
  return variants[rng.uniform_int(variants.size())];
}

}  // namespace pitchlab::render
