// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "photofit/face.hpp"

namespace photofit {
namespace {

struct Rgb {
  double r, g, b;
};

Rgb mix(Rgb a, Rgb b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}
Rgb scaled(Rgb a, double k) { return {a.r * k, a.g * k, a.b * k}; }

double sq(double x) { return x * x; }
double smooth(double s) { return s * s * (3.0 - 2.0 * s); }

constexpr int kSupersample = 4;
constexpr Rgb kBackground{0.86, 0.89, 0.93};
constexpr Rgb kEyeWhite{0.97, 0.97, 0.96};
constexpr Rgb kPupil{0.03, 0.03, 0.04};

// Everything is laid out for the left half of the face; `du` is the distance
// from the vertical midline.
struct Geometry {
  Rgb skin, hair, brow, iris, lip, lip_lower, mouth_line, nose_shade, bridge, nostril;
  double ex, ey, erx, ery, iris_r, pupil_r;
  double brow_cy, brow_half, brow_cos, brow_sin, brow_r;
  double nose_top, nose_tip, nose_w, bridge_r;
  double my, mw, lt;
  double cheek, jaw, chin;
};

Geometry layout(const SliderVector& s) {
  const SliderSchema& sc = default_schema();
  auto v = [&](const char* name) { return double(s.values[std::size_t(sc.index_of(name))]); };
  Geometry g{};
  g.skin = mix({0.98, 0.85, 0.75}, {0.62, 0.45, 0.33}, v("skin_tone"));
  g.hair = mix({0.90, 0.76, 0.45}, {0.10, 0.07, 0.06}, v("hair_darkness"));
  g.brow = mix({0.16, 0.11, 0.08}, g.hair, 0.3);
  g.iris = mix({0.55, 0.70, 0.85}, {0.12, 0.08, 0.05}, v("iris_darkness"));
  g.lip = mix({0.90, 0.58, 0.58}, {0.50, 0.10, 0.14}, v("lip_darkness"));
  g.lip_lower = scaled(g.lip, 0.92);
  g.mouth_line = scaled(g.lip, 0.45);
  g.nose_shade = scaled(g.skin, 0.86);
  g.bridge = scaled(g.skin, 0.72);
  g.nostril = scaled(g.skin, 0.25);

  g.ex = 0.10 + 0.07 * v("eye_spacing");
  g.erx = 0.05 + 0.03 * v("eye_size");
  g.ery = 0.6 * g.erx;
  g.ey = 0.32 + 0.05 * v("eye_height");
  g.iris_r = 0.85 * g.ery;
  g.pupil_r = 0.4 * g.iris_r;
  const double theta = (v("eyebrow_angle") - 0.5) * 0.7;
  g.brow_cy = g.ey - g.ery - 0.03;
  g.brow_half = 1.1 * g.erx;
  g.brow_cos = std::cos(theta);
  g.brow_sin = std::sin(theta);
  g.brow_r = 0.006 + 0.012 * v("eyebrow_thickness");

  g.nose_top = 0.47;
  g.nose_tip = 0.52 + 0.07 * v("nose_length");
  g.nose_w = 0.025 + 0.03 * v("nose_width");
  g.bridge_r = 0.005 + 0.012 * v("nose_bridge");

  g.my = 0.70 + 0.04 * v("mouth_height");
  g.mw = 0.07 + 0.08 * v("mouth_width");
  g.lt = 0.012 + 0.018 * v("lip_thickness");

  g.cheek = 0.26 + 0.05 * v("cheek_fullness");
  g.jaw = 0.15 + 0.08 * v("jaw_width");
  g.chin = 0.87 + 0.08 * v("chin_length");
  return g;
}

bool inside_head(const Geometry& g, double du, double v) {
  if (v <= 0.5) return sq(du / 0.30) + sq((v - 0.5) / 0.34) <= 1.0;
  if (v > g.chin) return false;
  const double t = (v - 0.5) / (g.chin - 0.5);
  double w;
  if (t < 0.35) {
    w = 0.30 + (g.cheek - 0.30) * smooth(t / 0.35);
  } else if (t < 0.75) {
    w = g.cheek + (g.jaw - g.cheek) * smooth((t - 0.35) / 0.4);
  } else {
    w = g.jaw * std::sqrt(std::max(0.0, 1.0 - sq((t - 0.75) / 0.25)));
  }
  return du <= w;
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double t = std::clamp(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(px - ax - t * dx, py - ay - t * dy);
}

Rgb shade(const Geometry& g, double du, double v) {
  Rgb c = kBackground;
  if (sq(du / 0.36) + sq((v - 0.45) / 0.42) <= 1.0) c = g.hair;
  const bool head = inside_head(g, du, v);
  if (head) c = g.skin;
  if (head && v < 0.185 + 0.02 * sq(du / 0.3)) c = g.hair;

  // eye, iris, pupil
  const double ed = sq((du - g.ex) / g.erx) + sq((v - g.ey) / g.ery);
  if (ed <= 1.0) {
    const double r = std::hypot(du - g.ex, v - g.ey);
    c = r <= g.pupil_r ? kPupil : r <= g.iris_r ? g.iris : kEyeWhite;
  }
  // eyebrow capsule, inner end lowered for positive angles
  const double hx = g.brow_half * g.brow_cos, hy = g.brow_half * g.brow_sin;
  if (segment_distance(du, v, g.ex - hx, g.brow_cy + hy, g.ex + hx, g.brow_cy - hy) <= g.brow_r) {
    c = g.brow;
  }

  // nose
  if (v >= g.nose_top && v <= g.nose_tip) {
    const double f = (v - g.nose_top) / (g.nose_tip - g.nose_top);
    if (du <= 0.8 * g.nose_w * f) c = g.nose_shade;
    if (du <= g.bridge_r && v <= g.nose_tip - 0.01) c = g.bridge;
  }
  if (sq((du - g.nose_w) / 0.016) + sq((v - g.nose_tip) / 0.010) <= 1.0) c = g.nostril;

  // mouth
  const double dx = du / g.mw;
  if (dx < 1.0) {
    const double f = 1.0 - dx * dx;
    if (v <= g.my && v >= g.my - g.lt * (0.5 + 0.5 * f)) c = g.lip;
    if (v >= g.my && v <= g.my + 1.3 * g.lt * (0.3 + 0.7 * std::sqrt(f))) c = g.lip_lower;
    if (std::abs(v - g.my) <= 0.004 && dx < 0.98) c = g.mouth_line;
  }
  return c;
}

}  // namespace

FaceImage render_face(const SliderVector& sliders, int size) {
  validate(sliders);
  if (size < 8 || size % 2 != 0) throw ConfigError("face size must be even and >= 8");
  const Geometry g = layout(sliders);
  FaceImage img{size, size, std::vector<float>(std::size_t(size) * size * 3)};
  const double inv = 1.0 / size;
  const double norm = 1.0 / (kSupersample * kSupersample);
  // Render the left half and mirror it, so symmetry is exact.
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size / 2; ++x) {
      double r = 0, gr = 0, b = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        const double v = (y + (sy + 0.5) / kSupersample) * inv;
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double u = (x + (sx + 0.5) / kSupersample) * inv;
          const Rgb c = shade(g, 0.5 - u, v);
          r += c.r;
          gr += c.g;
          b += c.b;
        }
      }
      const float px[3] = {float(r * norm), float(gr * norm), float(b * norm)};
      for (int ch = 0; ch < 3; ++ch) {
        const float val = std::clamp(px[ch], 0.0f, 1.0f);
        img.rgb[(std::size_t(y) * size + x) * 3 + ch] = val;
        img.rgb[(std::size_t(y) * size + (size - 1 - x)) * 3 + ch] = val;
      }
    }
  }
  return img;
}

}  // namespace photofit
