#include "cnp/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace cnp {

Tensor make_scene(const SceneParams& params) {
  const int h = params.height, w = params.width;
  std::mt19937 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Tensor scene({1, 2, h, w});

  // Background: a tilted far plane.
  const double bg_depth = 0.75 + 0.2 * unit(rng);
  const double bg_albedo = 0.25 + 0.5 * unit(rng);
  const double bgx = (unit(rng) - 0.5) * 0.3, bgy = (unit(rng) - 0.5) * 0.3;
  // Scene-wide illumination ramp keeps the gray channel informative away
  // from shape boundaries.
  const double lx = (unit(rng) - 0.5) * 0.5, ly = (unit(rng) - 0.5) * 0.5;

  struct Shape {
    bool ellipse;
    double cx, cy, rx, ry;
    double depth, albedo, slope_x, slope_y;
  };
  std::vector<Shape> shapes(static_cast<std::size_t>(params.shapes));
  for (auto& s : shapes) {
    s.ellipse = unit(rng) < 0.5;
    s.cx = unit(rng) * w;
    s.cy = unit(rng) * h;
    s.rx = (0.06 + 0.22 * unit(rng)) * w;
    s.ry = (0.06 + 0.22 * unit(rng)) * h;
    s.depth = 0.1 + 0.6 * unit(rng);
    s.albedo = 0.2 + 0.75 * unit(rng);
    s.slope_x = (unit(rng) - 0.5) * 0.2;
    s.slope_y = (unit(rng) - 0.5) * 0.2;
  }
  // Painter's order: far shapes first.
  std::sort(shapes.begin(), shapes.end(),
            [](const Shape& a, const Shape& b) { return a.depth > b.depth; });

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = double(x) / w - 0.5, v = double(y) / h - 0.5;
      double depth = std::clamp(bg_depth + bgx * u + bgy * v, 0.0, 1.0);
      double albedo = bg_albedo;
      for (const auto& s : shapes) {
        const double dx = (x - s.cx) / s.rx, dy = (y - s.cy) / s.ry;
        const bool inside = s.ellipse ? (dx * dx + dy * dy <= 1.0)
                                      : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
        if (inside) {
          depth = std::clamp(s.depth + s.slope_x * dx + s.slope_y * dy, 0.0, 1.0);
          albedo = s.albedo;
        }
      }
      const double light = 0.75 + lx * u + ly * v;
      scene.at(0, 0, y, x) = float(std::clamp(albedo * light + 0.1 * (1.0 - depth), 0.0, 1.0));
      scene.at(0, 1, y, x) = float(depth);
    }
  }
  return scene;
}

std::vector<Sample> make_depth_dataset(int count, int height, int width,
                                       const DegradationSpec& spec, unsigned seed) {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SceneParams sp;
    sp.height = height;
    sp.width = width;
    sp.seed = seed * 7919u + static_cast<unsigned>(i);
    const Tensor clean = make_scene(sp);
    DegradationSpec d = spec;
    d.kind = DegradationKind::DepthHoles;
    d.seed = spec.seed * 104729u + static_cast<unsigned>(i);
    out.push_back(degrade(clean, d));
  }
  return out;
}

}  // namespace cnp
