#pragma once

// Deterministic SVG renders: the 6x6 accumulated-attention heat map beside
// the crop's semantic channels, and top-down trajectory overlays (planned +
// predicted polylines over vehicle footprints).

#include <string>
#include <vector>

#include "coplan/sim/io.hpp"
#include "coplan/sim/world.hpp"
#include "coplan/tensor.hpp"

namespace coplan {

namespace detail_svg {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string gray(double v01) {
  int g = static_cast<int>(255.0 * std::clamp(v01, 0.0, 1.0) + 0.5);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", g, g, g);
  return buf;
}

// Red-to-yellow heat ramp on black.
inline std::string heat_color(double v01) {
  double v = std::clamp(v01, 0.0, 1.0);
  int r = static_cast<int>(255.0 * std::min(1.0, 2.0 * v) + 0.5);
  int g = static_cast<int>(255.0 * std::max(0.0, 2.0 * v - 1.0) + 0.5);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x00", r, g);
  return buf;
}

inline void grid_cells(std::string& out, const Tensor& img, double x0, double y0,
                       double cell, const std::string& cls) {
  const int64_t h = img.shape[0], w = img.shape[1];
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c) {
      out += "<rect class=\"" + cls + "\" x=\"" + fmt(x0 + cell * c) + "\" y=\"" +
             fmt(y0 + cell * r) + "\" width=\"" + fmt(cell) + "\" height=\"" +
             fmt(cell) + "\" fill=\"";
      double v = img.v[r * w + c];
      out += cls == "heat-cell" ? heat_color(v) : gray(v);
      out += "\"/>\n";
    }
}

}  // namespace detail_svg

// Heat map ([g,g], values in [0,1]) beside up to three semantic channels of
// the crop it was accumulated over. Exactly g*g elements carry the
// "heat-cell" class.
inline std::string render_attention_svg(const Tensor& heat, const Tensor& crop) {
  if (heat.shape.size() != 2 || heat.shape[0] != heat.shape[1])
    throw ShapeError("render_attention_svg: heat map must be square");
  if (crop.shape.size() != 3) throw ShapeError("render_attention_svg: crop must be [C,H,W]");
  using detail_svg::fmt;
  const int64_t g = heat.shape[0];
  const int64_t n = crop.shape[1];
  const double heat_cell = 24.0;
  const double chan_cell = heat_cell * static_cast<double>(g) / static_cast<double>(n);
  const double panel = heat_cell * static_cast<double>(g);
  const int64_t channels = std::min<int64_t>(3, crop.shape[0]);
  double width = panel + 20.0 + static_cast<double>(channels) * (panel + 10.0);

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    fmt(width) + "\" height=\"" + fmt(panel + 20.0) + "\">\n";
  detail_svg::grid_cells(svg, heat, 0.0, 10.0, heat_cell, "heat-cell");
  for (int64_t ch = 0; ch < channels; ++ch) {
    Tensor img({n, n});
    std::copy_n(crop.v.begin() + ch * n * n, n * n, img.v.begin());
    detail_svg::grid_cells(svg, img, panel + 20.0 + static_cast<double>(ch) * (panel + 10.0),
                           10.0, chan_cell, "channel-cell");
  }
  svg += "</svg>\n";
  return svg;
}

// Top-down overlay: vehicle footprints, one "plan" polyline, and one
// "prediction" polyline per predicted vehicle, all in world coordinates.
inline std::string render_trajectory_svg(
    const std::vector<VehicleState>& vehicles, const std::vector<Vec2>& plan,
    const std::vector<std::vector<Vec2>>& predictions, double scale = 4.0) {
  using detail_svg::fmt;
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  auto grow = [&](const Vec2& p) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  };
  for (const auto& v : vehicles)
    for (const Vec2& c : v.footprint()) grow(c);
  for (const Vec2& p : plan) grow(p);
  for (const auto& traj : predictions)
    for (const Vec2& p : traj) grow(p);
  if (min_x > max_x) throw DataError("render_trajectory_svg: nothing to draw");
  min_x -= 5.0; min_y -= 5.0; max_x += 5.0; max_y += 5.0;

  // World y points left; SVG y points down.
  auto sx = [&](double x) { return (x - min_x) * scale; };
  auto sy = [&](double y) { return (max_y - y) * scale; };
  auto polyline = [&](const std::vector<Vec2>& pts, const std::string& cls,
                      const std::string& color) {
    std::string s = "<polyline class=\"" + cls + "\" fill=\"none\" stroke=\"" +
                    color + "\" stroke-width=\"1.5\" points=\"";
    for (const Vec2& p : pts) s += fmt(sx(p.x)) + "," + fmt(sy(p.y)) + " ";
    if (!pts.empty()) s.pop_back();
    s += "\"/>\n";
    return s;
  };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    fmt((max_x - min_x) * scale) + "\" height=\"" +
                    fmt((max_y - min_y) * scale) + "\">\n";
  for (const auto& v : vehicles) {
    std::string cls = v.id == 0 ? "ego-footprint" : "vehicle-footprint";
    std::string fill = v.id == 0 ? "#3366cc" : "#999999";
    svg += "<polygon class=\"" + cls + "\" fill=\"" + fill + "\" points=\"";
    for (const Vec2& c : v.footprint()) svg += fmt(sx(c.x)) + "," + fmt(sy(c.y)) + " ";
    svg.pop_back();
    svg += "\"/>\n";
  }
  svg += polyline(plan, "plan", "#cc2222");
  for (const auto& traj : predictions)
    svg += polyline(traj, "prediction", "#22aa44");
  svg += "</svg>\n";
  return svg;
}

inline void save_svg(const std::string& svg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write svg: " + path);
  f << svg;
}

}  // namespace coplan
