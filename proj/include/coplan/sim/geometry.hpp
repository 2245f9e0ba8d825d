#pragma once

// 2D geometry helpers: vectors, polylines with arc-length lookup, polygon
// containment, and oriented-rectangle overlap.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace coplan {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

inline double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

// World point -> frame of a pose (x forward, y left).
inline Vec2 to_frame(const Vec2& p, const Vec2& origin, double heading) {
  Vec2 d = p - origin;
  double c = std::cos(heading), s = std::sin(heading);
  return {c * d.x + s * d.y, -s * d.x + c * d.y};
}

inline Vec2 from_frame(const Vec2& p, const Vec2& origin, double heading) {
  double c = std::cos(heading), s = std::sin(heading);
  return {origin.x + c * p.x - s * p.y, origin.y + s * p.x + c * p.y};
}

inline double point_segment_dist(const Vec2& p, const Vec2& a, const Vec2& b) {
  Vec2 ab = b - a;
  double len2 = ab.dot(ab);
  double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + ab * t)).norm();
}

class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) { rebuild(); }

  const std::vector<Vec2>& points() const { return pts_; }
  bool empty() const { return pts_.size() < 2; }
  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }

  Vec2 point_at(double s) const {
    size_t i = segment_index(s);
    double t = seg_fraction(s, i);
    return pts_[i] + (pts_[i + 1] - pts_[i]) * t;
  }

  double heading_at(double s) const {
    size_t i = segment_index(s);
    Vec2 d = pts_[i + 1] - pts_[i];
    return std::atan2(d.y, d.x);
  }

  // Arc length of the closest point on the polyline.
  double project(const Vec2& p) const {
    double best_d = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    for (size_t i = 0; i + 1 < pts_.size(); ++i) {
      Vec2 ab = pts_[i + 1] - pts_[i];
      double len2 = ab.dot(ab);
      double t = len2 > 0 ? std::clamp((p - pts_[i]).dot(ab) / len2, 0.0, 1.0) : 0.0;
      Vec2 q = pts_[i] + ab * t;
      double d = (p - q).norm();
      if (d < best_d) {
        best_d = d;
        best_s = cum_[i] + std::sqrt(len2) * t;
      }
    }
    return best_s;
  }

  double distance_to(const Vec2& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i + 1 < pts_.size(); ++i)
      best = std::min(best, point_segment_dist(p, pts_[i], pts_[i + 1]));
    return best;
  }

 private:
  void rebuild() {
    if (pts_.size() < 2) throw std::invalid_argument("polyline needs >= 2 points");
    cum_.resize(pts_.size());
    cum_[0] = 0.0;
    for (size_t i = 1; i < pts_.size(); ++i)
      cum_[i] = cum_[i - 1] + (pts_[i] - pts_[i - 1]).norm();
  }
  size_t segment_index(double s) const {
    s = std::clamp(s, 0.0, length());
    size_t lo = 0, hi = cum_.size() - 1;
    while (lo + 1 < hi) {
      size_t mid = (lo + hi) / 2;
      if (cum_[mid] <= s) lo = mid; else hi = mid;
    }
    return lo;
  }
  double seg_fraction(double s, size_t i) const {
    double seg = cum_[i + 1] - cum_[i];
    return seg > 0 ? std::clamp((std::clamp(s, 0.0, length()) - cum_[i]) / seg, 0.0, 1.0) : 0.0;
  }

  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

inline bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly) {
  bool inside = false;
  size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    if ((poly[i].y > p.y) != (poly[j].y > p.y)) {
      double xint = poly[j].x + (poly[i].x - poly[j].x) * (p.y - poly[j].y) /
                                    (poly[i].y - poly[j].y);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

inline std::vector<Vec2> rect_corners(const Vec2& center, double heading,
                                      double length, double width) {
  double c = std::cos(heading), s = std::sin(heading);
  double hl = length / 2.0, hw = width / 2.0;
  auto pt = [&](double lx, double ly) -> Vec2 {
    return {center.x + c * lx - s * ly, center.y + s * lx + c * ly};
  };
  return {pt(hl, hw), pt(hl, -hw), pt(-hl, -hw), pt(-hl, hw)};
}

// Separating-axis overlap test for two oriented rectangles.
inline bool rects_overlap(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  auto separated = [](const std::vector<Vec2>& r1, const std::vector<Vec2>& r2) {
    for (size_t i = 0; i < 4; ++i) {
      Vec2 edge = r1[(i + 1) % 4] - r1[i];
      Vec2 axis{-edge.y, edge.x};
      double min1 = 1e300, max1 = -1e300, min2 = 1e300, max2 = -1e300;
      for (const Vec2& p : r1) {
        double d = axis.dot(p);
        min1 = std::min(min1, d);
        max1 = std::max(max1, d);
      }
      for (const Vec2& p : r2) {
        double d = axis.dot(p);
        min2 = std::min(min2, d);
        max2 = std::max(max2, d);
      }
      if (max1 < min2 || max2 < min1) return true;
    }
    return false;
  };
  return !separated(a, b) && !separated(b, a);
}

}  // namespace coplan
