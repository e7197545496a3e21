#pragma once

#include <cmath>

namespace ocskill::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  bool operator==(const Vec2&) const = default;

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Axis-aligned box given by its center and full extents.
struct Box {
  Vec2 center;
  Vec2 size;

  double left() const { return center.x - 0.5 * size.x; }
  double right() const { return center.x + 0.5 * size.x; }
  double bottom() const { return center.y - 0.5 * size.y; }
  double top() const { return center.y + 0.5 * size.y; }

  bool overlaps(const Box& o, double gap = 0.0) const {
    return left() < o.right() + gap && o.left() < right() + gap && bottom() < o.top() + gap &&
           o.bottom() < top() + gap;
  }
  bool contains(Vec2 p) const { return p.x >= left() && p.x <= right() && p.y >= bottom() && p.y <= top(); }
};

}  // namespace ocskill::sim
