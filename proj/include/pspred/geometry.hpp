#pragma once

#include <cmath>
#include <compare>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pspred {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage could not complete (CLI exit code 2).
class PipelineError : public Error {
 public:
  using Error::Error;
};

/// The spectrum administrator refuses a transmission (CLI exit code 3).
class DenialError : public Error {
 public:
  using Error::Error;
};

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
  friend auto operator<=>(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Axis-aligned rectangle [x0, x1] x [y0, y1] in meters.
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool contains(Point p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// True when the two rectangles share interior area (touching edges do not count).
bool interiors_overlap(const Rect& a, const Rect& b);

/// Area of the intersection of two rectangles.
double overlap_area(const Rect& a, const Rect& b);

/// Length of the part of segment a-b that lies inside the closed rectangle.
/// Symmetric in (a, b) bit-for-bit.
double clipped_length(Point a, Point b, const Rect& r);

/// Even-odd point-in-polygon test; points on the boundary count as inside.
bool point_in_polygon(Point p, std::span<const Point> polygon);

/// Closed-segment intersection test, including collinear overlap.
bool segments_intersect(Point p1, Point p2, Point q1, Point q2);

/// Two simple polygons intersect if any edges cross or one contains the other.
bool polygons_intersect(std::span<const Point> a, std::span<const Point> b);

}  // namespace pspred
