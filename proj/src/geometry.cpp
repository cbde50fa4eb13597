#include "trajtrack/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <tuple>

#include "trajtrack/errors.hpp"

namespace trajtrack {
namespace {

constexpr double kMinArea = 1e-12;
constexpr std::size_t kMaxClipVertices = 16;

struct Polygon {
  std::array<Point2, kMaxClipVertices> points{};
  std::size_t size = 0;

  void push(Point2 p) {
    if (size < points.size()) points[size++] = p;
  }
};

double cross(Point2 origin, Point2 a, Point2 b) {
  return (a.x - origin.x) * (b.y - origin.y) - (a.y - origin.y) * (b.x - origin.x);
}

Point2 line_intersection(Point2 p, Point2 q, Point2 e0, Point2 e1) {
  // Point on segment pq crossing the infinite line through e0, e1.
  const double dp = cross(e0, e1, p);
  const double dq = cross(e0, e1, q);
  const double t = dp / (dp - dq);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

// Sutherland-Hodgman clip of `subject` against the convex CCW polygon `clip`.
Polygon clip_convex(const Polygon& subject, const std::array<Point2, 4>& clip) {
  Polygon out = subject;
  for (std::size_t e = 0; e < clip.size() && out.size > 0; ++e) {
    const Point2 e0 = clip[e];
    const Point2 e1 = clip[(e + 1) % clip.size()];
    Polygon in = out;
    out.size = 0;
    for (std::size_t i = 0; i < in.size; ++i) {
      const Point2 cur = in.points[i];
      const Point2 prev = in.points[(i + in.size - 1) % in.size];
      const bool cur_in = cross(e0, e1, cur) >= 0.0;
      const bool prev_in = cross(e0, e1, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) out.push(line_intersection(prev, cur, e0, e1));
        out.push(cur);
      } else if (prev_in) {
        out.push(line_intersection(prev, cur, e0, e1));
      }
    }
  }
  return out;
}

auto box_key(const Box3D& b) { return std::tie(b.x, b.y, b.z, b.h, b.w, b.l, b.theta); }

// Intersection area of the two footprints, computed in a frame centered on
// `first` so that distant boxes do not lose precision.
double footprint_intersection(const Box3D& first, const Box3D& second) {
  Box3D a = first;
  Box3D b = second;
  b.x -= a.x;
  b.y -= a.y;
  a.x = 0.0;
  a.y = 0.0;
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  Polygon subject;
  for (const auto& p : ca) subject.push(p);
  const Polygon clipped = clip_convex(subject, cb);
  if (clipped.size < 3) return 0.0;
  return std::max(0.0, polygon_area(clipped.points.data(), clipped.size));
}

}  // namespace

double wrap_angle(double radians) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(radians, two_pi);  // [-pi, pi]
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

bool is_valid(const Box3D& box) {
  const double fields[] = {box.x, box.y, box.z, box.h, box.w, box.l, box.theta};
  for (double f : fields) {
    if (!std::isfinite(f)) return false;
  }
  return box.h > 0.0 && box.w > 0.0 && box.l > 0.0;
}

void validate(const Box3D& box) {
  const double fields[] = {box.x, box.y, box.z, box.h, box.w, box.l, box.theta};
  const char* names[] = {"x", "y", "z", "h", "w", "l", "theta"};
  for (int i = 0; i < 7; ++i) {
    if (!std::isfinite(fields[i])) {
      throw InvalidInput(std::string("box field ") + names[i] + " is not finite");
    }
  }
  if (!(box.h > 0.0 && box.w > 0.0 && box.l > 0.0)) {
    throw InvalidInput("box sizes must be strictly positive");
  }
}

Box3D normalized(Box3D box) {
  validate(box);
  box.theta = wrap_angle(box.theta);
  return box;
}

Box3D apply_motion(const Box3D& prev, const MotionDelta& delta) {
  if (!std::isfinite(delta.dx) || !std::isfinite(delta.dy) || !std::isfinite(delta.dz) ||
      !std::isfinite(delta.dtheta)) {
    throw InvalidInput("motion delta is not finite");
  }
  Box3D next = prev;
  next.x += delta.dx;
  next.y += delta.dy;
  next.z += delta.dz;
  next.theta = wrap_angle(prev.theta + delta.dtheta);
  return next;
}

std::array<Point2, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.theta);
  const double s = std::sin(box.theta);
  const double hl = 0.5 * box.l;
  const double hw = 0.5 * box.w;
  // Local corners, CCW: front-right, front-left, back-left, back-right.
  const std::array<Point2, 4> local = {{{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}}};
  std::array<Point2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {box.x + c * local[i].x - s * local[i].y, box.y + s * local[i].x + c * local[i].y};
  }
  return out;
}

double polygon_area(const Point2* points, std::size_t count) {
  double twice = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const Point2 a = points[i];
    const Point2 b = points[(i + 1) % count];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

IouResult bev_iou_checked(const Box3D& a, const Box3D& b) {
  const double area_a = a.l * a.w;
  const double area_b = b.l * b.w;
  if (!(area_a > kMinArea) || !(area_b > kMinArea)) return {0.0, true};
  // Canonical argument order keeps the result exactly symmetric.
  const bool swap = box_key(b) < box_key(a);
  const double inter = swap ? footprint_intersection(b, a) : footprint_intersection(a, b);
  const double uni = area_a + area_b - inter;
  if (!(uni > kMinArea)) return {0.0, true};
  return {std::clamp(inter / uni, 0.0, 1.0), false};
}

double bev_iou(const Box3D& a, const Box3D& b) { return bev_iou_checked(a, b).value; }

IouResult iou_3d_checked(const Box3D& a, const Box3D& b) {
  const double area_a = a.l * a.w;
  const double area_b = b.l * b.w;
  if (!(area_a > kMinArea) || !(area_b > kMinArea) || !(a.h > 0.0) || !(b.h > 0.0)) {
    return {0.0, true};
  }
  const bool swap = box_key(b) < box_key(a);
  const double inter_area = swap ? footprint_intersection(b, a) : footprint_intersection(a, b);
  const double top = std::min(a.z + 0.5 * a.h, b.z + 0.5 * b.h);
  const double bottom = std::max(a.z - 0.5 * a.h, b.z - 0.5 * b.h);
  const double overlap_h = std::max(0.0, top - bottom);
  const double inter = inter_area * overlap_h;
  const double uni = area_a * a.h + area_b * b.h - inter;
  if (!(uni > kMinArea)) return {0.0, true};
  return {std::clamp(inter / uni, 0.0, 1.0), false};
}

double iou_3d(const Box3D& a, const Box3D& b) { return iou_3d_checked(a, b).value; }

double center_distance(const Box3D& a, const Box3D& b) {
  return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

}  // namespace trajtrack
