#pragma once

#include <array>
#include <cstddef>

namespace trajtrack {

/// Oriented 3D box: center (x, y, z), size (h, w, l) and yaw about the vertical axis.
/// `l` extends along the heading direction, `w` across it, `h` vertically.
struct Box3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double h = 1.0;
  double w = 1.0;
  double l = 1.0;
  double theta = 0.0;

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

struct MotionDelta {
  double dx = 0.0;
  double dy = 0.0;
  double dz = 0.0;
  double dtheta = 0.0;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct IouResult {
  double value = 0.0;
  bool degenerate = false;  // set when either footprint has (near) zero area
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double radians);

bool is_valid(const Box3D& box);
/// Throws InvalidInput naming the offending field.
void validate(const Box3D& box);
/// Returns `box` with theta wrapped; throws if sizes or fields are invalid.
Box3D normalized(Box3D box);

Box3D apply_motion(const Box3D& prev, const MotionDelta& delta);

/// Footprint corners in counter-clockwise order.
std::array<Point2, 4> bev_corners(const Box3D& box);

double polygon_area(const Point2* points, std::size_t count);

IouResult bev_iou_checked(const Box3D& a, const Box3D& b);
double bev_iou(const Box3D& a, const Box3D& b);

/// Volumetric IoU: footprint intersection times vertical overlap.
IouResult iou_3d_checked(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);

double center_distance(const Box3D& a, const Box3D& b);

}  // namespace trajtrack
