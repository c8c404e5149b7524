#pragma once

#include <array>

namespace budgetal {

// Axis-aligned box in pixel coordinates, [xmin, ymin, xmax, ymax].
struct Box {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() > 0.0 && height() > 0.0 ? width() * height() : 0.0; }
  bool valid() const { return xmin < xmax && ymin < ymax; }

  std::array<double, 4> to_array() const { return {xmin, ymin, xmax, ymax}; }
  static Box from_array(const std::array<double, 4>& v) { return {v[0], v[1], v[2], v[3]}; }

  friend bool operator==(const Box&, const Box&) = default;
};

// Intersection over union. Zero-area boxes give 0.
double iou(const Box& a, const Box& b);

}  // namespace budgetal
