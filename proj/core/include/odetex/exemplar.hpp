#pragma once

#include <string>
#include <vector>

#include "odetex/field.hpp"
#include "odetex/tensor.hpp"

namespace odetex {

// A short video of a developing appearance: frames in [0,1], one timestamp
// per frame, monotonically increasing.
struct Exemplar {
  std::vector<ad::Tensor> frames;  // [3,H,W]
  std::vector<double> times;
  field::Mode mode = field::Mode::kRgb;
  std::string name;

  int height() const { return frames.at(0).shape()[1]; }
  int width() const { return frames.at(0).shape()[2]; }
  void validate() const;
};

// Index of the frame whose timestamp is nearest to t; ties go to the
// earlier frame.
int nearest_frame(const std::vector<double>& times, double t);

}  // namespace odetex
