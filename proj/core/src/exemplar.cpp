#include "odetex/exemplar.hpp"

#include <cmath>
#include <stdexcept>

namespace odetex {

void Exemplar::validate() const {
  if (frames.empty()) throw std::invalid_argument("exemplar: no frames");
  if (times.size() != frames.size())
    throw std::invalid_argument("exemplar: times/frames length mismatch");
  const ad::Shape s = frames[0].shape();
  if (s.size() != 3 || s[0] != 3)
    throw std::invalid_argument("exemplar: frames must be [3,H,W]");
  for (const auto& f : frames)
    if (f.shape() != s)
      throw std::invalid_argument("exemplar: inconsistent frame sizes");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("exemplar: times must be increasing");
}

int nearest_frame(const std::vector<double>& times, double t) {
  if (times.empty()) throw std::invalid_argument("nearest_frame: empty");
  int best = 0;
  double best_d = std::abs(times[0] - t);
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double d = std::abs(times[i] - t);
    if (d < best_d) {  // strict: ties keep the earlier frame
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace odetex
