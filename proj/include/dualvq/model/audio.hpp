#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dualvq {

struct AudioSignal {
  std::vector<double> samples;
  std::size_t sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  double seconds() const { return static_cast<double>(samples.size()) / static_cast<double>(sample_rate); }

  void validate() const {
    if (samples.empty()) throw std::invalid_argument("audio: no samples");
    if (sample_rate == 0) throw std::invalid_argument("audio: sample rate must be positive");
  }

  AudioSignal slice(std::size_t begin, std::size_t count) const {
    if (begin + count > samples.size()) throw std::out_of_range("audio: slice past end");
    return {std::vector<double>(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                samples.begin() + static_cast<std::ptrdiff_t>(begin + count)),
            sample_rate};
  }
};

/// 8-bit mu-law companding (mu = 255) used by the categorical reconstruction mode.
inline std::size_t mulaw_encode(double x) {
  x = std::clamp(x, -1.0, 1.0);
  const double y = std::copysign(std::log1p(255.0 * std::abs(x)) / std::log1p(255.0), x);
  return static_cast<std::size_t>(std::clamp(std::lround((y + 1.0) * 127.5), 0L, 255L));
}

inline double mulaw_decode(std::size_t q) {
  const double y = static_cast<double>(q) / 127.5 - 1.0;
  return std::copysign((std::pow(256.0, std::abs(y)) - 1.0) / 255.0, y);
}

}  // namespace dualvq
