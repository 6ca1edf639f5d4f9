#pragma once

#include <cstdint>

#include "umbra/image.hpp"
#include "umbra/random.hpp"

namespace umbra::testing {

inline Image random_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace umbra::testing
