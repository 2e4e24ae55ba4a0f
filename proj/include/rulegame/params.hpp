#pragma once

#include <stdexcept>
#include <string>

namespace rulegame {

/// Board geometry and episode generation bounds.
struct EpisodeParams {
  int length = 20;   // L, positions 1..L
  int k_min = 5;     // piece count drawn uniformly from [k_min, k_max]
  int k_max = 10;
  int colors = 4;    // C, a prefix of the palette R,G,B,Y
  double gamma = 0.95;

  /// Throws std::invalid_argument when the bounds are inconsistent.
  void check() const {
    if (length < 1) throw std::invalid_argument("L must be >= 1");
    if (k_min < 1 || k_min > k_max)
      throw std::invalid_argument("need 1 <= Kmin <= Kmax");
    if (k_max > length) throw std::invalid_argument("Kmax must not exceed L");
    if (colors < 1 || colors > 4) throw std::invalid_argument("C must be in 1..4");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0,1)");
  }

  friend bool operator==(const EpisodeParams&, const EpisodeParams&) = default;
};

} // namespace rulegame
