#pragma once

// Published prediction-outcome counts and printed regression/parity figures for
// the six concept blocks used by the parity tests and the acceptance binary.

#include <array>
#include <string>
#include <vector>

#include "biasloop/stats/stats.hpp"

namespace published {

using biasloop::stats::LogisticCell;
using biasloop::stats::Stage;

struct Counts {
  std::uint64_t success;
  std::uint64_t failure;
};

struct Printed {
  double beta;
  double odds;
  bool bold;
};

struct Block {
  std::string name;
  Counts before_male, before_female, after_male, after_female;
  Printed stage, gender;
  // success %, male then female, before then after; DP before, DP after
  std::array<double, 4> percent;
  std::array<double, 2> dp;

  std::vector<LogisticCell> cells() const {
    return {{Stage::before, "male", before_male.success, before_male.failure},
            {Stage::before, "female", before_female.success, before_female.failure},
            {Stage::after, "male", after_male.success, after_male.failure},
            {Stage::after, "female", after_female.success, after_female.failure}};
  }
};

inline const std::vector<Block>& blocks() {
  static const std::vector<Block> data{
      {"Sports", {2277, 946}, {220, 110}, {2408, 457}, {538, 173},
       {-0.728, 0.48, true}, {0.386, 1.47, true}, {70.65, 66.67, 84.05, 75.67}, {-3.98, -8.38}},
      {"Caring", {14, 18}, {10, 21}, {13, 14}, {26, 11},
       {-0.914, 0.40, true}, {-0.221, 0.80, false}, {43.75, 32.26, 48.15, 70.27}, {-11.49, 22.12}},
      {"Happiness (PHASE)", {2617, 798}, {3035, 430}, {1201, 372}, {4331, 1001},
       {0.286, 1.33, true}, {-0.541, 0.58, true}, {76.63, 87.59, 76.35, 81.23}, {10.96, 4.88}},
      {"Anger (PHASE)", {82, 125}, {11, 24}, {39, 64}, {50, 89},
       {-0.003, 1.00, false}, {0.172, 1.19, false}, {39.61, 31.43, 37.86, 35.97}, {-8.18, -1.89}},
      {"Happiness (RAF-DB)", {1465, 306}, {2362, 428}, {118, 134}, {2299, 2010},
       {1.593, 4.92, true}, {-0.176, 0.84, true}, {82.72, 84.66, 46.82, 53.35}, {1.94, 6.53}},
      {"Anger (RAF-DB)", {308, 146}, {142, 91}, {76, 31}, {369, 211},
       {-0.125, 0.88, false}, {0.314, 1.37, false}, {67.84, 60.94, 71.02, 63.62}, {-6.90, -7.41}},
  };
  return data;
}

}  // namespace published
