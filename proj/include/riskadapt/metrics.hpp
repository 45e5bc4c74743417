#pragma once

#include <cstddef>
#include <span>

namespace riskadapt {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Labels are 0/1. Throws PreconditionError on length mismatch or empty input.
Confusion confusion(std::span<const int> predicted, std::span<const int> truth);

// Zero denominators score 0.
Prf prf(const Confusion& c);
Prf f1_score(std::span<const int> predicted, std::span<const int> truth);

}  // namespace riskadapt
