#include "riskadapt/metrics.hpp"

#include "riskadapt/error.hpp"

namespace riskadapt {

Confusion confusion(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw PreconditionError("prediction and label lists differ in length");
  if (predicted.empty()) throw PreconditionError("cannot score an empty prediction list");
  Confusion c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i]) (truth[i] ? c.tp : c.fp)++;
    else (truth[i] ? c.fn : c.tn)++;
  }
  return c;
}

Prf prf(const Confusion& c) {
  Prf r;
  if (c.tp + c.fp) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

Prf f1_score(std::span<const int> predicted, std::span<const int> truth) { return prf(confusion(predicted, truth)); }

}  // namespace riskadapt
