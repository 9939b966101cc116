#include "gnnr/aggregator.hpp"

#include "gnnr/errors.hpp"

namespace gnnr {

std::string_view to_string(Aggregator aggregator) noexcept {
  switch (aggregator) {
    case Aggregator::sum:
      return "sum";
    case Aggregator::mean:
      return "mean";
    case Aggregator::max:
      return "max";
    case Aggregator::attention:
      return "attention-lite";
  }
  return "unknown";
}

Aggregator parse_aggregator(std::string_view name) {
  for (const auto a : kAllAggregators) {
    if (to_string(a) == name) return a;
  }
  if (name == "attention") return Aggregator::attention;
  throw ValidationError("unknown aggregator '" + std::string(name) + "'");
}

}  // namespace gnnr
