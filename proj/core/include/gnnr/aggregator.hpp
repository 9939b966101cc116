#pragma once

#include <array>
#include <string>
#include <string_view>

namespace gnnr {

/// Permutation-invariant neighbor combiners available to message passing.
enum class Aggregator { sum, mean, max, attention };

inline constexpr std::array<Aggregator, 4> kAllAggregators = {
    Aggregator::sum, Aggregator::mean, Aggregator::max, Aggregator::attention};

/// "sum", "mean", "max", "attention-lite".
std::string_view to_string(Aggregator aggregator) noexcept;
/// Inverse of to_string; throws ValidationError for unknown names.
Aggregator parse_aggregator(std::string_view name);

}  // namespace gnnr
