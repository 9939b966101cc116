#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gnnr/experiment.hpp"

namespace gnnr {

struct SummaryRow {
  std::string method;
  std::string split;
  std::string metric;
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  /// Population standard deviation (divides by count).
  double std = 0.0;
};

/// Per (method, split, metric) statistics across seeds, in first-seen order.
/// Throws ValidationError on an empty list or mixed task kinds.
std::vector<SummaryRow> report_summary(std::span<const RunReport> reports);

/// `method,split,metric,count,mean,median,std`
std::string summary_csv(std::span<const SummaryRow> rows);
/// Aligned plain-text table.
std::string summary_table(std::span<const SummaryRow> rows);

}  // namespace gnnr
