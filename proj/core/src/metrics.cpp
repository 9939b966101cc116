#include "gnnr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gnnr/autodiff.hpp"
#include "gnnr/errors.hpp"

namespace gnnr {

std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (positive[i]) {
      pos += 1;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

Metrics compute_metrics(const Tensor& outputs, const Targets& targets, const LossSpec& loss,
                        TaskKind kind) {
  if (targets.rows.empty()) throw ValidationError("evaluate: empty mask");
  Metrics m;
  m.count = targets.rows.size();
  {
    Tape tape;
    m.loss = loss_on_rows(tape.constant(outputs), targets, loss).value().item();
  }
  const OutputSlice slice = loss.slice_for(outputs.cols());
  if (is_classification(kind)) {
    std::size_t correct = 0;
    std::vector<double> scores;
    std::vector<int> positive;
    for (std::size_t i = 0; i < targets.rows.size(); ++i) {
      const auto row = outputs.row(targets.rows[i]).subspan(slice.start, slice.length);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (static_cast<double>(best) == targets.values[i]) ++correct;
      if (slice.length == 2) {
        scores.push_back(row[1] - row[0]);
        positive.push_back(targets.values[i] == 1.0 ? 1 : 0);
      }
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.count);
    if (slice.length == 2) m.roc_auc = roc_auc(scores, positive);
  } else {
    double abs_sum = 0, sq_sum = 0;
    for (std::size_t i = 0; i < targets.rows.size(); ++i) {
      const double e = outputs(targets.rows[i], slice.start) - targets.values[i];
      abs_sum += std::abs(e);
      sq_sum += e * e;
    }
    m.mae = abs_sum / static_cast<double>(m.count);
    m.rmse = std::sqrt(sq_sum / static_cast<double>(m.count));
  }
  return m;
}

}  // namespace gnnr
