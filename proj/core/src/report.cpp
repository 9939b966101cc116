#include "gnnr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>

#include "gnnr/errors.hpp"
#include "json_util.hpp"

namespace gnnr {

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<SummaryRow> report_summary(std::span<const RunReport> reports) {
  if (reports.empty()) throw ValidationError("report: at least one report is required");
  for (const auto& r : reports) {
    if (r.task_kind != reports.front().task_kind) {
      throw ValidationError("report: mixed task kinds (" + std::string(to_string(reports.front().task_kind)) +
                            " and " + std::string(to_string(r.task_kind)) + ")");
    }
  }
  using Key = std::tuple<std::string, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<double>> values;
  auto add = [&](const Key& key, double v) {
    auto [it, inserted] = values.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(v);
  };
  for (const auto& r : reports) {
    const std::string method(to_string(r.method));
    for (const auto& rec : r.records) {
      for (const auto& [split, m] : rec.metrics) {
        if (m.accuracy) add({method, split, "accuracy"}, *m.accuracy);
        if (m.roc_auc) add({method, split, "roc_auc"}, *m.roc_auc);
        if (m.mae) add({method, split, "mae"}, *m.mae);
        if (m.rmse) add({method, split, "rmse"}, *m.rmse);
        add({method, split, "loss"}, m.loss);
      }
    }
  }
  std::vector<SummaryRow> rows;
  for (const auto& key : order) {
    const auto& v = values.at(key);
    SummaryRow row{std::get<0>(key), std::get<1>(key), std::get<2>(key), v.size()};
    double sum = 0.0;
    for (const double x : v) sum += x;
    row.mean = sum / static_cast<double>(v.size());
    double sq = 0.0;
    for (const double x : v) sq += (x - row.mean) * (x - row.mean);
    row.std = std::sqrt(sq / static_cast<double>(v.size()));
    row.median = median_of(v);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string summary_csv(std::span<const SummaryRow> rows) {
  std::string out = "method,split,metric,count,mean,median,std\n";
  for (const auto& r : rows) {
    out += r.method + ',' + r.split + ',' + r.metric + ',' + std::to_string(r.count) + ',' +
           detail::format_double(r.mean) + ',' + detail::format_double(r.median) + ',' +
           detail::format_double(r.std) + '\n';
  }
  return out;
}

std::string summary_table(std::span<const SummaryRow> rows) {
  std::size_t wm = 6, ws = 5, wx = 6;
  for (const auto& r : rows) {
    wm = std::max(wm, r.method.size());
    ws = std::max(ws, r.split.size());
    wx = std::max(wx, r.metric.size());
  }
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s  %-*s  %-*s  %5s  %10s  %10s  %10s\n", static_cast<int>(wm), "method",
                static_cast<int>(ws), "split", static_cast<int>(wx), "metric", "n", "mean", "median", "std");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s  %-*s  %-*s  %5zu  %10.4f  %10.4f  %10.4f\n", static_cast<int>(wm),
                  r.method.c_str(), static_cast<int>(ws), r.split.c_str(), static_cast<int>(wx), r.metric.c_str(),
                  r.count, r.mean, r.median, r.std);
    out += buf;
  }
  return out;
}

}  // namespace gnnr
