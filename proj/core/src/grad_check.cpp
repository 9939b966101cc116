#include "gnnr/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace gnnr {

namespace {

double evaluate(const ScalarFunction& f, const Tensor& point) {
  Tape tape;
  const Var x = tape.constant(point);
  return f(tape, x).value().item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& f, const Tensor& point, double h, double tol,
                           double floor) {
  GradCheckReport report;
  {
    Tape tape;
    const Var x = tape.parameter(point);
    const Var loss = f(tape, x);
    tape.backward(loss);
    report.analytic = tape.grad(x);
  }
  report.numeric = Tensor(point.rows(), point.cols());
  Tensor probe = point;
  bool ok = true;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + h;
    const double up = evaluate(f, probe);
    probe[i] = original - h;
    const double down = evaluate(f, probe);
    probe[i] = original;
    const double numeric = (up - down) / (2.0 * h);
    report.numeric[i] = numeric;

    const double analytic = report.analytic[i];
    const double abs_err = std::abs(analytic - numeric);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    const double rel_err = abs_err / denom;
    if (rel_err > report.max_rel_error) {
      report.max_rel_error = rel_err;
      report.worst_index = i;
    }
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel_err >= tol) ok = false;
  }
  report.passed = ok;
  return report;
}

}  // namespace gnnr
