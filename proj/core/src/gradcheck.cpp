#include "cnp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cnp {

namespace {

double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

double gradcheck(const ScalarFn& fn, const TensorD& point, double epsilon) {
  MultiScalarFn build = [&fn](Tape<double>& tape, const std::vector<Tape<double>::Id>& ids) {
    return fn(tape, ids[0]);
  };
  return gradcheck_many(build, {point}, epsilon);
}

double gradcheck_many(const MultiScalarFn& build, std::vector<TensorD> points, double epsilon) {
  // Analytic gradients in one reverse sweep.
  std::vector<TensorD> analytic(points.size());
  {
    Tape<double> tape;
    std::vector<Tape<double>::Id> ids;
    ids.reserve(points.size());
    for (const auto& p : points) ids.push_back(tape.leaf(p, true));
    const auto root = build(tape, ids);
    tape.backward(root);
    for (std::size_t t = 0; t < points.size(); ++t)
      analytic[t] = tape.has_grad(ids[t]) ? tape.grad(ids[t]) : TensorD(points[t].shape);
  }

  auto eval = [&]() {
    Tape<double> tape;
    std::vector<Tape<double>::Id> ids;
    ids.reserve(points.size());
    for (const auto& p : points) ids.push_back(tape.leaf(p, false));
    return tape.value(build(tape, ids)).data[0];
  };

  double max_err = 0.0;
  for (std::size_t t = 0; t < points.size(); ++t) {
    for (std::size_t i = 0; i < points[t].data.size(); ++i) {
      const double saved = points[t].data[i];
      points[t].data[i] = saved + epsilon;
      const double fp = eval();
      points[t].data[i] = saved - epsilon;
      const double fm = eval();
      points[t].data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      max_err = std::max(max_err, rel_error(analytic[t].data[i], numeric));
    }
  }
  return max_err;
}

}  // namespace cnp
