#pragma once

#include <functional>
#include <vector>

#include "cnp/tape.hpp"
#include "cnp/tensor.hpp"

namespace cnp {

/// Builds a scalar (1x1x1x1) node from a tape and the id of the point leaf.
using ScalarFn = std::function<Tape<double>::Id(Tape<double>&, Tape<double>::Id)>;

/// Central-difference check of d(fn)/d(point), evaluated in double precision.
/// Returns the max relative error over elements, with denominator
/// max(|analytic|, |numeric|, 1e-8).
double gradcheck(const ScalarFn& fn, const TensorD& point, double epsilon = 1e-5);

/// Same check against a set of tensors (e.g. all parameters of a model).
/// `build` must emit the scalar from leaves created in `points` order.
using MultiScalarFn =
    std::function<Tape<double>::Id(Tape<double>&, const std::vector<Tape<double>::Id>&)>;
double gradcheck_many(const MultiScalarFn& build, std::vector<TensorD> points,
                      double epsilon = 1e-5);

}  // namespace cnp
