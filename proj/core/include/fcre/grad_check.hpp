#pragma once

#include <functional>
#include <vector>

#include "fcre/matrix.hpp"

namespace fcre {

// Central-difference gradient estimate, (f(x+h*e_i) - f(x-h*e_i)) / (2h) per
// coordinate. Throws NumericError if f returns a non-finite value.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double h = 1e-5);

// Scale-aware discrepancy between an analytic and a finite-difference
// gradient entry: |a - fd| / max(1, |a|, |fd|).
double grad_rel_err(double analytic, double fd);

}  // namespace fcre
