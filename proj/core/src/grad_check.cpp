#include "fcre/grad_check.hpp"

#include <cmath>

#include "fcre/errors.hpp"

namespace fcre {

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double h) {
  std::vector<double> grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value");
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double grad_rel_err(double analytic, double fd) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(fd)});
  return std::abs(analytic - fd) / denom;
}

}  // namespace fcre
