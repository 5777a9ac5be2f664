#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dced/errors.hpp"
#include "dced/tensor.hpp"

namespace dced {

// Central-difference gradient oracle for the backward-pass tests. The
// differencing runs in double precision and never touches the analytic
// backward path, so it stays an independent reference.
inline std::vector<double> finite_difference_grad(
    const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("finite_difference_grad: h must be > 0");
  }
  std::vector<double> grad(x.size());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = static_cast<double>(x[i]);
    const float xp = static_cast<float>(xi + h);
    const float xm = static_cast<float>(xi - h);
    probe[i] = xp;
    const double fp = f(probe);
    probe[i] = xm;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw OracleError("finite_difference_grad: non-finite function value at element " +
                        std::to_string(i));
    }
    // The probe points live on the float32 grid; divide by the realized step.
    grad[i] = (fp - fm) / (static_cast<double>(xp) - static_cast<double>(xm));
  }
  return grad;
}

}  // namespace dced
