#pragma once

#include <functional>
#include <map>
#include <string>

#include "emotok/params.hpp"
#include "emotok/tensor.hpp"

namespace emotok::numerics {

struct GradCheckReport {
    double max_rel_error = 0.0;
    bool pass = true;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central differences (f(p+eps) - f(p-eps)) / 2eps per coordinate against
// the supplied analytic gradients. loss must read parameter values from
// params; entries are perturbed in place and restored. Only parameter names
// present in analytic are checked. Coordinates where both sides are below
// abs_floor count as exact.
GradCheckReport finite_diff_check(const std::function<double()>& loss, ParameterStore& params,
                                  const std::map<std::string, Tensor>& analytic,
                                  double epsilon = 1e-5, double tolerance = 1e-4,
                                  double abs_floor = 1e-8);

}  // namespace emotok::numerics
