#include "emotok/gradcheck.hpp"

#include <cmath>

namespace emotok::numerics {

GradCheckReport finite_diff_check(const std::function<double()>& loss, ParameterStore& params,
                                  const std::map<std::string, Tensor>& analytic, double epsilon,
                                  double tolerance, double abs_floor) {
    GradCheckReport report;
    for (const auto& [name, grad] : analytic) {
        Tensor& param = params.get(name);
        if (!param.same_shape(grad)) {
            throw ParameterError("finite_diff_check: gradient shape mismatch for " + name);
        }
        for (std::size_t i = 0; i < param.numel(); ++i) {
            const double saved = param[i];
            param[i] = saved + epsilon;
            const double fp = loss();
            param[i] = saved - epsilon;
            const double fm = loss();
            param[i] = saved;
            const double numeric = (fp - fm) / (2.0 * epsilon);
            const double a = grad[i];
            const double diff = std::abs(a - numeric);
            double rel = 0.0;
            if (diff > abs_floor) {
                rel = diff / std::max(std::abs(a), std::abs(numeric));
            }
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = name;
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report.pass = report.max_rel_error <= tolerance;
    return report;
}

}  // namespace emotok::numerics
