#include <cmath>
#include <vector>

#include "nseg/autodiff.hpp"
#include "nseg/errors.hpp"

namespace nseg {

namespace {

double evaluate(const std::function<ad::Var(ad::Tape&)>& fn) {
    ad::Tape tape;
    const ad::Var loss = fn(tape);
    if (loss.rows() != 1 || loss.cols() != 1) {
        throw InvalidInput("finite_diff_check: loss must be scalar");
    }
    return loss.value()(0, 0);
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<ad::Var(ad::Tape&)>& fn,
                                  std::span<Parameter* const> params, double eps,
                                  std::size_t max_entries_per_param) {
    for (Parameter* p : params) p->zero_grad();
    double base = 0.0;
    {
        ad::Tape tape;
        const ad::Var loss = fn(tape);
        tape.backward(loss);
        base = loss.value()(0, 0);
    }
    if (evaluate(fn) != base) {
        throw CheckError("finite_diff_check: loss function is not deterministic");
    }

    GradCheckResult result;
    for (Parameter* p : params) {
        const Eigen::Index total = p->value.size();
        Eigen::Index stride = 1;
        if (max_entries_per_param > 0 && static_cast<std::size_t>(total) > max_entries_per_param) {
            stride = (total + static_cast<Eigen::Index>(max_entries_per_param) - 1) /
                     static_cast<Eigen::Index>(max_entries_per_param);
        }
        for (Eigen::Index k = 0; k < total; k += stride) {
            double& x = p->value.data()[k];
            const double original = x;
            x = original + eps;
            const double plus = evaluate(fn);
            x = original - eps;
            const double minus = evaluate(fn);
            x = original;
            const double numeric = (plus - minus) / (2.0 * eps);
            const double analytic = p->grad.data()[k];
            const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
            if (!(err <= result.max_rel_error)) {
                result.max_rel_error = std::isnan(err) ? INFINITY : err;
                result.worst_parameter = p->name;
                result.worst_row = k % p->value.rows();
                result.worst_col = k / p->value.rows();
            }
        }
    }
    return result;
}

}  // namespace nseg
