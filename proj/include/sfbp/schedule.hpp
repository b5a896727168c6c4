#pragma once

#include <cmath>
#include <stdexcept>

namespace sfbp {

/// Step sizes lambda_n and penalty weights beta_n, together with the
/// continuous weight beta(t) used by the time-discretized path builder.
///
/// PowerProduct is the experiment family beta_n = (n + n0)^a / L and
/// lambda_n * beta_n = c / L, so lambda_n = c (n + n0)^{-a}.
struct Schedule {
    enum class Kind { PowerProduct, Constant };

    Kind kind = Kind::PowerProduct;
    double a = 0.75;
    double n0 = 10.0;
    double c = 1.0;  // lambda_n * beta_n = c / l_psi
    double l_psi = 1.0;
    double const_lambda = 0.1;
    double const_beta = 1.0;
    bool enforce_step_rule = true;

    static Schedule power_product(double a, double n0, double c, double l_psi) {
        Schedule s;
        s.kind = Kind::PowerProduct;
        s.a = a;
        s.n0 = n0;
        s.c = c;
        s.l_psi = l_psi;
        s.validate();
        return s;
    }

    static Schedule constant(double lambda, double beta, double l_psi = 1.0) {
        Schedule s;
        s.kind = Kind::Constant;
        s.const_lambda = lambda;
        s.const_beta = beta;
        s.l_psi = l_psi;
        s.validate();
        return s;
    }

    void validate() const {
        if (l_psi <= 0) throw std::invalid_argument("schedule: l_psi must be positive");
        if (kind == Kind::PowerProduct) {
            if (a < 0) throw std::invalid_argument("schedule: beta must be nondecreasing (a >= 0)");
            if (n0 <= 0 || c <= 0) throw std::invalid_argument("schedule: n0 and c must be positive");
            if (enforce_step_rule && c >= 2.0)
                throw std::invalid_argument("schedule: step rule lambda_n*beta_n < 2/L_psi requires c < 2");
        } else {
            if (const_lambda <= 0 || const_beta <= 0)
                throw std::invalid_argument("schedule: lambda and beta must be positive");
            if (enforce_step_rule && const_lambda * const_beta >= 2.0 / l_psi)
                throw std::invalid_argument("schedule: step rule lambda*beta < 2/L_psi violated");
        }
    }

    double beta(long n) const {
        return kind == Kind::PowerProduct ? std::pow(static_cast<double>(n) + n0, a) / l_psi : const_beta;
    }

    double lambda(long n) const {
        return kind == Kind::PowerProduct ? c * std::pow(static_cast<double>(n) + n0, -a) : const_lambda;
    }

    double beta_continuous(double t) const {
        return kind == Kind::PowerProduct ? std::pow(t + n0, a) / l_psi : const_beta;
    }
};

struct ScheduleEval {
    double lambda_n;
    double beta_n;
};

inline ScheduleEval schedule_eval(const Schedule& s, long n) {
    if (n < 0) throw std::invalid_argument("schedule_eval: n must be nonnegative");
    return {s.lambda(n), s.beta(n)};
}

}  // namespace sfbp
