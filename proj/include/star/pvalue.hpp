#pragma once

namespace star {

enum class TestKind;  // star/circuits.hpp

enum class Dist { kStudentT, kChiSquared, kFisherF };

struct DistSpec {
  Dist dist;
  double df1 = 0;
  double df2 = 0;  // FisherF only
};

// Building blocks, exposed for direct testing. All take positive parameters.
double log_gamma(double x);
double reg_inc_beta(double a, double b, double x);  // I_x(a, b)
double reg_inc_gamma_p(double a, double x);         // P(a, x)
double reg_inc_gamma_q(double a, double x);         // Q(a, x) = 1 - P(a, x)

// p of a realized statistic. Student t supports two-sided (default) and
// one-sided upper-tail; chi-squared and F are inherently upper-tail.
double p_value(const DistSpec& d, double stat, bool one_sided = false);

// Inverse: the statistic c with p_value(c) == alpha, alpha in (0, 1).
// Bisection after geometric bracketing; converges to double-precision limits.
double critical_value(const DistSpec& d, double alpha, bool one_sided = false);

// Test-level wrappers. Pearson's r is mapped through t = r*sqrt(df/(1-r^2))
// with df = n-2, so its critical value comes back in r space.
DistSpec dist_for_test(TestKind kind, unsigned df1, unsigned df2);
double p_from_test(TestKind kind, double stat, unsigned df1, unsigned df2,
                   bool one_sided = false);
double critical_statistic(TestKind kind, double alpha, unsigned df1, unsigned df2,
                          bool one_sided = false);

}  // namespace star
