#include "star/pvalue.hpp"

#include <cmath>

#include "star/circuits.hpp"

namespace star {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kTiny = 1e-300;
constexpr double kEps = 1e-16;

double beta_cf(double a, double b, double x) {
  const double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; m++) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double log_gamma(double x) {
  if (!(x > 0)) throw ParamError("log_gamma: argument must be positive");
  double shift = 0;
  while (x < 10) {
    shift -= std::log(x);
    x += 1;
  }
  // Stirling with Bernoulli terms B_2..B_16; next term < 2e-18 at x = 10
  static const double kCoef[] = {1.0 / 12,   -1.0 / 360,       1.0 / 1260, -1.0 / 1680,
                                 1.0 / 1188, -691.0 / 360360,  1.0 / 156,  -3617.0 / 122400};
  const double inv = 1 / x, inv2 = inv * inv;
  double series = 0, term = inv;
  for (double c : kCoef) {
    series += c * term;
    term *= inv2;
  }
  return shift + (x - 0.5) * std::log(x) - x + kHalfLog2Pi + series;
}

double reg_inc_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0)) throw ParamError("reg_inc_beta: parameters must be positive");
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  const double front =
      std::exp(a * std::log(x) + b * std::log1p(-x) + log_gamma(a + b) - log_gamma(a) -
               log_gamma(b));
  if (x < (a + 1) / (a + b + 2)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1 - x) / b;
}

double reg_inc_gamma_p(double a, double x) {
  if (!(a > 0)) throw ParamError("reg_inc_gamma: parameter must be positive");
  if (x <= 0) return 0;
  if (x >= a + 1) return 1.0 - reg_inc_gamma_q(a, x);
  double ap = a, sum = 1.0 / a, del = sum;
  for (int i = 0; i < 500; i++) {
    ap += 1;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
}

double reg_inc_gamma_q(double a, double x) {
  if (!(a > 0)) throw ParamError("reg_inc_gamma: parameter must be positive");
  if (x <= 0) return 1;
  if (x < a + 1) return 1.0 - reg_inc_gamma_p(a, x);
  double b = x + 1 - a, c = 1 / kTiny, d = 1 / b, h = d;
  for (int i = 1; i <= 500; i++) {
    const double an = -i * (i - a);
    b += 2;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
}

double p_value(const DistSpec& d, double stat, bool one_sided) {
  switch (d.dist) {
    case Dist::kStudentT: {
      const double df = d.df1;
      const double p2 = reg_inc_beta(df / 2, 0.5, df / (df + stat * stat));
      if (!one_sided) return p2;
      return stat >= 0 ? p2 / 2 : 1.0 - p2 / 2;
    }
    case Dist::kChiSquared:
      return stat <= 0 ? 1.0 : reg_inc_gamma_q(d.df1 / 2, stat / 2);
    case Dist::kFisherF:
      if (stat <= 0) return 1.0;
      return reg_inc_beta(d.df2 / 2, d.df1 / 2, d.df2 / (d.df2 + d.df1 * stat));
  }
  throw ParamError("unknown distribution");
}

double critical_value(const DistSpec& d, double alpha, bool one_sided) {
  if (!(alpha > 0 && alpha < 1)) throw ParamError("critical_value: alpha must be in (0, 1)");
  const bool signed_domain = d.dist == Dist::kStudentT && one_sided;
  if (signed_domain && alpha == 0.5) return 0.0;  // p(0) is exactly one half

  auto p = [&](double c) { return p_value(d, c, one_sided); };
  double lo, hi = 1;
  while (p(hi) > alpha && hi < 1e300) hi *= 2;
  if (signed_domain) {
    lo = -1;
    while (p(lo) < alpha && lo > -1e300) lo *= 2;
  } else {
    lo = 0;
  }
  // p is decreasing in the statistic; shrink [lo, hi] to double resolution
  for (int i = 0; i < 400; i++) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (p(mid) >= alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

DistSpec dist_for_test(TestKind kind, unsigned df1, unsigned df2) {
  switch (kind) {
    case TestKind::kTTest:
    case TestKind::kPearson:
      return {Dist::kStudentT, static_cast<double>(df1), 0};
    case TestKind::kChiSq:
      return {Dist::kChiSquared, static_cast<double>(df1), 0};
    case TestKind::kFTest:
      return {Dist::kFisherF, static_cast<double>(df1), static_cast<double>(df2)};
  }
  throw ParamError("unknown test kind");
}

double p_from_test(TestKind kind, double stat, unsigned df1, unsigned df2, bool one_sided) {
  if (kind == TestKind::kPearson) {
    const double df = df1;
    if (std::fabs(stat) >= 1) return one_sided ? (stat >= 1 ? 0.0 : 1.0) : 0.0;
    const double t = stat * std::sqrt(df / (1 - stat * stat));
    return p_value({Dist::kStudentT, df, 0}, t, one_sided);
  }
  return p_value(dist_for_test(kind, df1, df2), stat, one_sided);
}

double critical_statistic(TestKind kind, double alpha, unsigned df1, unsigned df2,
                          bool one_sided) {
  if (kind == TestKind::kPearson) {
    const double t = critical_value({Dist::kStudentT, static_cast<double>(df1), 0}, alpha,
                                    one_sided);
    return t / std::sqrt(df1 + t * t);
  }
  return critical_value(dist_for_test(kind, df1, df2), alpha, one_sided);
}

}  // namespace star
