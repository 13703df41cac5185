#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "vendor/doctest.h"

#include <cmath>
#include <functional>

#include "star/circuits.hpp"
#include "star/pvalue.hpp"

using namespace star;

// Reference values computed with 50-digit arbitrary-precision arithmetic
// (mpmath: gammainc/betainc/loggamma), frozen here as literals.

static bool close_rel(double got, double want, double tol) {
  return std::fabs(got - want) <= tol * std::fabs(want);
}

// log gamma has zeros at 1 and 2, so nearby values need an absolute floor
static bool close_mixed(double got, double want, double tol) {
  return std::fabs(got - want) <= tol * std::max(1.0, std::fabs(want));
}

TEST_CASE("log gamma matches high-precision references") {
  CHECK(close_mixed(log_gamma(0.5), 0.5723649429247000870717137, 1e-14));
  CHECK(close_mixed(log_gamma(1.5), -0.1207822376352452223455184, 1e-14));
  CHECK(close_mixed(log_gamma(9.25), 11.14340011995171246989728, 1e-14));
  CHECK(close_mixed(log_gamma(123.75), 471.0205761609769049824004, 1e-14));
  CHECK(std::fabs(log_gamma(1.0)) <= 1e-14);
  CHECK(std::fabs(log_gamma(2.0)) <= 1e-14);
  // recurrence consistency: Gamma(x+1) = x Gamma(x)
  for (double x : {0.3, 1.7, 4.2, 9.9}) {
    CHECK(close_rel(log_gamma(x + 1), log_gamma(x) + std::log(x), 1e-13));
  }
}

TEST_CASE("incomplete beta and gamma match references") {
  CHECK(close_rel(reg_inc_beta(2.5, 4.5, 0.3), 0.4065390166824592737311558, 1e-12));
  CHECK(close_rel(reg_inc_gamma_p(4.5, 3.25), 0.3109809789119333865195565, 1e-12));
  CHECK(close_rel(reg_inc_gamma_q(0.5, 7.0), 0.0001828106329818350317599966, 1e-12));

  // complements and bounds
  for (double x : {0.05, 0.3, 0.7, 0.95}) {
    CHECK(reg_inc_beta(2.0, 3.0, x) + reg_inc_beta(3.0, 2.0, 1 - x) ==
          doctest::Approx(1.0).epsilon(1e-13));
  }
  CHECK(reg_inc_beta(1.5, 2.5, 0.0) == 0.0);
  CHECK(reg_inc_beta(1.5, 2.5, 1.0) == 1.0);
  for (double x : {0.1, 1.0, 5.0, 20.0}) {
    CHECK(reg_inc_gamma_p(2.5, x) + reg_inc_gamma_q(2.5, x) == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("p-values match high-precision references") {
  CHECK(close_rel(p_value({Dist::kChiSquared, 1}, 3.841459), 0.04999999465319576511115303, 1e-12));
  CHECK(close_rel(p_value({Dist::kChiSquared, 1}, 3.6), 0.05777957112359724368251528, 1e-12));
  CHECK(close_rel(p_value({Dist::kChiSquared, 5}, 1.0), 0.9625657732472963689570821, 1e-12));
  CHECK(close_rel(p_value({Dist::kChiSquared, 14}, 27.5), 0.01656405642715879403399757, 1e-12));
  CHECK(close_rel(p_value({Dist::kFisherF, 1, 4}, 3.375), 0.1400659849120178359277917, 1e-12));
  CHECK(close_rel(p_value({Dist::kFisherF, 3, 20}, 2.5), 0.08884375193768921150433694, 1e-12));
  CHECK(close_rel(p_value({Dist::kFisherF, 6, 9}, 0.75), 0.6249726915743088151779079, 1e-12));
  CHECK(close_rel(p_value({Dist::kFisherF, 2, 2}, 11.0), 1.0 / 12.0, 1e-12));
  CHECK(close_rel(p_value({Dist::kStudentT, 4}, -std::sqrt(2.4)), 0.1962611781492696865290162, 1e-12));
  CHECK(close_rel(p_value({Dist::kStudentT, 10}, 2.0), 0.07338803477074036561786257, 1e-12));
  CHECK(close_rel(p_value({Dist::kStudentT, 3}, 0.5), 0.6514479648481509944350713, 1e-12));
  CHECK(close_rel(p_value({Dist::kStudentT, 37}, 4.25), 0.0001387867438432834921401168, 1e-12));
}

// Independent check: integrate the density with adaptive Simpson quadrature,
// using libm's lgamma for the normalizing constants.
namespace {

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
               double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) < 15 * tol)
    return left + right + (left + right - whole) / 15;
  return simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  return simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

double quad_upper_tail(const DistSpec& d, double stat) {
  switch (d.dist) {
    case Dist::kStudentT: {
      const double v = d.df1;
      const double c = std::exp(std::lgamma((v + 1) / 2) - std::lgamma(v / 2)) /
                       std::sqrt(v * M_PI);
      auto pdf = [&](double t) { return c * std::pow(1 + t * t / v, -(v + 1) / 2); };
      // a power-law tail: the cutoff must be far out for low df
      return integrate(pdf, stat, stat + 4000, 1e-14);
    }
    case Dist::kChiSquared: {
      const double k = d.df1;
      const double c = -std::lgamma(k / 2) - (k / 2) * std::log(2.0);
      auto pdf = [&](double x) {
        return x <= 0 ? 0.0 : std::exp(c + (k / 2 - 1) * std::log(x) - x / 2);
      };
      return integrate(pdf, stat, stat + 80 + 20 * k, 1e-14);
    }
    case Dist::kFisherF: {
      const double a = d.df1, b = d.df2;
      const double c = std::lgamma((a + b) / 2) - std::lgamma(a / 2) - std::lgamma(b / 2) +
                       (a / 2) * std::log(a / b);
      // the tail is a power law, so substitute u = 1/x for a finite interval:
      // integrand g(u) = pdf(1/u) / u^2
      auto g = [&](double u) {
        if (u <= 0) return b > 2 ? 0.0 : std::exp(c - ((a + b) / 2) * std::log(a / b));
        return std::exp(c + (b / 2 - 1) * std::log(u) -
                        ((a + b) / 2) * (std::log(b * u + a) - std::log(b)));
      };
      return integrate(g, 0, 1 / stat, 1e-14);
    }
  }
  return 0;
}

}  // namespace

TEST_CASE("quadrature oracle agrees with the closed forms") {
  struct Case {
    DistSpec d;
    double stat;
  } cases[] = {
      {{Dist::kChiSquared, 1}, 3.841459}, {{Dist::kChiSquared, 7}, 12.0},
      {{Dist::kStudentT, 4}, 1.549},      {{Dist::kStudentT, 25}, 2.9},
      {{Dist::kFisherF, 1, 4}, 3.375},    {{Dist::kFisherF, 5, 12}, 2.1},
  };
  for (const auto& c : cases) {
    const bool two_sided = c.d.dist == Dist::kStudentT;
    const double got = p_value(c.d, c.stat);
    const double want = (two_sided ? 2 : 1) * quad_upper_tail(c.d, c.stat);
    CHECK(std::fabs(got - want) <= 1e-9);
  }
}

TEST_CASE("p-values are monotone and bounded") {
  DistSpec dists[] = {{Dist::kChiSquared, 3}, {Dist::kStudentT, 9}, {Dist::kFisherF, 4, 11}};
  for (const auto& d : dists) {
    double prev = 2;
    for (double s = 0.01; s < 40; s *= 1.45) {
      const double p = p_value(d, s);
      CHECK(p > 0);
      CHECK(p <= 1);
      CHECK(p < prev);
      prev = p;
    }
  }
  CHECK(p_value({Dist::kChiSquared, 2}, 0) == 1.0);
  CHECK(p_value({Dist::kFisherF, 2, 5}, 0) == 1.0);
  CHECK(p_value({Dist::kStudentT, 6}, 0) == 1.0);
  // symmetry of the two-sided t
  CHECK(p_value({Dist::kStudentT, 8}, 1.7) == p_value({Dist::kStudentT, 8}, -1.7));
}

TEST_CASE("one-sided t halves the two-sided tail") {
  for (double t : {0.5, 1.3, 2.8}) {
    CHECK(p_value({Dist::kStudentT, 7}, t, true) ==
          doctest::Approx(p_value({Dist::kStudentT, 7}, t) / 2).epsilon(1e-14));
  }
  // below-center statistics have one-sided p > 1/2
  CHECK(p_value({Dist::kStudentT, 7}, -1.0, true) > 0.5);
  CHECK(p_value({Dist::kStudentT, 7}, 0.0, true) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("critical values invert the p-value map") {
  DistSpec dists[] = {{Dist::kChiSquared, 1},  {Dist::kChiSquared, 10}, {Dist::kStudentT, 4},
                      {Dist::kStudentT, 30},   {Dist::kFisherF, 1, 4},  {Dist::kFisherF, 6, 20}};
  double alphas[] = {0.001, 0.01, 0.05, 0.1, 0.5, 0.9};
  for (const auto& d : dists) {
    for (double a : alphas) {
      const double c = critical_value(d, a);
      CHECK(std::fabs(p_value(d, c) - a) <= 1e-9);
    }
  }
  // the median of any t is zero, so one-sided alpha = 1/2 pins the threshold
  CHECK(critical_value({Dist::kStudentT, 11}, 0.5, true) == 0.0);
}

TEST_CASE("test-level wrappers map Pearson through the t transform") {
  const unsigned df = 10;
  for (double r : {0.1, 0.45, 0.8, -0.6}) {
    const double t = r * std::sqrt(df / (1 - r * r));
    CHECK(p_from_test(TestKind::kPearson, r, df, 0) ==
          doctest::Approx(p_value({Dist::kStudentT, static_cast<double>(df)}, t)).epsilon(1e-14));
  }
  // critical statistic comes back in r space and round-trips
  for (double a : {0.01, 0.05, 0.2}) {
    const double rc = critical_statistic(TestKind::kPearson, a, df, 0);
    CHECK(rc > 0);
    CHECK(rc < 1);
    CHECK(p_from_test(TestKind::kPearson, rc, df, 0) == doctest::Approx(a).epsilon(1e-9));
  }
  CHECK(p_from_test(TestKind::kTTest, 2.0, 10, 0) ==
        p_value({Dist::kStudentT, 10}, 2.0));
  CHECK(p_from_test(TestKind::kChiSq, 3.6, 1, 0) == p_value({Dist::kChiSquared, 1}, 3.6));
  CHECK(p_from_test(TestKind::kFTest, 3.375, 1, 4) == p_value({Dist::kFisherF, 1, 4}, 3.375));
}
