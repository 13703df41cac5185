#pragma once

#include "star/common.hpp"

namespace star {

// value represented = raw / 2^scale_exp
struct FixedPoint {
  mpz_class raw;
  unsigned scale_exp = 0;
};

// raw = round-half-away-from-zero(x * 2^e); exact (no double rounding).
FixedPoint fp_encode(double x, unsigned scale_exp);

// Correctly rounded (nearest-even) raw / 2^scale_exp.
double fp_decode(const FixedPoint& v);

// Correctly rounded num / (den * 2^exp2) with exp2 possibly negative; den != 0.
double ratio_to_double(const mpz_class& num, const mpz_class& den, long exp2);

// Centered embedding of signed integers into [0, N). Requires |z| < N/2.
mpz_class to_ring(const mpz_class& z, const mpz_class& N);

// Inverse: representative in [-N/2, N/2). Requires w in [0, N).
mpz_class from_ring(const mpz_class& w, const mpz_class& N);

// Proven upper bound on |raw| of a wire; ops reject results that reach N/2.
struct MagnitudeBudget {
  mpz_class bound;

  static MagnitudeBudget for_add(const MagnitudeBudget& a, const MagnitudeBudget& b) {
    return {a.bound + b.bound};
  }
  static MagnitudeBudget for_mul(const MagnitudeBudget& a, const MagnitudeBudget& b) {
    return {a.bound * b.bound};
  }
  static MagnitudeBudget for_const_mult(const MagnitudeBudget& a, const mpz_class& c) {
    return {a.bound * abs(c)};
  }
  void check(const mpz_class& N) const {
    if (2 * bound >= N) throw BudgetError("magnitude budget reached N/2");
  }
};

}  // namespace star
