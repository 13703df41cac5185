#include "star/fixed_point.hpp"

#include <cmath>

namespace star {

FixedPoint fp_encode(double x, unsigned scale_exp) {
  if (!std::isfinite(x)) throw ParamError("encode: non-finite value");
  if (x == 0.0) return {0, scale_exp};

  // x = m * 2^(k-53) with m a 53-bit integer (exact), so x*2^e = m * 2^(k-53+e).
  int k = 0;
  double frac = std::frexp(x, &k);
  auto m = static_cast<long>(std::ldexp(frac, 53));  // |m| in [2^52, 2^53)
  mpz_class mag(std::labs(m));
  long sh = static_cast<long>(k) - 53 + static_cast<long>(scale_exp);

  mpz_class raw;
  if (sh >= 0) {
    raw = mag << sh;
  } else {
    // round |m| / 2^-sh half away from zero
    unsigned long down = static_cast<unsigned long>(-sh);
    mpz_class q = mag >> down;
    mpz_class rem = mag - (q << down);
    mpz_class half = mpz_class(1) << (down - 1);
    if (rem >= half) q += 1;
    raw = q;
  }
  if (m < 0) raw = -raw;
  return {raw, scale_exp};
}

static double signed_ratio(const mpz_class& n_in, const mpz_class& d_in, long exp2) {
  // sign handled by caller; here n, d > 0; computes n / (d * 2^exp2) rounded to nearest-even
  mpz_class n = n_in, d = d_in;
  if (exp2 > 0)
    d <<= exp2;
  else if (exp2 < 0)
    n <<= -exp2;

  long nb = static_cast<long>(mpz_sizeinbase(n.get_mpz_t(), 2));
  long db = static_cast<long>(mpz_sizeinbase(d.get_mpz_t(), 2));
  // shift so the quotient has ~55 significant bits, giving a guard bit + remainder sticky
  long sh = nb - db - 55;
  mpz_class q, r;
  if (sh >= 0) {
    mpz_class ds = d << sh;
    mpz_tdiv_qr(q.get_mpz_t(), r.get_mpz_t(), n.get_mpz_t(), ds.get_mpz_t());
  } else {
    mpz_class ns = n << (-sh);
    mpz_tdiv_qr(q.get_mpz_t(), r.get_mpz_t(), ns.get_mpz_t(), d.get_mpz_t());
  }
  // value = (q + r/d') * 2^sh with q having 55-56 bits; round q to 53 bits
  long qb = static_cast<long>(mpz_sizeinbase(q.get_mpz_t(), 2));
  long drop = qb - 53;
  if (drop <= 0) throw Error("ratio_to_double: internal quotient width");
  mpz_class top = q >> drop;
  mpz_class rem = q - (top << drop);
  mpz_class half = mpz_class(1) << (drop - 1);
  bool sticky = (r != 0) || (rem != 0 && rem != half);
  if (rem > half || (rem == half && (sticky || mpz_odd_p(top.get_mpz_t()))))
    top += 1;  // ties (rem == half && !sticky) go to even
  double base = top.get_d();  // <= 2^53, exact
  return std::ldexp(base, static_cast<int>(sh + drop));
}

double ratio_to_double(const mpz_class& num, const mpz_class& den, long exp2) {
  if (den == 0) throw ParamError("ratio_to_double: zero denominator");
  if (num == 0) return 0.0;
  int sign = mpz_sgn(num.get_mpz_t()) * mpz_sgn(den.get_mpz_t());
  double mag = signed_ratio(abs(num), abs(den), exp2);
  return sign < 0 ? -mag : mag;
}

double fp_decode(const FixedPoint& v) {
  return ratio_to_double(v.raw, 1, static_cast<long>(v.scale_exp));
}

mpz_class to_ring(const mpz_class& z, const mpz_class& N) {
  mpz_class twice = 2 * abs(z);
  if (twice >= N) throw BudgetError("to_ring: |z| >= N/2");
  mpz_class w = z % N;
  if (w < 0) w += N;
  return w;
}

mpz_class from_ring(const mpz_class& w, const mpz_class& N) {
  if (w < 0 || w >= N) throw ParamError("from_ring: representative outside [0, N)");
  // centered: w > (N-1)/2 maps to w - N
  if (2 * w > N - 1) return w - N;
  return w;
}

}  // namespace star
