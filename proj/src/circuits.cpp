#include "star/circuits.hpp"

#include <cmath>

namespace star {

namespace {

Share share_sum(Engine& eng, const std::vector<Share>& xs, size_t lo, size_t hi) {
  Share acc = xs[lo];
  for (size_t i = lo + 1; i < hi; i++) acc = eng.add_shares(acc, xs[i]);
  return acc;
}

CipherWire wire_sum(Engine& eng, const std::vector<CipherWire>& ws, size_t lo, size_t hi) {
  CipherWire acc = ws[lo];
  for (size_t i = lo + 1; i < hi; i++) acc = eng.wire_add(acc, ws[i]);
  return acc;
}

void check_scale_neutral(const TestStatisticPair& p) {
  if (!p.public_den && p.num.scale_exp != p.den.scale_exp)
    throw Error("statistic pair lost scale neutrality");
}

}  // namespace

std::string to_string(TestKind k) {
  switch (k) {
    case TestKind::kTTest: return "TTEST";
    case TestKind::kPearson: return "PEARSON";
    case TestKind::kChiSq: return "CHISQ";
    case TestKind::kFTest: return "FTEST";
  }
  throw ParamError("unknown test kind");
}

TestKind test_kind_from_string(const std::string& s) {
  if (s == "TTEST") return TestKind::kTTest;
  if (s == "PEARSON") return TestKind::kPearson;
  if (s == "CHISQ") return TestKind::kChiSq;
  if (s == "FTEST") return TestKind::kFTest;
  throw ParamError("unknown test kind: " + s);
}

void TestSpec::validate() const {
  switch (kind) {
    case TestKind::kTTest:
    case TestKind::kPearson:
      if (columns.size() != 2) throw ParamError("test spec: exactly two columns required");
      if (!null_probs.empty()) throw ParamError("test spec: null_probs only apply to CHISQ");
      break;
    case TestKind::kChiSq: {
      if (columns.size() != 1) throw ParamError("test spec: CHISQ takes one column");
      if (null_probs.size() < 2) throw ParamError("test spec: need at least two categories");
      double sum = 0;
      for (double p : null_probs) {
        if (!(p > 0)) throw ParamError("test spec: null probabilities must be positive");
        sum += p;
      }
      if (std::fabs(sum - 1.0) > 1e-12)
        throw ParamError("test spec: null probabilities must sum to 1");
      break;
    }
    case TestKind::kFTest:
      if (columns.size() < 2) throw ParamError("test spec: FTEST needs at least two groups");
      if (!null_probs.empty()) throw ParamError("test spec: null_probs only apply to CHISQ");
      break;
  }
  for (const auto& c : columns)
    if (c.empty()) throw ParamError("test spec: empty column name");
}

nlohmann::json TestSpec::to_json() const {
  nlohmann::json j;
  j["test"] = to_string(kind);
  j["columns"] = columns;
  j["sidedness"] = one_sided ? "one-sided" : "two-sided";
  if (kind == TestKind::kChiSq) j["null_probs"] = null_probs;
  return j;
}

TestSpec TestSpec::from_json(const nlohmann::json& j) {
  TestSpec s;
  s.kind = test_kind_from_string(j.at("test").get<std::string>());
  s.columns = j.at("columns").get<std::vector<std::string>>();
  std::string side = j.value("sidedness", "two-sided");
  if (side != "two-sided" && side != "one-sided")
    throw ParamError("test spec: bad sidedness: " + side);
  s.one_sided = side == "one-sided";
  if (j.contains("null_probs")) s.null_probs = j.at("null_probs").get<std::vector<double>>();
  s.validate();
  return s;
}

// nlohmann::json keeps object keys sorted, so dump() is already canonical
std::string TestSpec::canonical_json() const { return to_json().dump(); }

Bytes TestSpec::hash() const { return sha256(canonical_json()); }

TestStatisticPair ttest_circuit(Engine& eng, const std::vector<CipherWire>& x,
                                const std::vector<CipherWire>& y, CircuitStrategy strategy) {
  const size_t n = x.size();
  if (n < 2 || y.size() != n) throw ParamError("ttest: need two equal columns, n >= 2");

  std::vector<CipherWire> cells(x);
  cells.insert(cells.end(), y.begin(), y.end());
  auto cell_sh = eng.ct_to_shares(cells);

  Share Sx = share_sum(eng, cell_sh, 0, n);
  Share Sy = share_sum(eng, cell_sh, n, 2 * n);
  Share d = eng.sub_shares(Sx, Sy);

  TestStatisticPair out;
  if (strategy == CircuitStrategy::kBeaverPerElement) {
    std::vector<Share> f(cell_sh);
    f.push_back(d);
    f.push_back(Sx);
    f.push_back(Sy);
    auto sq = eng.mul(f, f);
    Share Qx = share_sum(eng, sq, 0, n);
    Share Qy = share_sum(eng, sq, n, 2 * n);
    out.num = eng.const_mult(sq[2 * n], n - 1);
    out.den = eng.sub_shares(eng.add_shares(eng.const_mult(Qx, n), eng.const_mult(Qy, n)),
                             eng.add_shares(sq[2 * n + 1], sq[2 * n + 2]));
  } else {
    auto sq = eng.product_by_shares(cells, cell_sh);
    CipherWire Qx = wire_sum(eng, sq, 0, n);
    CipherWire Qy = wire_sum(eng, sq, n, 2 * n);
    CipherWire Ex = wire_sum(eng, x, 0, n);
    CipherWire Ey = wire_sum(eng, y, 0, n);
    auto prods = eng.product_by_shares({eng.wire_sub(Ex, Ey), Ex, Ey}, {d, Sx, Sy});
    CipherWire num_ct = eng.wire_cmult(prods[0], n - 1);
    CipherWire den_ct =
        eng.wire_sub(eng.wire_add(eng.wire_cmult(Qx, n), eng.wire_cmult(Qy, n)),
                     eng.wire_add(prods[1], prods[2]));
    auto fin = eng.ct_to_shares({num_ct, den_ct});
    out.num = fin[0];
    out.den = fin[1];
  }
  out.kind = TestKind::kTTest;
  out.sign_wire = d;
  out.squared = true;
  out.df1 = static_cast<unsigned>(2 * n - 2);
  check_scale_neutral(out);
  return out;
}

TestStatisticPair pearson_circuit(Engine& eng, const std::vector<CipherWire>& x,
                                  const std::vector<CipherWire>& y, CircuitStrategy strategy) {
  const size_t n = x.size();
  if (n < 3 || y.size() != n) throw ParamError("pearson: need two equal columns, n >= 3");

  std::vector<CipherWire> cells(x);
  cells.insert(cells.end(), y.begin(), y.end());
  auto cell_sh = eng.ct_to_shares(cells);
  std::vector<Share> sx(cell_sh.begin(), cell_sh.begin() + n);
  std::vector<Share> sy(cell_sh.begin() + n, cell_sh.end());

  Share Sx = share_sum(eng, sx, 0, n);
  Share Sy = share_sum(eng, sy, 0, n);

  TestStatisticPair out;
  if (strategy == CircuitStrategy::kBeaverPerElement) {
    std::vector<Share> lhs(cell_sh), rhs(cell_sh);
    lhs.insert(lhs.end(), sx.begin(), sx.end());  // x_i * y_i
    rhs.insert(rhs.end(), sy.begin(), sy.end());
    lhs.push_back(Sx);
    rhs.push_back(Sy);
    lhs.push_back(Sx);
    rhs.push_back(Sx);
    lhs.push_back(Sy);
    rhs.push_back(Sy);
    auto prods = eng.mul(lhs, rhs);
    Share Qx = share_sum(eng, prods, 0, n);
    Share Qy = share_sum(eng, prods, n, 2 * n);
    Share Sxy = share_sum(eng, prods, 2 * n, 3 * n);
    Share C = eng.sub_shares(eng.const_mult(Sxy, n), prods[3 * n]);
    Share vx = eng.sub_shares(eng.const_mult(Qx, n), prods[3 * n + 1]);
    Share vy = eng.sub_shares(eng.const_mult(Qy, n), prods[3 * n + 2]);
    auto fin = eng.mul({C, vx}, {C, vy});
    out.num = fin[0];
    out.den = fin[1];
    out.sign_wire = C;
  } else {
    std::vector<CipherWire> bases(cells);
    bases.insert(bases.end(), x.begin(), x.end());  // x_i * y_i
    std::vector<Share> factors(cell_sh);
    factors.insert(factors.end(), sy.begin(), sy.end());
    auto prods = eng.product_by_shares(bases, factors);
    CipherWire Qx = wire_sum(eng, prods, 0, n);
    CipherWire Qy = wire_sum(eng, prods, n, 2 * n);
    CipherWire Sxy = wire_sum(eng, prods, 2 * n, 3 * n);
    CipherWire Ex = wire_sum(eng, x, 0, n);
    CipherWire Ey = wire_sum(eng, y, 0, n);
    auto p2 = eng.product_by_shares({Ex, Ex, Ey}, {Sy, Sx, Sy});
    CipherWire C_ct = eng.wire_sub(eng.wire_cmult(Sxy, n), p2[0]);
    CipherWire vx_ct = eng.wire_sub(eng.wire_cmult(Qx, n), p2[1]);
    CipherWire vy_ct = eng.wire_sub(eng.wire_cmult(Qy, n), p2[2]);
    auto mid = eng.ct_to_shares({C_ct, vy_ct});
    auto p3 = eng.product_by_shares({C_ct, vx_ct}, {mid[0], mid[1]});
    auto fin = eng.ct_to_shares(p3);
    out.num = fin[0];
    out.den = fin[1];
    out.sign_wire = mid[0];
  }
  out.kind = TestKind::kPearson;
  out.squared = true;
  out.df1 = static_cast<unsigned>(n - 2);
  check_scale_neutral(out);
  return out;
}

TestStatisticPair chisq_circuit(Engine& eng, const std::vector<CipherWire>& counts,
                                const std::vector<double>& probs, unsigned n, unsigned phi,
                                CircuitStrategy strategy) {
  const size_t k = counts.size();
  if (k < 2) throw ParamError("chisq: need at least two categories");
  if (probs.size() != k) throw ParamError("chisq: probability count mismatch");
  if (n == 0) throw ParamError("chisq: empty dataset");
  double sum = 0;
  for (double p : probs) {
    if (!(p > 0)) throw ParamError("chisq: null probabilities must be positive");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-12) throw ParamError("chisq: null probabilities must sum to 1");
  for (const auto& c : counts)
    if (c.scale_exp != 0) throw ParamError("chisq: counts must be integer-scaled");

  std::vector<FixedPoint> expected(k), weights(k);
  for (size_t i = 0; i < k; i++) {
    expected[i] = fp_encode(n * probs[i], phi);           // e_i
    weights[i] = fp_encode(1.0 / (n * probs[i]), 2 * phi);  // 1/e_i
  }

  auto csh = eng.ct_to_shares(counts);

  TestStatisticPair out;
  if (strategy == CircuitStrategy::kBeaverPerElement) {
    std::vector<Share> diffs(k);
    for (size_t i = 0; i < k; i++)
      diffs[i] = eng.const_add(eng.lift(csh[i], phi), -expected[i].raw);
    auto d2 = eng.mul(diffs, diffs);
    Share num = eng.scaled_const_mult(d2[0], weights[0]);
    for (size_t i = 1; i < k; i++)
      num = eng.add_shares(num, eng.scaled_const_mult(d2[i], weights[i]));
    out.num = num;
  } else {
    std::vector<CipherWire> ediffs(k);
    std::vector<Share> diffs(k);
    for (size_t i = 0; i < k; i++) {
      ediffs[i] = eng.wire_const_add(eng.wire_lift(counts[i], phi), -expected[i].raw);
      diffs[i] = eng.const_add(eng.lift(csh[i], phi), -expected[i].raw);
    }
    auto ed2 = eng.product_by_shares(ediffs, diffs);
    CipherWire num_ct = eng.wire_scaled_cmult(ed2[0], weights[0]);
    for (size_t i = 1; i < k; i++)
      num_ct = eng.wire_add(num_ct, eng.wire_scaled_cmult(ed2[i], weights[i]));
    out.num = eng.ct_to_shares({num_ct})[0];
  }
  out.kind = TestKind::kChiSq;
  out.public_den = true;
  out.df1 = static_cast<unsigned>(k - 1);
  return out;
}

TestStatisticPair ftest_circuit(Engine& eng, const std::vector<std::vector<CipherWire>>& groups,
                                CircuitStrategy strategy) {
  const size_t k = groups.size();
  if (k < 2) throw ParamError("ftest: need at least two groups");
  const size_t n = groups[0].size();
  if (n < 2) throw ParamError("ftest: need at least two rows per group");
  for (const auto& g : groups)
    if (g.size() != n) throw ParamError("ftest: groups must have equal size");

  std::vector<CipherWire> cells;
  for (const auto& g : groups) cells.insert(cells.end(), g.begin(), g.end());
  auto cell_sh = eng.ct_to_shares(cells);

  std::vector<Share> S(k);
  for (size_t i = 0; i < k; i++) S[i] = share_sum(eng, cell_sh, i * n, (i + 1) * n);
  Share T = share_sum(eng, S, 0, k);
  std::vector<Share> U(k);  // k*S_i - T, the between-group residuals
  for (size_t i = 0; i < k; i++) U[i] = eng.sub_shares(eng.const_mult(S[i], k), T);

  const mpz_class den_factor = mpz_class(k) * k * (k - 1);

  TestStatisticPair out;
  if (strategy == CircuitStrategy::kBeaverPerElement) {
    std::vector<Share> f(cell_sh);
    f.insert(f.end(), S.begin(), S.end());
    f.insert(f.end(), U.begin(), U.end());
    auto sq = eng.mul(f, f);
    Share Q = share_sum(eng, sq, 0, k * n);
    Share S2 = share_sum(eng, sq, k * n, k * n + k);
    Share U2 = share_sum(eng, sq, k * n + k, k * n + 2 * k);
    out.num = eng.const_mult(U2, mpz_class(n) - mpz_class(k));
    out.den = eng.const_mult(eng.sub_shares(eng.const_mult(Q, n), S2), den_factor);
  } else {
    std::vector<CipherWire> bases(cells);
    std::vector<Share> factors(cell_sh);
    std::vector<CipherWire> ES(k);
    for (size_t i = 0; i < k; i++) ES[i] = wire_sum(eng, groups[i], 0, n);
    CipherWire ET = wire_sum(eng, ES, 0, k);
    for (size_t i = 0; i < k; i++) {
      bases.push_back(ES[i]);
      factors.push_back(S[i]);
    }
    for (size_t i = 0; i < k; i++) {
      bases.push_back(eng.wire_sub(eng.wire_cmult(ES[i], k), ET));
      factors.push_back(U[i]);
    }
    auto sq = eng.product_by_shares(bases, factors);
    CipherWire Q = wire_sum(eng, sq, 0, k * n);
    CipherWire S2 = wire_sum(eng, sq, k * n, k * n + k);
    CipherWire U2 = wire_sum(eng, sq, k * n + k, k * n + 2 * k);
    CipherWire num_ct = eng.wire_cmult(U2, mpz_class(n) - mpz_class(k));
    CipherWire den_ct = eng.wire_cmult(eng.wire_sub(eng.wire_cmult(Q, n), S2), den_factor);
    auto fin = eng.ct_to_shares({num_ct, den_ct});
    out.num = fin[0];
    out.den = fin[1];
  }
  out.kind = TestKind::kFTest;
  out.df1 = static_cast<unsigned>(k - 1);
  out.df2 = static_cast<unsigned>(n * k - k);
  check_scale_neutral(out);
  return out;
}

double reveal_statistic(Engine& eng, const TestStatisticPair& pair) {
  if (pair.public_den) {
    mpz_class raw = eng.reveal({pair.num})[0];
    return ratio_to_double(raw, 1, pair.num.scale_exp);
  }
  auto [rn, rd] = eng.masked_pair_reveal(pair.num, pair.den);
  if (rd < 0) throw DegenerateStatistic("nonpositive denominator");
  double ratio = ratio_to_double(rn, rd, 0);
  if (!pair.squared) return ratio;
  if (ratio < 0) throw DegenerateStatistic("squared statistic came out negative");
  int s = pair.sign_wire ? eng.sign_reveal(*pair.sign_wire) : 1;
  return s * std::sqrt(ratio);
}

bool significance_bit(Engine& eng, const TestStatisticPair& pair, double critical, unsigned phi,
                      bool one_sided) {
  if (pair.public_den) {
    // chi-squared: num already carries the statistic's scale
    FixedPoint c = fp_encode(critical, static_cast<unsigned>(pair.num.scale_exp));
    return eng.sign_reveal(eng.const_add(pair.num, -c.raw)) > 0;
  }
  const double threshold = pair.squared ? critical * critical : critical;
  FixedPoint c = fp_encode(threshold, 2 * phi);
  Share gap = eng.sub_shares(eng.lift(pair.num, 2 * phi), eng.scaled_const_mult(pair.den, c));
  if (!pair.squared || !one_sided) return eng.sign_reveal(gap) > 0;

  // one-sided squared statistic: stat > critical needs the sign too
  if (!pair.sign_wire) throw ParamError("one-sided comparison needs a sign wire");
  int sg = eng.sign_reveal(*pair.sign_wire);
  int gp = eng.sign_reveal(gap);
  if (critical >= 0) return sg > 0 && gp > 0;
  return sg >= 0 || gp < 0;
}

}  // namespace star
