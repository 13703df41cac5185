#pragma once

#include <optional>

#include "star/engine.hpp"

#include "vendor/json.hpp"

namespace star {

enum class TestKind { kTTest, kPearson, kChiSq, kFTest };

std::string to_string(TestKind k);
TestKind test_kind_from_string(const std::string& s);

// How products over secret data are realized. Both produce identical results:
// aggregated-products forms E(x*y) directly from a ciphertext and the other
// factor's shares (one broadcast, no triple); beaver-per-element runs every
// product through a Beaver triple.
enum class CircuitStrategy { kAggregatedProducts, kBeaverPerElement };

// What a researcher submits: which test over which columns. The hash of the
// canonical serialization is the sigma recorded on the log.
struct TestSpec {
  TestKind kind = TestKind::kTTest;
  std::vector<std::string> columns;
  std::vector<double> null_probs;  // chi-squared only, must sum to 1
  bool one_sided = false;

  void validate() const;
  std::string canonical_json() const;
  Bytes hash() const;

  nlohmann::json to_json() const;
  static TestSpec from_json(const nlohmann::json& j);
};

// Cleared-denominator form of a statistic: the revealed quotient num/den is
// scale-free because both sides carry the same scale exponent. For squared
// pairs the quotient is the square of the statistic and sign_wire recovers
// the sign; chi-squared has public denominator 1 and is revealed directly.
struct TestStatisticPair {
  TestKind kind = TestKind::kTTest;
  Share num;
  Share den;
  bool public_den = false;
  std::optional<Share> sign_wire;
  bool squared = false;
  unsigned df1 = 0;
  unsigned df2 = 0;  // F only
};

TestStatisticPair ttest_circuit(Engine& eng, const std::vector<CipherWire>& x,
                                const std::vector<CipherWire>& y, CircuitStrategy strategy);

TestStatisticPair pearson_circuit(Engine& eng, const std::vector<CipherWire>& x,
                                  const std::vector<CipherWire>& y, CircuitStrategy strategy);

// counts: per-category totals at scale 0 (sums of one-hot indicator wires);
// n: public row count; probs: the null distribution.
TestStatisticPair chisq_circuit(Engine& eng, const std::vector<CipherWire>& counts,
                                const std::vector<double>& probs, unsigned n, unsigned phi,
                                CircuitStrategy strategy);

TestStatisticPair ftest_circuit(Engine& eng, const std::vector<std::vector<CipherWire>>& groups,
                                CircuitStrategy strategy);

// Opens the pair and returns the statistic in the clear (full-statistic mode).
// Shared denominators are opened as a masked pair (r*num, r*den) with r a
// jointly random positive mask, so only the quotient is learned.
double reveal_statistic(Engine& eng, const TestStatisticPair& pair);

// 1-bit mode: reveals only whether the statistic clears the critical value.
// Two-sided squared pairs compare num/den against critical^2; one-sided ones
// additionally gate on the sign wire; F and chi-squared compare directly.
// phi picks the encoding precision of the threshold constant.
bool significance_bit(Engine& eng, const TestStatisticPair& pair, double critical, unsigned phi,
                      bool one_sided = false);

}  // namespace star
