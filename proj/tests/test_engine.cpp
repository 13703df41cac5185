#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "vendor/doctest.h"

#include "support.hpp"

using namespace star;
using star::test::encrypt_column;
using star::test::fixture_key;
using star::test::run_engines;
using star::test::run_parties;

namespace {

// the public column every party holds; seeded so both runs of a script agree
std::vector<CipherWire> public_wires(const std::vector<double>& xs, unsigned phi, double bound,
                                     uint64_t seed) {
  Rng rng(seed);
  return encrypt_column(fixture_key().pk, xs, phi, bound, rng);
}

}  // namespace

TEST_CASE("ciphertext wires convert to shares that reveal the original values") {
  const PaillierKeyPair& kp = fixture_key();
  const std::vector<double> vals = {0.0, 1.0, -1.0, 2.5, -3.75, 1048576.0, -2147483648.0};
  const auto wires = public_wires(vals, 40, 4294967296.0, 77);

  std::vector<std::vector<mpz_class>> got(3);
  run_engines(kp, 1000, [&](Engine& eng) {
    auto shares = eng.ct_to_shares(wires);
    for (const auto& s : shares) CHECK(s.scale_exp == 40);
    got[eng.party_id() - 1] = eng.reveal(shares);
  });
  for (unsigned p = 0; p < 3; p++) {
    REQUIRE(got[p].size() == vals.size());
    for (size_t j = 0; j < vals.size(); j++) {
      CHECK(got[p][j] == fp_encode(vals[j], 40).raw);
      CHECK(ratio_to_double(got[p][j], 1, 40) == vals[j]);
    }
  }
}

TEST_CASE("local linear ops match plaintext arithmetic") {
  const PaillierKeyPair& kp = fixture_key();
  const auto wires = public_wires({20.0, 3.0}, 0, 1000.0, 78);

  std::vector<mpz_class> out;
  run_engines(kp, 2000, [&](Engine& eng) {
    auto sh = eng.ct_to_shares(wires);
    const Share& a = sh[0];
    const Share& b = sh[1];
    std::vector<Share> results = {
        eng.add_shares(a, b),    // 23
        eng.sub_shares(a, b),    // 17
        eng.const_mult(b, -6),   // -18
        eng.const_add(a, 5),     // 25
        eng.const_add(a, -30),   // -10
    };
    Share lifted = eng.lift(b, 4);  // still 3, raw 48 at scale 4
    CHECK(lifted.scale_exp == 4);
    results.push_back(lifted);
    Share scaled = eng.scaled_const_mult(a, fp_encode(1.5, 1));  // 30, raw 60 at scale 1
    CHECK(scaled.scale_exp == 1);
    results.push_back(scaled);
    CHECK_THROWS_AS(eng.add_shares(a, lifted), ParamError);
    CHECK_THROWS_AS(eng.sub_shares(lifted, a), ParamError);

    auto opened = eng.reveal(results);
    if (eng.party_id() == 1) out = opened;
  });
  const std::vector<long> want = {23, 17, -18, 25, -10, 48, 60};
  REQUIRE(out.size() == want.size());
  for (size_t j = 0; j < want.size(); j++) CHECK(out[j] == want[j]);
}

TEST_CASE("ciphertext-side ops track the share-side semantics") {
  const PaillierKeyPair& kp = fixture_key();
  const auto wires = public_wires({7.0, -2.0}, 0, 1000.0, 79);

  std::vector<mpz_class> out;
  run_engines(kp, 3000, [&](Engine& eng) {
    const CipherWire& a = wires[0];
    const CipherWire& b = wires[1];
    std::vector<CipherWire> results = {
        eng.wire_add(a, b),         // 5
        eng.wire_sub(a, b),         // 9
        eng.wire_cmult(b, 11),      // -22
        eng.wire_const_add(a, -10)  // -3
    };
    CipherWire lifted = eng.wire_lift(a, 3);  // raw 56 at scale 3
    CHECK(lifted.scale_exp == 3);
    results.push_back(lifted);
    CipherWire scaled = eng.wire_scaled_cmult(b, fp_encode(-2.5, 1));  // raw 10 at scale 1
    CHECK(scaled.scale_exp == 1);
    results.push_back(scaled);
    CHECK_THROWS_AS(eng.wire_add(a, lifted), ParamError);

    auto opened = eng.decrypt_public(results);
    if (eng.party_id() == 1) out = opened;
  });
  const std::vector<long> want = {5, 9, -22, -3, 56, 10};
  REQUIRE(out.size() == want.size());
  for (size_t j = 0; j < want.size(); j++) CHECK(out[j] == want[j]);
}

TEST_CASE("multiplication consumes one triple per product and is exact") {
  const PaillierKeyPair& kp = fixture_key();
  const auto ints = public_wires({3.0, -7.0, 5.0, 0.0}, 0, 1000.0, 80);
  const auto fps = public_wires({2.5, -3.75}, 10, 16.0, 81);

  run_engines(kp, 4000, [&](Engine& eng) {
    auto sh = eng.ct_to_shares(ints);
    auto fsh = eng.ct_to_shares(fps);

    eng.ensure_triples(3);
    CHECK(eng.triples_available() == 3);
    auto prods = eng.mul({sh[0], sh[1]}, {sh[2], sh[3]});
    CHECK(eng.triples_available() == 1);
    CHECK(prods[0].scale_exp == 0);
    auto opened = eng.reveal(prods);
    CHECK(opened[0] == 15);  // 3 * 5
    CHECK(opened[1] == 0);   // -7 * 0

    auto fprod = eng.mul({fsh[0]}, {fsh[1]});
    CHECK(fprod[0].scale_exp == 20);
    auto fopened = eng.reveal(fprod);
    CHECK(fopened[0] == fp_encode(2.5, 10).raw * fp_encode(-3.75, 10).raw);
    CHECK(ratio_to_double(fopened[0], 1, 20) == -9.375);

    BeaverTriple t = eng.triple_gen(1)[0];
    Share one = eng.mul_one(sh[0], sh[2], t);
    CHECK(t.used);
    CHECK(eng.reveal({one})[0] == 15);
    CHECK_THROWS_AS(eng.mul_one(sh[0], sh[2], t), ParamError);  // spent triples stay spent

    CHECK_THROWS_AS(eng.mul({sh[0]}, {sh[1], sh[2]}), ParamError);
  });
}

TEST_CASE("masked pair reveal preserves exact ratios and the denominator sign") {
  const PaillierKeyPair& kp = fixture_key();
  const auto wires = public_wires({72.0, 30.0, -72.0, 0.0}, 0, 1000.0, 82);

  run_engines(kp, 5000, [&](Engine& eng) {
    auto sh = eng.ct_to_shares(wires);

    auto [rn, rd] = eng.masked_pair_reveal(sh[0], sh[1]);
    CHECK(rd > 0);
    CHECK(rn * 30 == rd * 72);  // the mask cancels out of the rational
    CHECK(ratio_to_double(rn, rd, 0) == 2.4);

    auto [nn, nd] = eng.masked_pair_reveal(sh[2], sh[1]);
    CHECK(nd > 0);
    CHECK(nn < 0);
    CHECK(ratio_to_double(nn, nd, 0) == -2.4);

    CHECK(eng.sign_reveal(sh[0]) == 1);
    CHECK(eng.sign_reveal(sh[2]) == -1);
    CHECK(eng.sign_reveal(sh[3]) == 0);

    Share lifted = eng.lift(sh[0], 2);
    CHECK_THROWS_AS(eng.masked_pair_reveal(lifted, sh[1]), ParamError);
  });

  CHECK_THROWS_AS(run_engines(kp, 5100,
                              [&](Engine& eng) {
                                auto sh = eng.ct_to_shares(wires);
                                eng.masked_pair_reveal(sh[0], sh[3]);  // zero denominator
                              }),
                  DegenerateStatistic);
}

TEST_CASE("encrypted-by-share products decrypt to the true product") {
  const PaillierKeyPair& kp = fixture_key();
  const auto xs = public_wires({6.0, -4.0}, 0, 1000.0, 83);
  const auto ys = public_wires({9.0, -5.0}, 0, 1000.0, 84);

  run_engines(kp, 6000, [&](Engine& eng) {
    auto ysh = eng.ct_to_shares(ys);
    auto prods = eng.product_by_shares(xs, ysh);
    CHECK(prods[0].scale_exp == 0);
    auto opened = eng.decrypt_public(prods);
    CHECK(opened[0] == 54);
    CHECK(opened[1] == 20);
  });
}

TEST_CASE("budget overflow fails closed before any value can wrap") {
  const PaillierKeyPair& kp = fixture_key();
  Rng rng(85);
  // a declared magnitude that could reach N/2 is rejected at conversion time
  const CipherWire huge{encrypt(kp.pk, 0, rng), 0, MagnitudeBudget{(kp.pk.N + 1) / 2}};
  CHECK_THROWS_AS(run_engines(kp, 7000,
                              [&](Engine& eng) { eng.ct_to_shares({huge}); }),
                  BudgetError);

  // products of large declared bounds are rejected even when the values are tiny
  const auto wide = public_wires({2.0, 3.0}, 0, ldexp(1.0, 300), 86);
  CHECK_THROWS_AS(run_engines(kp, 7100,
                              [&](Engine& eng) {
                                auto sh = eng.ct_to_shares(wide);
                                eng.mul({sh[0]}, {sh[1]});
                              }),
                  BudgetError);

  // local additions accumulate bounds and refuse the last straw
  const CipherWire nearly{encrypt(kp.pk, 5, rng), 0, MagnitudeBudget{(kp.pk.N - 3) / 2}};
  run_engines(kp, 7200, [&](Engine& eng) {
    auto sh = eng.ct_to_shares({nearly});
    CHECK_THROWS_AS(eng.add_shares(sh[0], sh[0]), BudgetError);
    CHECK_THROWS_AS(eng.const_mult(sh[0], 3), BudgetError);
  });
}

TEST_CASE("equal seeds replay byte-identical transcripts") {
  const PaillierKeyPair& kp = fixture_key();
  const auto wires = public_wires({1.0, 2.0}, 8, 16.0, 87);

  auto script = [&](std::vector<Bytes>& sink) {
    return [&wires, &sink](Engine& eng) {
      auto sh = eng.ct_to_shares(wires);
      auto prod = eng.mul({sh[0]}, {sh[1]});
      eng.reveal(prod);
      sink[eng.party_id() - 1] = eng.channel().transcript_hash();
    };
  };

  std::vector<Bytes> first(3), second(3), reseeded(3);
  run_engines(kp, 8000, script(first));
  run_engines(kp, 8000, script(second));
  run_engines(kp, 8001, script(reseeded));

  CHECK(first[0] == first[1]);  // broadcast rounds look the same from every seat
  CHECK(first[1] == first[2]);
  CHECK(first[0] == second[0]);
  CHECK(first[0] != reseeded[0]);
}

TEST_CASE("an engine refuses mismatched wiring") {
  const PaillierKeyPair& kp = fixture_key();
  CHECK_THROWS_AS(run_parties(3,
                              [&](unsigned pid, Channel& ch) {
                                Engine eng(kp.pk, kp.shares[pid % 3], ch, 1);  // neighbour's share
                                (void)eng;
                              }),
                  ParamError);
  CHECK_THROWS_AS(run_parties(2,
                              [&](unsigned pid, Channel& ch) {
                                Engine eng(kp.pk, kp.shares[pid - 1], ch, 1);
                                (void)eng;
                              }),
                  ParamError);
}
