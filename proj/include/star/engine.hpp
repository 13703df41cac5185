#pragma once

#include <deque>

#include "star/channel.hpp"
#include "star/fixed_point.hpp"
#include "star/paillier.hpp"

namespace star {

// One party's additive share of a logical wire. scale_exp and budget are
// public metadata every party agrees on; value lives in [0, N).
struct Share {
  mpz_class value;
  int scale_exp = 0;
  MagnitudeBudget budget;
};

// A ciphertext wire with the same public metadata, used while values are
// still aggregated homomorphically before conversion to shares.
struct CipherWire {
  Ciphertext ct;
  int scale_exp = 0;
  MagnitudeBudget budget;
};

struct BeaverTriple {
  mpz_class a, b, c;  // this party's shares, c = a*b mod N across parties
  bool used = false;
};

class Engine {
 public:
  Engine(const PaillierPublicKey& pk, const PaillierKeyShare& ks, Channel& ch, uint64_t seed);

  unsigned party_id() const { return ch_.party_id(); }
  unsigned n_parties() const { return ch_.n_parties(); }
  const PaillierPublicKey& pk() const { return pk_; }
  Rng& rng() { return rng_; }
  Channel& channel() { return ch_; }

  // local linear ops (zero communication)
  Share add_shares(const Share& a, const Share& b) const;
  Share sub_shares(const Share& a, const Share& b) const;
  Share const_mult(const Share& a, const mpz_class& c) const;
  Share const_add(const Share& a, const mpz_class& c) const;  // value adjusted at party 1
  Share lift(const Share& a, unsigned bits) const;            // same number, scale_exp + bits
  Share scaled_const_mult(const Share& a, const FixedPoint& c) const;  // scale_exp adds

  // ciphertext-side homomorphic ops (deterministic, all parties compute alike)
  CipherWire wire_add(const CipherWire& a, const CipherWire& b) const;
  CipherWire wire_sub(const CipherWire& a, const CipherWire& b) const;
  CipherWire wire_cmult(const CipherWire& a, const mpz_class& c) const;
  CipherWire wire_const_add(const CipherWire& a, const mpz_class& c) const;
  CipherWire wire_lift(const CipherWire& a, unsigned bits) const;
  CipherWire wire_scaled_cmult(const CipherWire& a, const FixedPoint& c) const;

  // interactive ops
  std::vector<Share> ct_to_shares(const std::vector<CipherWire>& wires);
  std::vector<BeaverTriple> triple_gen(size_t count);
  void ensure_triples(size_t count);
  size_t triples_available() const { return store_.size(); }

  std::vector<Share> mul(const std::vector<Share>& x, const std::vector<Share>& y);
  Share mul_one(const Share& x, const Share& y, BeaverTriple& triple);

  std::vector<mpz_class> reveal(const std::vector<Share>& xs);
  std::pair<mpz_class, mpz_class> masked_pair_reveal(const Share& num, const Share& den);
  int sign_reveal(const Share& x);

  // E(x*y) from E(x) and shares of y: each party broadcasts a rerandomized
  // cmult(E(x), y_i); the product of the contributions encrypts x*y.
  std::vector<CipherWire> product_by_shares(const std::vector<CipherWire>& xs,
                                            const std::vector<Share>& ys);

  // Threshold-decrypt wires to public signed values (centered). The caller is
  // responsible for only opening wires whose plaintext is safe to publish.
  std::vector<mpz_class> decrypt_public(const std::vector<CipherWire>& wires);

  // Fresh encryption of a ring element under this party's randomness.
  Ciphertext encrypt_value(const mpz_class& m);

 private:
  std::vector<mpz_class> threshold_open(const std::vector<mpz_class>& cts);
  std::vector<Share> mul_with_triples(const std::vector<Share>& x, const std::vector<Share>& y,
                                      std::vector<BeaverTriple*>& triples);
  Share positive_mask_share(mpz_class& bound_out);

  const PaillierPublicKey& pk_;
  const PaillierKeyShare& ks_;
  Channel& ch_;
  Rng rng_;
  std::deque<BeaverTriple> store_;
};

}  // namespace star
