#pragma once

#include <chrono>
#include <optional>
#include <vector>

#include "star/common.hpp"

namespace star {

// Windowed fixed-base modular exponentiation; build once, reuse for many exponents.
class FixedBasePow {
 public:
  FixedBasePow() = default;
  FixedBasePow(const mpz_class& base, const mpz_class& mod, unsigned max_exp_bits);

  bool usable(const mpz_class& e) const;
  mpz_class pow(const mpz_class& e) const;  // requires 0 <= e < 2^max_exp_bits

 private:
  static constexpr unsigned kWindow = 6;
  mpz_class mod_;
  unsigned max_bits_ = 0;
  std::vector<std::vector<mpz_class>> table_;  // table_[w][d-1] = base^(d << (w*kWindow))
};

struct PaillierParams {
  unsigned modulus_bits = 2048;
  unsigned n_parties = 3;
  unsigned threshold = 2;
  unsigned kappa = 40;  // statistical security parameter
  std::chrono::milliseconds prime_timeout{600000};
};

struct PaillierPublicKey {
  unsigned bits = 0;
  unsigned n_parties = 0;
  unsigned threshold = 0;
  unsigned kappa = 40;
  unsigned share_modulus_bits = 0;  // bitlen(N^2 * M); bounds proof randomness
  mpz_class N;
  mpz_class N2;
  mpz_class delta;                   // n_parties!
  mpz_class v;                       // quadratic residue mod N^2
  std::vector<mpz_class> verification;  // v_i = v^(s_i * delta), index i-1

  FixedBasePow v_pow;  // rebuilt on load; not serialized

  void finalize();  // fills N2, delta, v_pow from the serialized fields

  std::string to_json() const;
  static PaillierPublicKey from_json(const std::string& text);
  Bytes fingerprint() const;  // SHA-256 of canonical serialization
};

struct PaillierKeyShare {
  unsigned party_id = 0;  // 1-based
  mpz_class s_i;

  std::string to_json(const PaillierPublicKey& pk) const;
  static PaillierKeyShare from_json(const std::string& text);
};

struct Ciphertext {
  mpz_class c;
};

struct ShareProof {
  mpz_class e;  // 2*kappa-bit challenge
  mpz_class z;  // response over the integers
};

struct DecryptionShare {
  unsigned index = 0;  // party id
  mpz_class c_i;
  ShareProof proof;
};

struct PaillierKeyPair {
  PaillierPublicKey pk;
  std::vector<PaillierKeyShare> shares;

  std::string to_json() const;
  static PaillierKeyPair from_json(const std::string& text);
};

PaillierKeyPair keygen(const PaillierParams& params, Rng& rng);

Ciphertext encrypt(const PaillierPublicKey& pk, const mpz_class& m, Rng& rng);
Ciphertext add(const PaillierPublicKey& pk, const Ciphertext& c1, const Ciphertext& c2,
               bool rerandomize = false, Rng* rng = nullptr);
Ciphertext cmult(const PaillierPublicKey& pk, const Ciphertext& c, const mpz_class& s,
                 bool rerandomize = false, Rng* rng = nullptr);
Ciphertext rerandomized(const PaillierPublicKey& pk, const Ciphertext& c, Rng& rng);

DecryptionShare decryption_share(const PaillierPublicKey& pk, const PaillierKeyShare& ks,
                                 const Ciphertext& c, Rng& rng);
bool verify_share(const PaillierPublicKey& pk, const Ciphertext& c, const DecryptionShare& share);

// Precondition: exactly t structurally distinct shares that the caller has verified.
mpz_class combine(const PaillierPublicKey& pk, const Ciphertext& c,
                  const std::vector<DecryptionShare>& shares);

// Verifies every share first; rejects naming the offending party id.
mpz_class verified_combine(const PaillierPublicKey& pk, const Ciphertext& c,
                           const std::vector<DecryptionShare>& shares);

// Test/tool convenience: produce shares from the given key shares and combine.
mpz_class decrypt_with_shares(const PaillierPublicKey& pk,
                              const std::vector<PaillierKeyShare>& keyshares,
                              const Ciphertext& c, Rng& rng);

void write_key_share_file(const std::string& path, const PaillierPublicKey& pk,
                          const PaillierKeyShare& ks);
PaillierKeyShare read_key_share_file(const std::string& path);

}  // namespace star
