#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace star {

using Bytes = std::vector<uint8_t>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user/config input: out-of-range plaintext, invalid params, schema mismatch.
struct ParamError : Error {
  using Error::Error;
};

// A tracked magnitude bound would reach N/2, making ring decoding ambiguous.
struct BudgetError : Error {
  using Error::Error;
};

// A party misbehaved or the transport desynchronized; carries the party id when known.
struct ProtocolAbort : Error {
  explicit ProtocolAbort(const std::string& msg, int party = -1)
      : Error(msg), party_id(party) {}
  int party_id;
};

// Revealed denominator was zero (constant column, empty group, ...).
struct DegenerateStatistic : Error {
  using Error::Error;
};

struct LedgerError : Error {
  using Error::Error;
};

struct QuotaError : Error {
  using Error::Error;
};

struct PrimeSearchTimeout : Error {
  using Error::Error;
};

// Big-endian magnitude bytes; empty vector encodes zero. Values must be >= 0.
Bytes mpz_to_bytes(const mpz_class& x);
mpz_class mpz_from_bytes(const uint8_t* data, size_t len);
inline mpz_class mpz_from_bytes(const Bytes& b) { return mpz_from_bytes(b.data(), b.size()); }

std::string to_hex(const Bytes& b);
Bytes from_hex(const std::string& s);  // throws ParamError on odd length / bad digit

std::string mpz_to_hex(const mpz_class& x);
mpz_class mpz_from_hex(const std::string& s);

Bytes sha256(const Bytes& data);
Bytes sha256(const std::string& data);

class Sha256Stream {
 public:
  Sha256Stream();
  void update(const uint8_t* data, size_t len);
  void update(const Bytes& b) { update(b.data(), b.size()); }
  // 4-byte big-endian length prefix, then big-endian magnitude
  void update_length_prefixed(const mpz_class& x);
  Bytes finish();

 private:
  unsigned char state_[208];  // >= sizeof(crypto_hash_sha256_state)
};

// Deterministic randomness (GMP Mersenne Twister under the hood).
class Rng {
 public:
  explicit Rng(uint64_t seed);
  Rng(const Rng&) = delete;
  Rng& operator=(const Rng&) = delete;
  ~Rng();

  mpz_class urandomb(unsigned bits);            // uniform in [0, 2^bits)
  mpz_class urandomm(const mpz_class& n);       // uniform in [0, n)
  mpz_class unit_mod(const mpz_class& n);       // uniform in [1, n) with gcd == 1
  uint64_t u64();
  double uniform(double lo, double hi);

 private:
  void* state_;
};

std::string rfc3339_utc(int64_t unix_seconds);

}  // namespace star
