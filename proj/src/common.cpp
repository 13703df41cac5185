#include "star/common.hpp"

#include <sodium.h>

#include <cstdio>
#include <cstring>
#include <ctime>

namespace star {

Bytes mpz_to_bytes(const mpz_class& x) {
  if (mpz_sgn(x.get_mpz_t()) < 0) throw ParamError("mpz_to_bytes: negative value");
  size_t count = 0;
  Bytes out((mpz_sizeinbase(x.get_mpz_t(), 2) + 7) / 8);
  if (mpz_sgn(x.get_mpz_t()) == 0) return {};
  mpz_export(out.data(), &count, 1, 1, 1, 0, x.get_mpz_t());
  out.resize(count);
  return out;
}

mpz_class mpz_from_bytes(const uint8_t* data, size_t len) {
  mpz_class x;
  if (len > 0) mpz_import(x.get_mpz_t(), len, 1, 1, 1, 0, data);
  return x;
}

static const char* kHexDigits = "0123456789abcdef";

std::string to_hex(const Bytes& b) {
  std::string s;
  s.reserve(b.size() * 2);
  for (uint8_t c : b) {
    s.push_back(kHexDigits[c >> 4]);
    s.push_back(kHexDigits[c & 0xf]);
  }
  return s;
}

// strict lowercase: hex strings act as canonical bytes in hashed formats, so
// an uppercase alias for the same value must not parse
static int hex_val(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

Bytes from_hex(const std::string& s) {
  if (s.size() % 2 != 0) throw ParamError("from_hex: odd length");
  Bytes out(s.size() / 2);
  for (size_t i = 0; i < out.size(); i++) {
    int hi = hex_val(s[2 * i]), lo = hex_val(s[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ParamError("from_hex: invalid digit");
    out[i] = static_cast<uint8_t>((hi << 4) | lo);
  }
  return out;
}

std::string mpz_to_hex(const mpz_class& x) { return to_hex(mpz_to_bytes(x)); }

mpz_class mpz_from_hex(const std::string& s) {
  Bytes b = from_hex(s);
  return mpz_from_bytes(b.data(), b.size());
}

namespace {
struct SodiumInit {
  SodiumInit() {
    if (sodium_init() < 0) throw Error("libsodium initialization failed");
  }
};
const SodiumInit g_sodium_init;
}  // namespace

Bytes sha256(const Bytes& data) {
  Bytes out(crypto_hash_sha256_BYTES);
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

Bytes sha256(const std::string& data) {
  Bytes out(crypto_hash_sha256_BYTES);
  crypto_hash_sha256(out.data(), reinterpret_cast<const uint8_t*>(data.data()), data.size());
  return out;
}

Sha256Stream::Sha256Stream() {
  static_assert(sizeof(crypto_hash_sha256_state) <= sizeof(state_));
  crypto_hash_sha256_init(reinterpret_cast<crypto_hash_sha256_state*>(state_));
}

void Sha256Stream::update(const uint8_t* data, size_t len) {
  crypto_hash_sha256_update(reinterpret_cast<crypto_hash_sha256_state*>(state_), data, len);
}

void Sha256Stream::update_length_prefixed(const mpz_class& x) {
  Bytes b = mpz_to_bytes(x);
  uint8_t len[4] = {static_cast<uint8_t>(b.size() >> 24), static_cast<uint8_t>(b.size() >> 16),
                    static_cast<uint8_t>(b.size() >> 8), static_cast<uint8_t>(b.size())};
  update(len, 4);
  update(b.data(), b.size());
}

Bytes Sha256Stream::finish() {
  Bytes out(crypto_hash_sha256_BYTES);
  crypto_hash_sha256_final(reinterpret_cast<crypto_hash_sha256_state*>(state_), out.data());
  return out;
}

Rng::Rng(uint64_t seed) {
  auto* st = new gmp_randstate_t[1];
  gmp_randinit_mt(st[0]);
  mpz_class s;
  mpz_import(s.get_mpz_t(), 1, 1, sizeof(seed), 0, 0, &seed);
  gmp_randseed(st[0], s.get_mpz_t());
  state_ = st;
}

Rng::~Rng() {
  auto* st = static_cast<gmp_randstate_t*>(state_);
  gmp_randclear(st[0]);
  delete[] st;
}

mpz_class Rng::urandomb(unsigned bits) {
  mpz_class r;
  mpz_urandomb(r.get_mpz_t(), static_cast<gmp_randstate_t*>(state_)[0], bits);
  return r;
}

mpz_class Rng::urandomm(const mpz_class& n) {
  mpz_class r;
  mpz_urandomm(r.get_mpz_t(), static_cast<gmp_randstate_t*>(state_)[0], n.get_mpz_t());
  return r;
}

mpz_class Rng::unit_mod(const mpz_class& n) {
  for (;;) {
    mpz_class r = urandomm(n);
    if (r == 0) continue;
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), n.get_mpz_t());
    if (g == 1) return r;
  }
}

uint64_t Rng::u64() {
  mpz_class hi = urandomb(32), lo = urandomb(32);
  return (static_cast<uint64_t>(hi.get_ui()) << 32) | static_cast<uint64_t>(lo.get_ui());
}

double Rng::uniform(double lo, double hi) {
  // 53 uniform bits -> [0,1)
  double u = static_cast<double>(u64() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

std::string rfc3339_utc(int64_t unix_seconds) {
  std::time_t t = static_cast<std::time_t>(unix_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[72];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

}  // namespace star
