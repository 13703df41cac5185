#include "star/paillier.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <fstream>
#include <nlohmann/json.hpp>

using nlohmann::json;

namespace star {

namespace {

mpz_class powm(const mpz_class& base, const mpz_class& exp, const mpz_class& mod) {
  mpz_class out;
  if (mpz_sgn(exp.get_mpz_t()) < 0) {
    mpz_class inv;
    if (!mpz_invert(inv.get_mpz_t(), base.get_mpz_t(), mod.get_mpz_t()))
      throw ProtocolAbort("modular inverse does not exist");
    mpz_class e = -exp;
    mpz_powm(out.get_mpz_t(), inv.get_mpz_t(), e.get_mpz_t(), mod.get_mpz_t());
  } else {
    mpz_powm(out.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), mod.get_mpz_t());
  }
  return out;
}

mpz_class invert(const mpz_class& x, const mpz_class& mod) {
  mpz_class out;
  if (!mpz_invert(out.get_mpz_t(), x.get_mpz_t(), mod.get_mpz_t()))
    throw ProtocolAbort("modular inverse does not exist");
  return out;
}

}  // namespace

FixedBasePow::FixedBasePow(const mpz_class& base, const mpz_class& mod, unsigned max_exp_bits)
    : mod_(mod), max_bits_(max_exp_bits) {
  size_t windows = (max_exp_bits + kWindow - 1) / kWindow;
  table_.resize(windows);
  mpz_class cur = base % mod;
  for (size_t w = 0; w < windows; w++) {
    auto& row = table_[w];
    row.resize((1u << kWindow) - 1);
    row[0] = cur;
    for (size_t d = 1; d < row.size(); d++) row[d] = row[d - 1] * cur % mod;
    if (w + 1 < windows) cur = row.back() * cur % mod;  // base^(2^kWindow) step
  }
}

bool FixedBasePow::usable(const mpz_class& e) const {
  return !table_.empty() && mpz_sgn(e.get_mpz_t()) >= 0 &&
         mpz_sizeinbase(e.get_mpz_t(), 2) <= max_bits_;
}

mpz_class FixedBasePow::pow(const mpz_class& e) const {
  if (!usable(e)) throw ParamError("FixedBasePow: exponent out of range");
  if (e == 0) return mpz_class(1);
  mpz_class acc(1);
  size_t nbits = mpz_sizeinbase(e.get_mpz_t(), 2);
  size_t windows = (nbits + kWindow - 1) / kWindow;
  for (size_t w = 0; w < windows; w++) {
    unsigned d = 0;
    for (unsigned b = 0; b < kWindow; b++)
      if (mpz_tstbit(e.get_mpz_t(), w * kWindow + b)) d |= 1u << b;
    if (d) acc = acc * table_[w][d - 1] % mod_;
  }
  return acc;
}

void PaillierPublicKey::finalize() {
  N2 = N * N;
  delta = 1;
  for (unsigned i = 2; i <= n_parties; i++) delta *= i;
  // covers proof responses z = w + e*delta*s_i
  unsigned delta_bits = static_cast<unsigned>(mpz_sizeinbase(delta.get_mpz_t(), 2));
  unsigned max_bits = share_modulus_bits + 2 * kappa + delta_bits + 8;
  v_pow = FixedBasePow(v, N2, max_bits);
}

static json pk_to_json_obj(const PaillierPublicKey& pk) {
  json j;
  j["kind"] = "paillier-public";
  j["bits"] = pk.bits;
  j["n_parties"] = pk.n_parties;
  j["threshold"] = pk.threshold;
  j["kappa"] = pk.kappa;
  j["share_modulus_bits"] = pk.share_modulus_bits;
  j["N"] = mpz_to_hex(pk.N);
  j["v"] = mpz_to_hex(pk.v);
  json ver = json::array();
  for (const auto& vi : pk.verification) ver.push_back(mpz_to_hex(vi));
  j["verification"] = ver;
  return j;
}

std::string PaillierPublicKey::to_json() const { return pk_to_json_obj(*this).dump(); }

static PaillierPublicKey pk_from_json_obj(const json& j) {
  PaillierPublicKey pk;
  if (j.value("kind", "") != "paillier-public") throw ParamError("not a public key file");
  pk.bits = j.at("bits").get<unsigned>();
  pk.n_parties = j.at("n_parties").get<unsigned>();
  pk.threshold = j.at("threshold").get<unsigned>();
  pk.kappa = j.at("kappa").get<unsigned>();
  pk.share_modulus_bits = j.at("share_modulus_bits").get<unsigned>();
  pk.N = mpz_from_hex(j.at("N").get<std::string>());
  pk.v = mpz_from_hex(j.at("v").get<std::string>());
  for (const auto& vi : j.at("verification")) pk.verification.push_back(mpz_from_hex(vi.get<std::string>()));
  if (pk.verification.size() != pk.n_parties) throw ParamError("verification key count mismatch");
  pk.finalize();
  return pk;
}

PaillierPublicKey PaillierPublicKey::from_json(const std::string& text) {
  return pk_from_json_obj(json::parse(text));
}

Bytes PaillierPublicKey::fingerprint() const {
  // canonical: sorted keys, no whitespace (nlohmann objects iterate sorted)
  return sha256(pk_to_json_obj(*this).dump());
}

std::string PaillierKeyShare::to_json(const PaillierPublicKey& pk) const {
  json j;
  j["kind"] = "paillier-share";
  j["party_id"] = party_id;
  j["s_i"] = mpz_to_hex(s_i);
  j["public_fingerprint"] = to_hex(pk.fingerprint());
  return j.dump();
}

PaillierKeyShare PaillierKeyShare::from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("kind", "") != "paillier-share") throw ParamError("not a key share file");
  PaillierKeyShare ks;
  ks.party_id = j.at("party_id").get<unsigned>();
  ks.s_i = mpz_from_hex(j.at("s_i").get<std::string>());
  return ks;
}

std::string PaillierKeyPair::to_json() const {
  json j;
  j["public"] = json::parse(pk.to_json());
  json sh = json::array();
  for (const auto& s : shares) {
    sh.push_back({{"party_id", s.party_id}, {"s_i", mpz_to_hex(s.s_i)}});
  }
  j["shares"] = sh;
  return j.dump(2);
}

PaillierKeyPair PaillierKeyPair::from_json(const std::string& text) {
  json j = json::parse(text);
  PaillierKeyPair kp;
  kp.pk = pk_from_json_obj(j.at("public"));
  for (const auto& s : j.at("shares")) {
    PaillierKeyShare ks;
    ks.party_id = s.at("party_id").get<unsigned>();
    ks.s_i = mpz_from_hex(s.at("s_i").get<std::string>());
    kp.shares.push_back(std::move(ks));
  }
  return kp;
}

namespace {

// Safe prime p = 2p'+1 with p' of exactly `bits` bits (top two bits set so
// products of two such primes keep full width). 64 Miller-Rabin rounds each.
mpz_class safe_prime_component(unsigned bits, Rng& rng,
                               std::chrono::steady_clock::time_point deadline) {
  if (bits < 8) throw ParamError("prime component too small");
  for (;;) {
    if (std::chrono::steady_clock::now() > deadline)
      throw PrimeSearchTimeout("safe-prime search exceeded the time limit");
    mpz_class cand = rng.urandomb(bits);
    mpz_setbit(cand.get_mpz_t(), bits - 1);
    mpz_setbit(cand.get_mpz_t(), bits - 2);
    mpz_setbit(cand.get_mpz_t(), 0);
    // p' must be 2 mod 3, else p = 2p'+1 is divisible by 3
    while (cand % 3 != 2) cand += 2;
    if (mpz_sizeinbase(cand.get_mpz_t(), 2) != bits) continue;
    if (!mpz_probab_prime_p(cand.get_mpz_t(), 64)) continue;
    mpz_class p = 2 * cand + 1;
    if (!mpz_probab_prime_p(p.get_mpz_t(), 64)) continue;
    return cand;
  }
}

mpz_class eval_poly_mod(const std::vector<mpz_class>& coeffs, unsigned x, const mpz_class& mod) {
  mpz_class acc = 0;
  for (size_t i = coeffs.size(); i-- > 0;) acc = (acc * x + coeffs[i]) % mod;
  return acc;
}

}  // namespace

PaillierKeyPair keygen(const PaillierParams& params, Rng& rng) {
  if (params.modulus_bits < 512) throw ParamError("modulus_bits must be >= 512");
  if (params.n_parties < 2) throw ParamError("need at least 2 parties");
  if (params.threshold < 1) throw ParamError("threshold must be >= 1");
  if (2 * params.threshold - 1 > params.n_parties)
    throw ParamError("threshold violates 2t-1 <= n_parties");

  auto deadline = std::chrono::steady_clock::now() + params.prime_timeout;
  unsigned pb = params.modulus_bits / 2;
  unsigned qb = params.modulus_bits - pb;

  mpz_class pp = safe_prime_component(pb - 1, rng, deadline);
  mpz_class qp;
  do {
    qp = safe_prime_component(qb - 1, rng, deadline);
  } while (qp == pp);

  mpz_class p = 2 * pp + 1, q = 2 * qp + 1;
  mpz_class N = p * q;
  mpz_class M = pp * qp;
  mpz_class N2 = N * N;
  mpz_class share_mod = N2 * M;

  // d = 0 mod M, d = 1 mod N^2 (gcd(M, N^2) = 1 since p', q' differ from p, q)
  mpz_class d = M * invert(M, N2) % share_mod;

  PaillierPublicKey pk;
  pk.bits = params.modulus_bits;
  pk.n_parties = params.n_parties;
  pk.threshold = params.threshold;
  pk.kappa = params.kappa;
  pk.share_modulus_bits = static_cast<unsigned>(mpz_sizeinbase(share_mod.get_mpz_t(), 2));
  pk.N = N;

  std::vector<mpz_class> coeffs(params.threshold);
  coeffs[0] = d;
  for (unsigned i = 1; i < params.threshold; i++) coeffs[i] = rng.urandomm(share_mod);

  std::vector<PaillierKeyShare> shares(params.n_parties);
  for (unsigned i = 1; i <= params.n_parties; i++) {
    shares[i - 1].party_id = i;
    shares[i - 1].s_i = eval_poly_mod(coeffs, i, share_mod);
  }

  mpz_class u = rng.unit_mod(N2);
  pk.v = u * u % N2;
  pk.finalize();

  pk.verification.resize(params.n_parties);
  for (unsigned i = 0; i < params.n_parties; i++) {
    mpz_class exp = shares[i].s_i * pk.delta;
    pk.verification[i] = pk.v_pow.usable(exp) ? pk.v_pow.pow(exp) : powm(pk.v, exp, pk.N2);
  }

  return {std::move(pk), std::move(shares)};
}

Ciphertext encrypt(const PaillierPublicKey& pk, const mpz_class& m, Rng& rng) {
  if (m < 0 || m >= pk.N) throw ParamError("encrypt: plaintext outside [0, N)");
  mpz_class r = rng.unit_mod(pk.N2);
  // (N+1)^m = 1 + m*N  (mod N^2)
  mpz_class gm = (1 + m * pk.N) % pk.N2;
  return {gm * powm(r, pk.N2, pk.N2) % pk.N2};
}

Ciphertext add(const PaillierPublicKey& pk, const Ciphertext& c1, const Ciphertext& c2,
               bool rerandomize, Rng* rng) {
  Ciphertext out{c1.c * c2.c % pk.N2};
  if (rerandomize) {
    if (!rng) throw ParamError("add: rerandomize requires rng");
    out = rerandomized(pk, out, *rng);
  }
  return out;
}

Ciphertext cmult(const PaillierPublicKey& pk, const Ciphertext& c, const mpz_class& s,
                 bool rerandomize, Rng* rng) {
  mpz_class e = s % pk.N;
  if (e < 0) e += pk.N;
  Ciphertext out{powm(c.c, e, pk.N2)};
  if (rerandomize) {
    if (!rng) throw ParamError("cmult: rerandomize requires rng");
    out = rerandomized(pk, out, *rng);
  }
  return out;
}

Ciphertext rerandomized(const PaillierPublicKey& pk, const Ciphertext& c, Rng& rng) {
  mpz_class r = rng.unit_mod(pk.N2);
  return {c.c * powm(r, pk.N2, pk.N2) % pk.N2};
}

namespace {

mpz_class proof_challenge(const PaillierPublicKey& pk, const mpz_class& c4, const mpz_class& ci2,
                          const mpz_class& v_i, const mpz_class& a, const mpz_class& b) {
  Sha256Stream h;
  h.update_length_prefixed(c4);
  h.update_length_prefixed(pk.v);
  h.update_length_prefixed(ci2);
  h.update_length_prefixed(v_i);
  h.update_length_prefixed(a);
  h.update_length_prefixed(b);
  Bytes digest = h.finish();
  unsigned bits = 2 * pk.kappa;
  unsigned bytes = (bits + 7) / 8;
  if (bytes > digest.size()) bytes = digest.size();
  mpz_class e = mpz_from_bytes(digest.data(), bytes);
  unsigned excess = bytes * 8 - bits;
  if (excess) e >>= excess;
  return e;
}

}  // namespace

DecryptionShare decryption_share(const PaillierPublicKey& pk, const PaillierKeyShare& ks,
                                 const Ciphertext& c, Rng& rng) {
  if (ks.party_id < 1 || ks.party_id > pk.n_parties)
    throw ParamError("decryption_share: bad party id");
  mpz_class exp = 2 * pk.delta * ks.s_i;
  DecryptionShare out;
  out.index = ks.party_id;
  out.c_i = powm(c.c, exp, pk.N2);

  mpz_class c4 = powm(c.c, 4, pk.N2);
  mpz_class ci2 = out.c_i * out.c_i % pk.N2;
  const mpz_class& v_i = pk.verification[ks.party_id - 1];

  mpz_class w = rng.urandomb(pk.share_modulus_bits + 2 * pk.kappa);
  mpz_class a = powm(c4, w, pk.N2);
  mpz_class b = pk.v_pow.usable(w) ? pk.v_pow.pow(w) : powm(pk.v, w, pk.N2);

  out.proof.e = proof_challenge(pk, c4, ci2, v_i, a, b);
  out.proof.z = w + out.proof.e * pk.delta * ks.s_i;
  return out;
}

bool verify_share(const PaillierPublicKey& pk, const Ciphertext& c, const DecryptionShare& share) {
  if (share.index < 1 || share.index > pk.n_parties) return false;
  if (share.c_i <= 0 || share.c_i >= pk.N2) return false;
  const mpz_class& e = share.proof.e;
  const mpz_class& z = share.proof.z;
  if (mpz_sgn(e.get_mpz_t()) < 0 || mpz_sizeinbase(e.get_mpz_t(), 2) > 2 * pk.kappa) return false;
  unsigned delta_bits = static_cast<unsigned>(mpz_sizeinbase(pk.delta.get_mpz_t(), 2));
  if (mpz_sgn(z.get_mpz_t()) < 0 ||
      mpz_sizeinbase(z.get_mpz_t(), 2) > pk.share_modulus_bits + 2 * pk.kappa + delta_bits + 8)
    return false;

  mpz_class c4 = powm(c.c, 4, pk.N2);
  mpz_class ci2 = share.c_i * share.c_i % pk.N2;
  const mpz_class& v_i = pk.verification[share.index - 1];

  // recompute the commitments: a = (c^4)^z * (c_i^2)^-e, b = v^z * v_i^-e
  mpz_class inv_ci2, inv_vi_e;
  if (!mpz_invert(inv_ci2.get_mpz_t(), ci2.get_mpz_t(), pk.N2.get_mpz_t())) return false;
  mpz_class a = powm(c4, z, pk.N2) * powm(inv_ci2, e, pk.N2) % pk.N2;
  mpz_class vz = pk.v_pow.usable(z) ? pk.v_pow.pow(z) : powm(pk.v, z, pk.N2);
  mpz_class vie = powm(v_i, e, pk.N2);
  if (!mpz_invert(inv_vi_e.get_mpz_t(), vie.get_mpz_t(), pk.N2.get_mpz_t())) return false;
  mpz_class b = vz * inv_vi_e % pk.N2;

  return proof_challenge(pk, c4, ci2, v_i, a, b) == e;
}

mpz_class combine(const PaillierPublicKey& pk, const Ciphertext& c,
                  const std::vector<DecryptionShare>& shares) {
  (void)c;  // shares already bind to the ciphertext via their proofs
  if (shares.size() != pk.threshold)
    throw ParamError("combine: need exactly threshold shares, got " +
                     std::to_string(shares.size()));
  std::vector<unsigned> ids;
  for (const auto& s : shares) {
    if (s.index < 1 || s.index > pk.n_parties) throw ParamError("combine: bad share index");
    for (unsigned seen : ids)
      if (seen == s.index) throw ParamError("combine: duplicate share index");
    ids.push_back(s.index);
  }

  mpz_class cprime(1);
  for (const auto& s : shares) {
    // lambda = delta * prod_{i' != i} i' / (i' - i), an integer
    mpz_class num = pk.delta, den = 1;
    for (unsigned other : ids) {
      if (other == s.index) continue;
      num *= other;
      den *= static_cast<long>(other) - static_cast<long>(s.index);
    }
    if (!mpz_divisible_p(num.get_mpz_t(), den.get_mpz_t()))
      throw Error("combine: non-integer Lagrange coefficient");
    mpz_class lambda;
    mpz_divexact(lambda.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
    cprime = cprime * powm(s.c_i, 2 * lambda, pk.N2) % pk.N2;
  }

  mpz_class num = cprime - 1;
  if (!mpz_divisible_p(num.get_mpz_t(), pk.N.get_mpz_t()))
    throw ProtocolAbort("combine: result not a valid encryption of anything");
  mpz_class L;
  mpz_divexact(L.get_mpz_t(), num.get_mpz_t(), pk.N.get_mpz_t());
  mpz_class scale = invert(4 * pk.delta * pk.delta % pk.N, pk.N);
  return L * scale % pk.N;
}

mpz_class verified_combine(const PaillierPublicKey& pk, const Ciphertext& c,
                           const std::vector<DecryptionShare>& shares) {
  for (const auto& s : shares) {
    if (!verify_share(pk, c, s))
      throw ProtocolAbort("decryption share failed verification (party " +
                              std::to_string(s.index) + ")",
                          static_cast<int>(s.index));
  }
  return combine(pk, c, shares);
}

mpz_class decrypt_with_shares(const PaillierPublicKey& pk,
                              const std::vector<PaillierKeyShare>& keyshares, const Ciphertext& c,
                              Rng& rng) {
  if (keyshares.size() < pk.threshold) throw ParamError("decrypt_with_shares: not enough shares");
  std::vector<DecryptionShare> ds;
  for (unsigned i = 0; i < pk.threshold; i++)
    ds.push_back(decryption_share(pk, keyshares[i], c, rng));
  return verified_combine(pk, c, ds);
}

void write_key_share_file(const std::string& path, const PaillierPublicKey& pk,
                          const PaillierKeyShare& ks) {
  std::string text = ks.to_json(pk);
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
  if (fd < 0) throw Error("cannot open key share file for writing: " + path);
  ssize_t n = ::write(fd, text.data(), text.size());
  ::close(fd);
  if (n != static_cast<ssize_t>(text.size()))
    throw Error("short write on key share file: " + path);
}

PaillierKeyShare read_key_share_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read key share file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return PaillierKeyShare::from_json(text);
}

}  // namespace star
