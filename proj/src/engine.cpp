#include "star/engine.hpp"

namespace star {

namespace {

mpz_class mod_n(const mpz_class& x, const mpz_class& N) {
  mpz_class r = x % N;
  if (r < 0) r += N;
  return r;
}

}  // namespace

Engine::Engine(const PaillierPublicKey& pk, const PaillierKeyShare& ks, Channel& ch, uint64_t seed)
    : pk_(pk), ks_(ks), ch_(ch), rng_(seed) {
  if (ks.party_id != ch.party_id()) throw ParamError("engine: key share / channel party mismatch");
  if (ch.n_parties() != pk.n_parties) throw ParamError("engine: party count mismatch");
}

Share Engine::add_shares(const Share& a, const Share& b) const {
  if (a.scale_exp != b.scale_exp) throw ParamError("add_shares: scale mismatch");
  MagnitudeBudget budget = MagnitudeBudget::for_add(a.budget, b.budget);
  budget.check(pk_.N);
  return {mod_n(a.value + b.value, pk_.N), a.scale_exp, budget};
}

Share Engine::sub_shares(const Share& a, const Share& b) const {
  if (a.scale_exp != b.scale_exp) throw ParamError("sub_shares: scale mismatch");
  MagnitudeBudget budget = MagnitudeBudget::for_add(a.budget, b.budget);
  budget.check(pk_.N);
  return {mod_n(a.value - b.value, pk_.N), a.scale_exp, budget};
}

Share Engine::const_mult(const Share& a, const mpz_class& c) const {
  MagnitudeBudget budget = MagnitudeBudget::for_const_mult(a.budget, c);
  budget.check(pk_.N);
  return {mod_n(a.value * c, pk_.N), a.scale_exp, budget};
}

Share Engine::const_add(const Share& a, const mpz_class& c) const {
  MagnitudeBudget budget{a.budget.bound + abs(c)};
  budget.check(pk_.N);
  mpz_class v = party_id() == 1 ? mod_n(a.value + c, pk_.N) : a.value;
  return {v, a.scale_exp, budget};
}

Share Engine::lift(const Share& a, unsigned bits) const {
  Share out = const_mult(a, mpz_class(1) << bits);
  out.scale_exp = a.scale_exp + static_cast<int>(bits);
  return out;
}

Share Engine::scaled_const_mult(const Share& a, const FixedPoint& c) const {
  Share out = const_mult(a, c.raw);
  out.scale_exp = a.scale_exp + static_cast<int>(c.scale_exp);
  return out;
}

CipherWire Engine::wire_add(const CipherWire& a, const CipherWire& b) const {
  if (a.scale_exp != b.scale_exp) throw ParamError("wire_add: scale mismatch");
  MagnitudeBudget budget = MagnitudeBudget::for_add(a.budget, b.budget);
  budget.check(pk_.N);
  return {add(pk_, a.ct, b.ct), a.scale_exp, budget};
}

CipherWire Engine::wire_sub(const CipherWire& a, const CipherWire& b) const {
  if (a.scale_exp != b.scale_exp) throw ParamError("wire_sub: scale mismatch");
  MagnitudeBudget budget = MagnitudeBudget::for_add(a.budget, b.budget);
  budget.check(pk_.N);
  return {add(pk_, a.ct, cmult(pk_, b.ct, -1)), a.scale_exp, budget};
}

CipherWire Engine::wire_cmult(const CipherWire& a, const mpz_class& c) const {
  MagnitudeBudget budget = MagnitudeBudget::for_const_mult(a.budget, c);
  budget.check(pk_.N);
  return {cmult(pk_, a.ct, c), a.scale_exp, budget};
}

CipherWire Engine::wire_const_add(const CipherWire& a, const mpz_class& c) const {
  MagnitudeBudget budget{a.budget.bound + abs(c)};
  budget.check(pk_.N);
  mpz_class gc = (1 + mod_n(c, pk_.N) * pk_.N) % pk_.N2;  // deterministic E(c), (N+1)^c
  return {Ciphertext{a.ct.c * gc % pk_.N2}, a.scale_exp, budget};
}

CipherWire Engine::wire_lift(const CipherWire& a, unsigned bits) const {
  CipherWire out = wire_cmult(a, mpz_class(1) << bits);
  out.scale_exp = a.scale_exp + static_cast<int>(bits);
  return out;
}

CipherWire Engine::wire_scaled_cmult(const CipherWire& a, const FixedPoint& c) const {
  CipherWire out = wire_cmult(a, c.raw);
  out.scale_exp = a.scale_exp + static_cast<int>(c.scale_exp);
  return out;
}

Ciphertext Engine::encrypt_value(const mpz_class& m) { return encrypt(pk_, m, rng_); }

std::vector<mpz_class> Engine::threshold_open(const std::vector<mpz_class>& cts) {
  const unsigned t = pk_.threshold;
  const unsigned me = party_id();
  const size_t m = cts.size();

  // parties 1..t produce decryption shares; everyone verifies the foreign ones
  std::vector<mpz_class> msg;
  if (me <= t) {
    msg.reserve(3 * m);
    for (const auto& c : cts) {
      DecryptionShare ds = decryption_share(pk_, ks_, Ciphertext{c}, rng_);
      msg.push_back(ds.c_i);
      msg.push_back(ds.proof.e);
      msg.push_back(ds.proof.z);
    }
  }
  auto all = ch_.exchange(Tag::kDecShare, msg);

  std::vector<mpz_class> out(m);
  std::vector<DecryptionShare> shares(t);
  for (size_t j = 0; j < m; j++) {
    for (unsigned p = 1; p <= t; p++) {
      const auto& pm = all[p - 1];
      if (pm.size() != 3 * m) {
        ch_.abort("missing decryption shares from party " + std::to_string(p));
        throw ProtocolAbort("missing decryption shares from party " + std::to_string(p),
                            static_cast<int>(p));
      }
      DecryptionShare ds;
      ds.index = p;
      ds.c_i = pm[3 * j];
      ds.proof.e = pm[3 * j + 1];
      ds.proof.z = pm[3 * j + 2];
      if (p != me && !verify_share(pk_, Ciphertext{cts[j]}, ds)) {
        std::string why = "decryption share verification failed (party " + std::to_string(p) + ")";
        ch_.abort(why);
        throw ProtocolAbort(why, static_cast<int>(p));
      }
      shares[p - 1] = std::move(ds);
    }
    out[j] = combine(pk_, Ciphertext{cts[j]}, shares);
  }
  return out;
}

std::vector<Share> Engine::ct_to_shares(const std::vector<CipherWire>& wires) {
  const mpz_class& N = pk_.N;
  const size_t m = wires.size();
  for (const auto& w : wires) w.budget.check(N);

  std::vector<mpz_class> masks(m);
  std::vector<mpz_class> msg(m);
  for (size_t j = 0; j < m; j++) {
    masks[j] = rng_.urandomm(N);
    msg[j] = encrypt(pk_, masks[j], rng_).c;
  }
  auto all = ch_.exchange(Tag::kMask, msg);

  std::vector<mpz_class> blinded(m);
  for (size_t j = 0; j < m; j++) {
    mpz_class acc = wires[j].ct.c;
    for (unsigned p = 0; p < n_parties(); p++) {
      if (all[p].size() != m) {
        ch_.abort("missing masks from party " + std::to_string(p + 1));
        throw ProtocolAbort("missing masks", static_cast<int>(p + 1));
      }
      acc = acc * all[p][j] % pk_.N2;
    }
    blinded[j] = acc;
  }

  std::vector<mpz_class> opened = threshold_open(blinded);

  std::vector<Share> out(m);
  for (size_t j = 0; j < m; j++) {
    mpz_class v = party_id() == 1 ? mod_n(opened[j] - masks[j], N) : mod_n(-masks[j], N);
    out[j] = {std::move(v), wires[j].scale_exp, wires[j].budget};
  }
  return out;
}

std::vector<BeaverTriple> Engine::triple_gen(size_t count) {
  const mpz_class& N = pk_.N;
  std::vector<mpz_class> a_mine(count), b_mine(count);
  std::vector<mpz_class> msg(count);
  for (size_t j = 0; j < count; j++) {
    a_mine[j] = rng_.urandomm(N);
    b_mine[j] = rng_.urandomm(N);
    msg[j] = encrypt(pk_, a_mine[j], rng_).c;
  }
  auto all_a = ch_.exchange(Tag::kTripleA, msg);

  std::vector<mpz_class> ea(count);
  for (size_t j = 0; j < count; j++) {
    mpz_class acc(1);
    for (unsigned p = 0; p < n_parties(); p++) {
      if (all_a[p].size() != count) {
        ch_.abort("missing triple contributions from party " + std::to_string(p + 1));
        throw ProtocolAbort("missing triple contributions", static_cast<int>(p + 1));
      }
      acc = acc * all_a[p][j] % pk_.N2;
    }
    ea[j] = acc;
  }

  std::vector<mpz_class> prod_msg(count);
  for (size_t j = 0; j < count; j++)
    prod_msg[j] = cmult(pk_, Ciphertext{ea[j]}, b_mine[j], true, &rng_).c;
  auto all_prod = ch_.exchange(Tag::kTripleB, prod_msg);

  std::vector<mpz_class> eab(count);
  for (size_t j = 0; j < count; j++) {
    mpz_class acc(1);
    for (unsigned p = 0; p < n_parties(); p++) {
      if (all_prod[p].size() != count) {
        ch_.abort("missing triple products from party " + std::to_string(p + 1));
        throw ProtocolAbort("missing triple products", static_cast<int>(p + 1));
      }
      acc = acc * all_prod[p][j] % pk_.N2;
    }
    eab[j] = acc;
  }

  // convert E(a*b) to shares of c: same masking dance, budgets don't apply to
  // full-ring triple material
  std::vector<mpz_class> masks(count);
  std::vector<mpz_class> mask_msg(count);
  for (size_t j = 0; j < count; j++) {
    masks[j] = rng_.urandomm(N);
    mask_msg[j] = encrypt(pk_, masks[j], rng_).c;
  }
  auto all_masks = ch_.exchange(Tag::kMask, mask_msg);
  std::vector<mpz_class> blinded(count);
  for (size_t j = 0; j < count; j++) {
    mpz_class acc = eab[j];
    for (unsigned p = 0; p < n_parties(); p++) acc = acc * all_masks[p][j] % pk_.N2;
    blinded[j] = acc;
  }
  std::vector<mpz_class> opened = threshold_open(blinded);

  std::vector<BeaverTriple> out(count);
  for (size_t j = 0; j < count; j++) {
    out[j].a = std::move(a_mine[j]);
    out[j].b = std::move(b_mine[j]);
    out[j].c = party_id() == 1 ? mod_n(opened[j] - masks[j], N) : mod_n(-masks[j], N);
  }
  return out;
}

void Engine::ensure_triples(size_t count) {
  if (store_.size() >= count) return;
  auto fresh = triple_gen(count - store_.size());
  for (auto& t : fresh) store_.push_back(std::move(t));
}

std::vector<Share> Engine::mul_with_triples(const std::vector<Share>& x,
                                            const std::vector<Share>& y,
                                            std::vector<BeaverTriple*>& triples) {
  if (x.size() != y.size() || x.size() != triples.size()) throw ParamError("mul: size mismatch");
  const mpz_class& N = pk_.N;
  const size_t m = x.size();

  std::vector<MagnitudeBudget> budgets(m);
  for (size_t j = 0; j < m; j++) {
    if (triples[j]->used) throw ParamError("mul: Beaver triple reuse");
    budgets[j] = MagnitudeBudget::for_mul(x[j].budget, y[j].budget);
    budgets[j].check(N);
  }

  std::vector<mpz_class> msg(2 * m);
  for (size_t j = 0; j < m; j++) {
    msg[2 * j] = mod_n(x[j].value - triples[j]->a, N);
    msg[2 * j + 1] = mod_n(y[j].value - triples[j]->b, N);
  }
  auto all = ch_.exchange(Tag::kOpen, msg);

  std::vector<Share> out(m);
  for (size_t j = 0; j < m; j++) {
    mpz_class d = 0, e = 0;
    for (unsigned p = 0; p < n_parties(); p++) {
      if (all[p].size() != 2 * m) {
        ch_.abort("missing Beaver openings from party " + std::to_string(p + 1));
        throw ProtocolAbort("missing Beaver openings", static_cast<int>(p + 1));
      }
      d += all[p][2 * j];
      e += all[p][2 * j + 1];
    }
    d = mod_n(d, N);
    e = mod_n(e, N);
    mpz_class z = triples[j]->c + d * triples[j]->b + e * triples[j]->a;
    if (party_id() == 1) z += d * e;
    triples[j]->used = true;
    out[j] = {mod_n(z, N), x[j].scale_exp + y[j].scale_exp, budgets[j]};
  }
  return out;
}

std::vector<Share> Engine::mul(const std::vector<Share>& x, const std::vector<Share>& y) {
  ensure_triples(x.size());
  std::vector<BeaverTriple> batch;
  batch.reserve(x.size());
  for (size_t j = 0; j < x.size(); j++) {
    batch.push_back(std::move(store_.front()));
    store_.pop_front();
  }
  std::vector<BeaverTriple*> ptrs;
  for (auto& t : batch) ptrs.push_back(&t);
  return mul_with_triples(x, y, ptrs);
}

Share Engine::mul_one(const Share& x, const Share& y, BeaverTriple& triple) {
  std::vector<BeaverTriple*> ptrs{&triple};
  return mul_with_triples({x}, {y}, ptrs)[0];
}

std::vector<mpz_class> Engine::reveal(const std::vector<Share>& xs) {
  const mpz_class& N = pk_.N;
  std::vector<mpz_class> msg(xs.size());
  for (size_t j = 0; j < xs.size(); j++) {
    xs[j].budget.check(N);
    msg[j] = xs[j].value;
  }
  auto all = ch_.exchange(Tag::kReveal, msg);
  std::vector<mpz_class> out(xs.size());
  for (size_t j = 0; j < xs.size(); j++) {
    mpz_class acc = 0;
    for (unsigned p = 0; p < n_parties(); p++) {
      if (all[p].size() != xs.size()) {
        ch_.abort("missing reveal share from party " + std::to_string(p + 1));
        throw ProtocolAbort("missing reveal share", static_cast<int>(p + 1));
      }
      acc += all[p][j];
    }
    out[j] = from_ring(mod_n(acc, N), N);
  }
  return out;
}

Share Engine::positive_mask_share(mpz_class& bound_out) {
  // each party holds r_i uniform in [1, 2^kappa]; r = sum r_i is positive
  mpz_class r_i = rng_.urandomm(mpz_class(1) << pk_.kappa) + 1;
  bound_out = mpz_class(n_parties()) << pk_.kappa;
  return {r_i, 0, MagnitudeBudget{bound_out}};
}

std::pair<mpz_class, mpz_class> Engine::masked_pair_reveal(const Share& num, const Share& den) {
  if (num.scale_exp != den.scale_exp)
    throw ParamError("masked_pair_reveal: num/den scale mismatch");
  mpz_class bound;
  Share r = positive_mask_share(bound);
  auto masked = mul({num, den}, {r, r});
  auto opened = reveal(masked);
  if (opened[1] == 0) throw DegenerateStatistic("masked_pair_reveal: zero denominator");
  return {opened[0], opened[1]};
}

int Engine::sign_reveal(const Share& x) {
  mpz_class bound;
  Share r = positive_mask_share(bound);
  auto masked = mul({x}, {r});
  auto opened = reveal(masked);
  return mpz_sgn(opened[0].get_mpz_t());
}

std::vector<CipherWire> Engine::product_by_shares(const std::vector<CipherWire>& xs,
                                                  const std::vector<Share>& ys) {
  if (xs.size() != ys.size()) throw ParamError("product_by_shares: size mismatch");
  const size_t m = xs.size();
  std::vector<MagnitudeBudget> budgets(m);
  std::vector<mpz_class> msg(m);
  for (size_t j = 0; j < m; j++) {
    budgets[j] = MagnitudeBudget::for_mul(xs[j].budget, ys[j].budget);
    budgets[j].check(pk_.N);
    msg[j] = cmult(pk_, xs[j].ct, ys[j].value, true, &rng_).c;
  }
  auto all = ch_.exchange(Tag::kProd, msg);

  std::vector<CipherWire> out(m);
  for (size_t j = 0; j < m; j++) {
    mpz_class acc(1);
    for (unsigned p = 0; p < n_parties(); p++) {
      if (all[p].size() != m) {
        ch_.abort("missing product contributions from party " + std::to_string(p + 1));
        throw ProtocolAbort("missing product contributions", static_cast<int>(p + 1));
      }
      acc = acc * all[p][j] % pk_.N2;
    }
    out[j] = {Ciphertext{acc}, xs[j].scale_exp + ys[j].scale_exp, budgets[j]};
  }
  return out;
}

std::vector<mpz_class> Engine::decrypt_public(const std::vector<CipherWire>& wires) {
  std::vector<mpz_class> cts(wires.size());
  for (size_t j = 0; j < wires.size(); j++) {
    wires[j].budget.check(pk_.N);
    cts[j] = wires[j].ct.c;
  }
  auto opened = threshold_open(cts);
  std::vector<mpz_class> out(wires.size());
  for (size_t j = 0; j < wires.size(); j++) out[j] = from_ring(opened[j], pk_.N);
  return out;
}

}  // namespace star
