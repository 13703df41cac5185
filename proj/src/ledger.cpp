#include "star/ledger.hpp"

#include <fcntl.h>
#include <sodium.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

namespace star {

void AlphaParams::validate() const {
  if (!(alpha > 0 && alpha < 1)) throw ParamError("alpha investing: alpha must be in (0, 1)");
  if (!(beta > 0 && beta < 1)) throw ParamError("alpha investing: beta must be in (0, 1)");
  if (!(gamma > 0 && gamma <= alpha))
    throw ParamError("alpha investing: gamma must be in (0, alpha]");
}

nlohmann::json AlphaParams::to_json() const {
  return {{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}};
}

AlphaParams AlphaParams::from_json(const nlohmann::json& j) {
  AlphaParams p;
  p.alpha = j.at("alpha").get<double>();
  p.beta = j.at("beta").get<double>();
  p.gamma = j.at("gamma").get<double>();
  p.validate();
  return p;
}

AlphaState alpha_initial(const AlphaParams& params) { return {params.alpha, 0}; }

double next_alpha(const AlphaState& state, const AlphaParams& params) {
  if (!(state.wealth > 0)) throw ParamError("alpha investing: wealth exhausted");
  const double x = state.wealth * (1 - params.beta);
  return std::min(params.alpha, x / (1 + x));
}

AlphaState update_wealth_decision(const AlphaState& state, bool reject, double alpha_j,
                                  const AlphaParams& params) {
  AlphaState next = state;
  if (reject)
    next.wealth = state.wealth + params.gamma;
  else
    next.wealth = state.wealth - alpha_j / (1 - alpha_j);
  next.index = state.index + 1;
  return next;
}

AlphaState update_wealth(const AlphaState& state, double p, double alpha_j,
                         const AlphaParams& params) {
  if (!(p >= 0 && p <= 1)) throw ParamError("alpha investing: p outside [0, 1]");
  return update_wealth_decision(state, p <= alpha_j, alpha_j, params);
}

Ed25519KeyPair ed25519_keygen() {
  Ed25519KeyPair kp;
  kp.pk.resize(crypto_sign_PUBLICKEYBYTES);
  kp.sk.resize(crypto_sign_SECRETKEYBYTES);
  crypto_sign_keypair(kp.pk.data(), kp.sk.data());
  return kp;
}

Ed25519KeyPair ed25519_from_seed(const Bytes& seed32) {
  if (seed32.size() != crypto_sign_SEEDBYTES) throw ParamError("ed25519 seed must be 32 bytes");
  Ed25519KeyPair kp;
  kp.pk.resize(crypto_sign_PUBLICKEYBYTES);
  kp.sk.resize(crypto_sign_SECRETKEYBYTES);
  crypto_sign_seed_keypair(kp.pk.data(), kp.sk.data(), seed32.data());
  return kp;
}

Bytes ed25519_sign(const Bytes& sk, const Bytes& msg) {
  if (sk.size() != crypto_sign_SECRETKEYBYTES) throw ParamError("bad ed25519 secret key size");
  Bytes sig(crypto_sign_BYTES);
  crypto_sign_detached(sig.data(), nullptr, msg.data(), msg.size(), sk.data());
  return sig;
}

bool ed25519_verify(const Bytes& pk, const Bytes& msg, const Bytes& sig) {
  if (pk.size() != crypto_sign_PUBLICKEYBYTES || sig.size() != crypto_sign_BYTES) return false;
  return crypto_sign_verify_detached(sig.data(), msg.data(), msg.size(), pk.data()) == 0;
}

unsigned majority_quorum(unsigned n_servers) { return (n_servers + 2) / 2; }

void GenesisParams::validate() const {
  alpha.validate();
  if (mode != "full-statistic" && mode != "significance-bit")
    throw ParamError("ledger: unknown reveal mode: " + mode);
  if (roster.empty()) throw ParamError("ledger: empty server roster");
  std::set<unsigned> ids;
  for (const auto& s : roster) {
    if (s.id == 0) throw ParamError("ledger: server ids are 1-based");
    if (!ids.insert(s.id).second) throw ParamError("ledger: duplicate server id");
    if (s.scheme != "ed25519") throw ParamError("ledger: unknown signature scheme: " + s.scheme);
    if (s.pubkey.size() != crypto_sign_PUBLICKEYBYTES)
      throw ParamError("ledger: bad roster pubkey size");
  }
  if (quorum == 0 || quorum > roster.size())
    throw ParamError("ledger: quorum outside [1, roster size]");
}

nlohmann::json GenesisParams::to_json() const {
  nlohmann::json r = nlohmann::json::array();
  for (const auto& s : roster)
    r.push_back({{"id", s.id}, {"pubkey", to_hex(s.pubkey)}, {"scheme", s.scheme}});
  return {{"alpha_investing", alpha.to_json()},
          {"mode", mode},
          {"quorum", quorum},
          {"roster", r}};
}

GenesisParams GenesisParams::from_json(const nlohmann::json& j) {
  GenesisParams g;
  g.alpha = AlphaParams::from_json(j.at("alpha_investing"));
  g.mode = j.at("mode").get<std::string>();
  g.quorum = j.at("quorum").get<unsigned>();
  for (const auto& s : j.at("roster")) {
    ServerKey k;
    k.id = s.at("id").get<unsigned>();
    k.scheme = s.at("scheme").get<std::string>();
    k.pubkey = from_hex(s.at("pubkey").get<std::string>());
    g.roster.push_back(std::move(k));
  }
  g.validate();
  return g;
}

std::string format_decimal12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12f", v);
  return buf;
}

namespace {

const char* kBot = "BOT";

std::string sigma_hex(const Certificate& cert) {
  Bytes sigma(cert.test_id.begin(), cert.test_id.end());
  sigma.push_back(':');
  sigma.insert(sigma.end(), cert.spec_hash.begin(), cert.spec_hash.end());
  return to_hex(sigma);
}

}  // namespace

Bytes canonical_entry_bytes(const Certificate& cert, const Bytes& prev_hash,
                            const nlohmann::json* genesis_params) {
  const bool genesis = genesis_params != nullptr;
  std::string s = std::to_string(cert.rho);
  s += '|';
  s += genesis ? kBot : sigma_hex(cert);
  s += '|';
  s += cert.tau;
  s += '|';
  s += cert.p;
  s += '|';
  s += cert.decision;
  s += '|';
  s += genesis ? kBot : to_hex(cert.researcher_key);
  s += '|';
  s += cert.timestamp;
  s += '|';
  s += to_hex(prev_hash);
  if (genesis) {
    s += '|';
    s += genesis_params->dump();
  }
  return Bytes(s.begin(), s.end());
}

Bytes entry_hash_for(const Certificate& cert, const Bytes& prev_hash,
                     const nlohmann::json* genesis_params) {
  return sha256(canonical_entry_bytes(cert, prev_hash, genesis_params));
}

nlohmann::json LogEntry::to_json() const {
  nlohmann::json sigs = nlohmann::json::array();
  for (const auto& s : signatures) sigs.push_back({{"server", s.server}, {"sig", to_hex(s.sig)}});
  nlohmann::json j{{"rho", cert.rho},
                   {"test_id", cert.test_id},
                   {"spec_hash", cert.spec_hash.empty() ? kBot : to_hex(cert.spec_hash)},
                   {"tau", cert.tau},
                   {"p", cert.p},
                   {"decision", cert.decision},
                   {"researcher_key",
                    cert.researcher_key.empty() ? kBot : to_hex(cert.researcher_key)},
                   {"timestamp", cert.timestamp},
                   {"prev_hash", to_hex(prev_hash)},
                   {"entry_hash", to_hex(entry_hash)},
                   {"signatures", sigs}};
  if (genesis_params) j["params"] = *genesis_params;
  return j;
}

LogEntry LogEntry::from_json(const nlohmann::json& j) {
  LogEntry e;
  e.cert.rho = j.at("rho").get<uint64_t>();
  e.cert.test_id = j.at("test_id").get<std::string>();
  const std::string sh = j.at("spec_hash").get<std::string>();
  if (sh != kBot) e.cert.spec_hash = from_hex(sh);
  e.cert.tau = j.at("tau").get<std::string>();
  e.cert.p = j.at("p").get<std::string>();
  e.cert.decision = j.at("decision").get<std::string>();
  const std::string rk = j.at("researcher_key").get<std::string>();
  if (rk != kBot) e.cert.researcher_key = from_hex(rk);
  e.cert.timestamp = j.at("timestamp").get<std::string>();
  e.prev_hash = from_hex(j.at("prev_hash").get<std::string>());
  e.entry_hash = from_hex(j.at("entry_hash").get<std::string>());
  for (const auto& s : j.at("signatures")) {
    LogSignature sig;
    sig.server = s.at("server").get<unsigned>();
    sig.sig = from_hex(s.at("sig").get<std::string>());
    e.signatures.push_back(std::move(sig));
  }
  if (j.contains("params")) e.genesis_params = j.at("params");
  return e;
}

namespace {

void write_line_durable(const std::string& path, const std::string& line, bool create_new) {
  int flags = O_WRONLY | O_APPEND | O_CREAT;
  if (create_new) flags |= O_EXCL;
  int fd = ::open(path.c_str(), flags, 0644);
  if (fd < 0) throw LedgerError("ledger: cannot open " + path);
  std::string data = line + "\n";
  size_t off = 0;
  while (off < data.size()) {
    ssize_t w = ::write(fd, data.data() + off, data.size() - off);
    if (w <= 0) {
      ::close(fd);
      throw LedgerError("ledger: short write to " + path);
    }
    off += static_cast<size_t>(w);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw LedgerError("ledger: fsync failed for " + path);
  }
  ::close(fd);
}

bool parse_p_string(const std::string& s, double* out) {
  // fixed 12-decimal form: optional sign, digits, '.', exactly 12 digits
  const size_t dot = s.find('.');
  if (dot == std::string::npos || s.size() - dot - 1 != 12) return false;
  size_t start = s[0] == '-' ? 1 : 0;
  if (dot == start) return false;
  for (size_t i = start; i < s.size(); i++)
    if (i != dot && !std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  *out = std::strtod(s.c_str(), nullptr);
  return true;
}

// certificate shape checks shared by append and verify; returns an error
// message or empty
std::string check_certificate(const Certificate& cert, const std::string& mode) {
  if (cert.test_id.empty() || cert.test_id == kBot) return "missing test id";
  if (cert.spec_hash.size() != 32) return "bad spec hash size";
  if (cert.decision != "reject" && cert.decision != "accept") return "bad decision";
  if (cert.researcher_key.size() != crypto_sign_PUBLICKEYBYTES) return "bad researcher key size";
  if (cert.timestamp.empty()) return "missing timestamp";
  if (mode == "significance-bit") {
    if (cert.tau != "BIT" || cert.p != "BIT") return "expected BIT fields in significance-bit mode";
    return "";
  }
  double tau, p;
  if (!parse_p_string(cert.tau, &tau)) return "tau is not a 12-decimal string";
  if (!parse_p_string(cert.p, &p) || p < 0 || p > 1) return "p is not a 12-decimal probability";
  return "";
}

std::string check_signatures(const GenesisParams& params, const Bytes& hash,
                             const std::vector<LogSignature>& sigs) {
  std::set<unsigned> seen;
  for (const auto& s : sigs) {
    const ServerKey* key = nullptr;
    for (const auto& r : params.roster)
      if (r.id == s.server) key = &r;
    if (!key) return "signature from unknown server " + std::to_string(s.server);
    if (!ed25519_verify(key->pubkey, hash, s.sig))
      return "signature verification failed (server " + std::to_string(s.server) + ")";
    seen.insert(s.server);
  }
  if (seen.size() < params.quorum)
    return "insufficient quorum: " + std::to_string(seen.size()) + " of " +
           std::to_string(params.quorum) + " required";
  return "";
}

}  // namespace

TestLog TestLog::create(const std::string& path, const GenesisParams& params,
                        const std::vector<Ed25519KeyPair>& signers,
                        const std::string& timestamp) {
  params.validate();
  LogEntry genesis;
  genesis.cert.rho = 0;
  genesis.cert.test_id = kBot;
  genesis.cert.tau = kBot;
  genesis.cert.p = kBot;
  genesis.cert.decision = kBot;
  genesis.cert.timestamp = timestamp;
  genesis.prev_hash.assign(32, 0);
  genesis.genesis_params = params.to_json();
  genesis.entry_hash = entry_hash_for(genesis.cert, genesis.prev_hash, &*genesis.genesis_params);
  for (size_t i = 0; i < signers.size() && i < params.roster.size(); i++)
    genesis.signatures.push_back(
        {params.roster[i].id, ed25519_sign(signers[i].sk, genesis.entry_hash)});
  const std::string err = check_signatures(params, genesis.entry_hash, genesis.signatures);
  if (!err.empty()) throw LedgerError("ledger: genesis " + err);

  write_line_durable(path, genesis.to_json().dump(), true);
  TestLog log;
  log.path_ = path;
  log.params_ = params;
  log.entries_.push_back(std::move(genesis));
  return log;
}

std::vector<LogEntry> read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LedgerError("ledger: cannot read " + path);
  std::vector<LogEntry> entries;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      entries.push_back(LogEntry::from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw LedgerError("ledger: entry " + std::to_string(lineno) + " unparseable: " + e.what());
    }
    lineno++;
  }
  if (entries.empty()) throw LedgerError("ledger: empty log file " + path);
  return entries;
}

TestLog TestLog::open(const std::string& path) {
  TestLog log;
  log.path_ = path;
  log.entries_ = read_log(path);
  VerifyResult v = verify_entries(log.entries_);
  if (!v.ok)
    throw LedgerError("ledger: " + path + " fails verification at entry " +
                      std::to_string(v.first_bad) + ": " + v.why);
  log.params_ = GenesisParams::from_json(*log.entries_[0].genesis_params);
  return log;
}

const LogEntry& TestLog::append(const Certificate& cert, const std::vector<LogSignature>& sigs) {
  if (cert.rho != next_rho())
    throw LedgerError("ledger: rho gap or duplicate: expected " + std::to_string(next_rho()) +
                      ", got " + std::to_string(cert.rho));
  const std::string cert_err = check_certificate(cert, params_.mode);
  if (!cert_err.empty()) throw LedgerError("ledger: malformed certificate: " + cert_err);

  LogEntry e;
  e.cert = cert;
  e.prev_hash = last_hash();
  e.entry_hash = entry_hash_for(cert, e.prev_hash, nullptr);
  e.signatures = sigs;
  const std::string sig_err = check_signatures(params_, e.entry_hash, sigs);
  if (!sig_err.empty()) throw LedgerError("ledger: " + sig_err);

  write_line_durable(path_, e.to_json().dump(), false);
  entries_.push_back(std::move(e));
  return entries_.back();
}

VerifyResult verify_entries(const std::vector<LogEntry>& entries) {
  if (entries.empty()) return {false, 0, "empty log"};

  const LogEntry& g = entries[0];
  if (g.cert.rho != 0) return {false, 0, "genesis rho is not 0"};
  if (!g.genesis_params) return {false, 0, "genesis lacks parameters"};
  GenesisParams params;
  try {
    params = GenesisParams::from_json(*g.genesis_params);
  } catch (const std::exception& e) {
    return {false, 0, std::string("bad genesis parameters: ") + e.what()};
  }
  if (g.cert.test_id != kBot || g.cert.tau != kBot || g.cert.p != kBot ||
      g.cert.decision != kBot || !g.cert.spec_hash.empty() || !g.cert.researcher_key.empty())
    return {false, 0, "genesis fields must be BOT"};
  if (g.prev_hash != Bytes(32, 0)) return {false, 0, "genesis prev_hash must be zero"};

  for (size_t i = 0; i < entries.size(); i++) {
    const LogEntry& e = entries[i];
    if (e.cert.rho != i) return {false, i, "rho out of order"};
    if (i > 0) {
      if (e.genesis_params) return {false, i, "unexpected parameter block"};
      if (e.prev_hash != entries[i - 1].entry_hash) return {false, i, "broken hash chain"};
      const std::string cert_err = check_certificate(e.cert, params.mode);
      if (!cert_err.empty()) return {false, i, cert_err};
    }
    const Bytes expect =
        entry_hash_for(e.cert, e.prev_hash, e.genesis_params ? &*e.genesis_params : nullptr);
    if (e.entry_hash != expect) return {false, i, "entry hash mismatch"};
    const std::string sig_err = check_signatures(params, e.entry_hash, e.signatures);
    if (!sig_err.empty()) return {false, i, sig_err};
  }
  return {true, 0, ""};
}

VerifyResult verify_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) return {false, 0, "cannot read " + path};
  std::vector<LogEntry> entries;
  std::string line;
  size_t idx = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      entries.push_back(LogEntry::from_json(nlohmann::json::parse(line)));
    } catch (const std::exception&) {
      return {false, idx, "unparseable entry"};
    }
    idx++;
  }
  return verify_entries(entries);
}

AuditResult perform_audit(const std::vector<LogEntry>& entries, uint64_t rho) {
  if (rho == 0 || rho >= entries.size())
    return {false, "no certificate with index " + std::to_string(rho), 0};
  std::vector<LogEntry> prefix(entries.begin(), entries.begin() + rho + 1);
  VerifyResult v = verify_entries(prefix);
  if (!v.ok)
    return {false,
            "log invalid at entry " + std::to_string(v.first_bad) + ": " + v.why, 0};

  const GenesisParams params = GenesisParams::from_json(*entries[0].genesis_params);
  AlphaState state = alpha_initial(params.alpha);
  double alpha_j = 0;
  try {
    for (uint64_t j = 1; j <= rho; j++) {
      alpha_j = next_alpha(state, params.alpha);
      const Certificate& cert = entries[j].cert;
      const bool recorded_reject = cert.decision == "reject";
      if (cert.p == "BIT") {
        // only the quorum-attested decision is public; replay wealth from it
        state = update_wealth_decision(state, recorded_reject, alpha_j, params.alpha);
        continue;
      }
      const double p = std::strtod(cert.p.c_str(), nullptr);
      const bool computed_reject = p <= alpha_j;
      if (j == rho && computed_reject != recorded_reject)
        return {false,
                "decision mismatch: recorded " + cert.decision + " but p=" + cert.p +
                    " against alpha_j=" + format_decimal12(alpha_j),
                alpha_j};
      state = update_wealth(state, p, alpha_j, params.alpha);
    }
  } catch (const std::exception& e) {
    return {false, std::string("replay failed: ") + e.what(), alpha_j};
  }
  return {true, "", alpha_j};
}

}  // namespace star
