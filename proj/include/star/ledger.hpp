#pragma once

#include <optional>

#include "star/common.hpp"

#include "vendor/json.hpp"

namespace star {

// Procedure-1 wealth machine. alpha is both the initial wealth W(0) and the
// per-test cap; gamma is the reward for a discovery.
struct AlphaParams {
  double alpha = 0.05;
  double beta = 0.5;
  double gamma = 0.0125;

  void validate() const;
  nlohmann::json to_json() const;
  static AlphaParams from_json(const nlohmann::json& j);
};

struct AlphaState {
  double wealth = 0;
  uint64_t index = 0;  // tests consumed so far
};

AlphaState alpha_initial(const AlphaParams& params);

// alpha_j = min(alpha, x/(1+x)) with x = W*(1-beta). The arithmetic order is
// part of the contract: audits replay it bit-for-bit.
double next_alpha(const AlphaState& state, const AlphaParams& params);

// Eq.-1 update, boundary p == alpha_j counts as a rejection.
AlphaState update_wealth(const AlphaState& state, double p, double alpha_j,
                         const AlphaParams& params);
// Same update when only the decision is public (significance-bit mode).
AlphaState update_wealth_decision(const AlphaState& state, bool reject, double alpha_j,
                                  const AlphaParams& params);

// --- Ed25519 (libsodium) ---

struct Ed25519KeyPair {
  Bytes pk;  // 32 bytes
  Bytes sk;  // 64 bytes
};

Ed25519KeyPair ed25519_keygen();
Ed25519KeyPair ed25519_from_seed(const Bytes& seed32);
Bytes ed25519_sign(const Bytes& sk, const Bytes& msg);
bool ed25519_verify(const Bytes& pk, const Bytes& msg, const Bytes& sig);

// --- The TestLog ---

struct ServerKey {
  unsigned id = 0;
  std::string scheme = "ed25519";
  Bytes pubkey;
};

// Everything an offline auditor needs, pinned into the genesis entry.
struct GenesisParams {
  AlphaParams alpha;
  std::string mode = "full-statistic";  // or "significance-bit"
  unsigned quorum = 0;                  // ceil((k+1)/2) of the roster
  std::vector<ServerKey> roster;

  void validate() const;
  nlohmann::json to_json() const;
  static GenesisParams from_json(const nlohmann::json& j);
};

unsigned majority_quorum(unsigned n_servers);

// The signed tuple: test index rho, test identifier sigma (kind + spec hash),
// statistic tau and p as fixed 12-decimal strings ("BIT" in significance-bit
// mode), the decision, and who asked.
struct Certificate {
  uint64_t rho = 0;
  std::string test_id;
  Bytes spec_hash;
  std::string tau;
  std::string p;
  std::string decision;  // "reject" | "accept"
  Bytes researcher_key;
  std::string timestamp;  // RFC 3339 UTC
};

std::string format_decimal12(double v);

struct LogSignature {
  unsigned server = 0;
  Bytes sig;
};

struct LogEntry {
  Certificate cert;
  Bytes prev_hash;
  Bytes entry_hash;
  std::vector<LogSignature> signatures;
  std::optional<nlohmann::json> genesis_params;  // rho 0 only

  nlohmann::json to_json() const;
  static LogEntry from_json(const nlohmann::json& j);
};

// UTF-8 of rho|sigma_hex|tau|p|decision|researcher_key_hex|timestamp|prev_hash_hex;
// the genesis entry writes BOT for the unset fields and appends the canonical
// parameter JSON as a ninth field so the auditing rules are themselves chained.
Bytes canonical_entry_bytes(const Certificate& cert, const Bytes& prev_hash,
                            const nlohmann::json* genesis_params);
Bytes entry_hash_for(const Certificate& cert, const Bytes& prev_hash,
                     const nlohmann::json* genesis_params);

// Append-only JSON-Lines file, one entry per line, fsynced before returning.
class TestLog {
 public:
  // Creates the file with a quorum-signed genesis entry.
  static TestLog create(const std::string& path, const GenesisParams& params,
                        const std::vector<Ed25519KeyPair>& signers, const std::string& timestamp);
  static TestLog open(const std::string& path);

  const std::vector<LogEntry>& entries() const { return entries_; }
  const GenesisParams& params() const { return params_; }
  const Bytes& last_hash() const { return entries_.back().entry_hash; }
  uint64_t next_rho() const { return entries_.back().cert.rho + 1; }

  // Validates rho continuity, quorum size, and every signature; each failure
  // is a distinct error. Durable (flushed + fsynced) before returning.
  const LogEntry& append(const Certificate& cert, const std::vector<LogSignature>& sigs);

  const std::string& path() const { return path_; }

 private:
  TestLog() = default;
  std::string path_;
  std::vector<LogEntry> entries_;
  GenesisParams params_;
};

std::vector<LogEntry> read_log(const std::string& path);

struct VerifyResult {
  bool ok = true;
  size_t first_bad = 0;  // entry index when !ok
  std::string why;
};

VerifyResult verify_log(const std::string& path);
VerifyResult verify_entries(const std::vector<LogEntry>& entries);

struct AuditResult {
  bool valid = false;
  std::string why;
  double alpha_rho = 0;  // the recomputed budget for entry rho
};

// Procedure-2 offline audit of entry rho: verifies the chain prefix, replays
// the wealth trajectory from the genesis parameters, and checks the recorded
// decision against the recomputed alpha_rho.
AuditResult perform_audit(const std::vector<LogEntry>& entries, uint64_t rho);

}  // namespace star
