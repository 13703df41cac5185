#pragma once

#include <optional>

#include "star/circuits.hpp"
#include "star/dataset.hpp"
#include "star/ledger.hpp"
#include "star/pvalue.hpp"

namespace star {

std::string to_string(CircuitStrategy s);
CircuitStrategy strategy_from_string(const std::string& s);

std::string utc_day(int64_t unix_seconds);  // "YYYY-MM-DD"

struct SetupConfig {
  std::string csv_path;
  std::string metadata_path;  // attribute declarations (json)
  std::string out_dir;
  PaillierParams paillier;
  AlphaParams alpha;
  RevealPolicy policy;
  unsigned phi = 40;
  double split = 0.75;  // exploration fraction; validation keeps the rest
  uint64_t seed = 0;    // 0 draws a fresh seed
  int64_t now_unix = 0;
  CircuitStrategy strategy = CircuitStrategy::kAggregatedProducts;
};

struct SetupResult {
  std::string home;
  std::string dataset_dir;
  std::string ledger_path;
  std::string exploration_csv;
  std::string researcher_key_path;
  std::vector<std::string> share_paths;
  std::vector<std::string> signer_paths;
  size_t exploration_rows = 0;
  size_t validation_rows = 0;
};

// Splits the rows by seeded shuffle, encrypts the validation half column by
// column, deals key shares and log-signing keys, and signs the genesis entry.
SetupResult owner_setup(const SetupConfig& cfg);

// Everything the in-process deployment holds: in this mode one process plays
// all k computing servers, each on its own thread and bus endpoint.
struct Deployment {
  EncryptedDataset dataset;
  std::vector<PaillierKeyShare> shares;
  std::vector<Ed25519KeyPair> signers;  // aligned with the genesis roster
  std::optional<TestLog> log;
  std::string attempts_path;
  CircuitStrategy strategy = CircuitStrategy::kAggregatedProducts;
  uint64_t mpc_seed = 1;
  std::string home;
};

Deployment open_deployment(const std::string& home);

struct TestRequest {
  TestSpec spec;
  Bytes researcher_key;  // ed25519 public key, 32 bytes
  Bytes signature;       // over spec.hash()
};

Bytes sign_request(const Ed25519KeyPair& researcher, const TestSpec& spec);

// Runs one test end to end: admission (signature, schema, daily quota),
// the k-party computation, the Eq.-1 decision at the replayed budget, and the
// quorum-signed append. Failures after admission cost quota but never consume
// a log index or wealth.
Certificate compute_test(Deployment& dep, const TestRequest& req, int64_t now_unix);

// Pieces shared by the in-process driver and the TCP transport: admission
// checks, public degrees of freedom, wire loading, and the circuit switch.
void check_spec_against_dataset(const DatasetMetadata& meta, const TestSpec& spec);
void public_dfs(const TestSpec& spec, const DatasetMetadata& meta, unsigned& df1, unsigned& df2);
std::vector<std::vector<CipherWire>> load_test_columns(const EncryptedDataset& ds,
                                                       const TestSpec& spec);
TestStatisticPair build_test_circuit(Engine& eng, const TestSpec& spec,
                                     const std::vector<std::vector<CipherWire>>& cols,
                                     unsigned n_rows, unsigned phi, CircuitStrategy strategy);
AlphaState replay_wealth(const std::vector<LogEntry>& entries, const GenesisParams& gp);

// Admission sidecar: one JSON line per event; "admitted" lines are what the
// daily quota counts, so a failed run still spends an attempt.
void log_attempt(const std::string& path, const Bytes& researcher, int64_t now,
                 const Bytes& spec_hash, const std::string& event, const std::string& detail = "",
                 std::optional<uint64_t> rho = {});
unsigned admitted_count(const std::string& path, const Bytes& researcher, const std::string& day);

struct WealthPoint {
  uint64_t rho = 0;
  double alpha_j = 0;
  double wealth_after = 0;
  std::string decision;
};

// Budget replay for reporting; entries must start at the genesis entry.
std::vector<WealthPoint> wealth_trajectory(const std::vector<LogEntry>& entries);

// --- plaintext false-discovery simulation ---

struct FdrConfig {
  std::vector<double> fractions{0.25, 0.5, 0.75, 1.0};  // share of null tests
  unsigned n_datasets = 100;
  unsigned n_attrs = 64;
  unsigned n_rows = 1000;
  unsigned n_tests = 64;
  uint64_t seed = 20260816;
  AlphaParams alpha;
  double shift_sigmas = 0.5;  // mean shift of non-null columns
  double fixed_alpha = 0.05;  // uncontrolled comparison arm
};

struct FdrArm {
  double mean_fdr = 0;
  double mean_discoveries = 0;
};

struct FdrFractionReport {
  double null_fraction = 0;
  FdrArm investing, fixed;
  double min_wealth = 0;             // over every dataset and step
  std::vector<double> wealth0;       // dataset 0: W(0)..W(T)
  std::vector<double> pvalues0;      // dataset 0, per test
  std::vector<double> alphas0;
  std::vector<uint8_t> is_null0;
};

struct FdrReport {
  FdrConfig config;
  std::vector<FdrFractionReport> fractions;

  nlohmann::json to_json() const;
};

// Both arms see identical test sequences and p-values; only the rejection
// rule differs (alpha-investing vs fixed alpha).
FdrReport fdr_sim(const FdrConfig& cfg);

}  // namespace star
