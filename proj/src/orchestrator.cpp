#include "star/orchestrator.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <thread>

namespace star {

using nlohmann::json;

std::string to_string(CircuitStrategy s) {
  return s == CircuitStrategy::kAggregatedProducts ? "aggregated-products" : "beaver-per-element";
}

CircuitStrategy strategy_from_string(const std::string& s) {
  if (s == "aggregated-products") return CircuitStrategy::kAggregatedProducts;
  if (s == "beaver-per-element") return CircuitStrategy::kBeaverPerElement;
  throw ParamError("unknown circuit strategy: " + s);
}

std::string utc_day(int64_t unix_seconds) {
  time_t t = static_cast<time_t>(unix_seconds);
  struct tm tm;
  gmtime_r(&t, &tm);
  char buf[40];
  snprintf(buf, sizeof buf, "%04d-%02d-%02d", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday);
  return buf;
}

static json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParamError("cannot open " + path);
  return json::parse(in, nullptr, true);
}

static void write_text_file(const std::string& path, const std::string& text, mode_t mode = 0644) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, mode);
  if (fd < 0) throw Error("cannot write " + path);
  ssize_t n = ::write(fd, text.data(), text.size());
  ::close(fd);
  if (n != static_cast<ssize_t>(text.size())) throw Error("short write: " + path);
}

static json keypair_json(const Ed25519KeyPair& kp) {
  return json{{"scheme", "ed25519"}, {"pk", to_hex(kp.pk)}, {"sk", to_hex(kp.sk)}};
}

static Ed25519KeyPair keypair_from_json(const json& j) {
  Ed25519KeyPair kp;
  kp.pk = from_hex(j.at("pk").get<std::string>());
  kp.sk = from_hex(j.at("sk").get<std::string>());
  if (kp.pk.size() != 32 || kp.sk.size() != 64) throw ParamError("malformed ed25519 key file");
  return kp;
}

SetupResult owner_setup(const SetupConfig& cfg) {
  cfg.alpha.validate();
  cfg.policy.validate();
  if (!(cfg.split > 0.0 && cfg.split < 1.0))
    throw ParamError("split fraction must be in (0,1): the validation half may not be empty");

  DatasetMetadata meta = DatasetMetadata::from_json(read_json_file(cfg.metadata_path));
  PlainDataset data = read_csv(cfg.csv_path, meta);

  uint64_t seed = cfg.seed ? cfg.seed : (std::random_device{}() * 2654435761u) ^ cfg.now_unix;
  Rng rng(seed);

  // disjoint split by seeded shuffle
  std::vector<size_t> idx(data.n_rows);
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (size_t i = idx.size() - 1; i > 0; --i) {
    size_t j = mpz_get_ui(rng.urandomm(i + 1).get_mpz_t());
    std::swap(idx[i], idx[j]);
  }
  size_t n_expl = static_cast<size_t>(std::llround(cfg.split * data.n_rows));
  if (data.n_rows - n_expl < 2)
    throw ParamError("validation split needs at least 2 rows; lower the split fraction");
  std::vector<size_t> expl(idx.begin(), idx.begin() + n_expl);
  std::vector<size_t> vali(idx.begin() + n_expl, idx.end());

  const std::string& out = cfg.out_dir;
  std::filesystem::create_directories(out);
  std::filesystem::create_directories(out + "/shares");
  std::filesystem::create_directories(out + "/server_keys");

  SetupResult res;
  res.home = out;
  res.exploration_rows = expl.size();
  res.validation_rows = vali.size();

  res.exploration_csv = out + "/exploration.csv";
  write_csv(res.exploration_csv, data, expl);

  PaillierKeyPair kp = keygen(cfg.paillier, rng);
  res.dataset_dir = out + "/encrypted";
  EncryptedDataset::create(res.dataset_dir, data, vali, kp.pk, cfg.phi, cfg.policy,
                           meta.independence, expl.size(), rng);

  for (const auto& ks : kp.shares) {
    std::string p = out + "/shares/share_" + std::to_string(ks.party_id) + ".json";
    write_key_share_file(p, kp.pk, ks);
    res.share_paths.push_back(p);
  }

  unsigned k = cfg.paillier.n_parties;
  std::vector<Ed25519KeyPair> signers;
  GenesisParams gp;
  gp.alpha = cfg.alpha;
  gp.mode = cfg.policy.mode;
  gp.quorum = majority_quorum(k);
  for (unsigned i = 1; i <= k; ++i) {
    signers.push_back(ed25519_keygen());
    gp.roster.push_back(ServerKey{i, "ed25519", signers.back().pk});
    std::string p = out + "/server_keys/server_" + std::to_string(i) + ".json";
    json j = keypair_json(signers.back());
    j["id"] = i;
    write_text_file(p, j.dump(2) + "\n", 0600);
    res.signer_paths.push_back(p);
  }

  Ed25519KeyPair researcher = ed25519_keygen();
  res.researcher_key_path = out + "/researcher.json";
  write_text_file(res.researcher_key_path, keypair_json(researcher).dump(2) + "\n", 0600);

  res.ledger_path = out + "/ledger.jsonl";
  TestLog::create(res.ledger_path, gp, signers, rfc3339_utc(cfg.now_unix));

  json config{{"kind", "star-home"},
              {"dataset", "encrypted"},
              {"ledger", "ledger.jsonl"},
              {"attempts", "attempts.log"},
              {"researcher", "researcher.json"},
              {"strategy", to_string(cfg.strategy)},
              {"mpc_seed", seed ^ 0x5741525354415221ull}};
  json shares_j = json::array(), keys_j = json::array();
  for (unsigned i = 1; i <= k; ++i) {
    shares_j.push_back("shares/share_" + std::to_string(i) + ".json");
    keys_j.push_back("server_keys/server_" + std::to_string(i) + ".json");
  }
  config["shares"] = shares_j;
  config["server_keys"] = keys_j;
  write_text_file(out + "/config.json", config.dump(2) + "\n");
  return res;
}

Deployment open_deployment(const std::string& home) {
  json cfg = read_json_file(home + "/config.json");
  if (cfg.value("kind", "") != "star-home") throw ParamError("not a deployment directory: " + home);

  Deployment dep;
  dep.home = home;
  dep.dataset = EncryptedDataset::open(home + "/" + cfg.at("dataset").get<std::string>());
  dep.attempts_path = home + "/" + cfg.at("attempts").get<std::string>();
  dep.strategy = strategy_from_string(cfg.at("strategy").get<std::string>());
  dep.mpc_seed = cfg.at("mpc_seed").get<uint64_t>();

  for (const auto& p : cfg.at("shares"))
    dep.shares.push_back(read_key_share_file(home + "/" + p.get<std::string>()));
  for (const auto& p : cfg.at("server_keys"))
    dep.signers.push_back(keypair_from_json(read_json_file(home + "/" + p.get<std::string>())));

  dep.log = TestLog::open(home + "/" + cfg.at("ledger").get<std::string>());

  const auto& roster = dep.log->params().roster;
  if (roster.size() != dep.signers.size()) throw ParamError("server key count differs from roster");
  for (size_t i = 0; i < roster.size(); ++i)
    if (roster[i].pubkey != dep.signers[i].pk)
      throw ParamError("server key " + std::to_string(roster[i].id) +
                       " does not match the genesis roster");
  if (dep.shares.size() != dep.dataset.pk().n_parties)
    throw ParamError("key share count differs from the public key");
  return dep;
}

Bytes sign_request(const Ed25519KeyPair& researcher, const TestSpec& spec) {
  return ed25519_sign(researcher.sk, spec.hash());
}

// --- attempts sidecar: admission consumes quota, outcomes are bookkeeping ---

void log_attempt(const std::string& path, const Bytes& researcher, int64_t now,
                 const Bytes& spec_hash, const std::string& event, const std::string& detail,
                 std::optional<uint64_t> rho) {
  json j{{"researcher", to_hex(researcher)},
         {"day", utc_day(now)},
         {"time", rfc3339_utc(now)},
         {"spec_hash", to_hex(spec_hash)},
         {"event", event}};
  if (!detail.empty()) j["why"] = detail;
  if (rho) j["rho"] = *rho;
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot append to " + path);
  out << j.dump() << "\n";
  if (!out.flush()) throw Error("short write: " + path);
}

unsigned admitted_count(const std::string& path, const Bytes& researcher,
                        const std::string& day) {
  std::ifstream in(path);
  if (!in) return 0;  // no attempts yet
  std::string line, key = to_hex(researcher);
  unsigned count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw LedgerError("attempts log is corrupt: " + path);
    if (j.value("event", "") == "admitted" && j.value("researcher", "") == key &&
        j.value("day", "") == day)
      ++count;
  }
  return count;
}

// --- the admission checks + k-party run ---

void check_spec_against_dataset(const DatasetMetadata& meta, const TestSpec& spec) {
  for (const auto& name : spec.columns) {
    const AttributeInfo* a = meta.find(name);
    if (!a) throw ParamError("unknown column: " + name);
    bool want_cat = spec.kind == TestKind::kChiSq;
    if (a->categorical != want_cat)
      throw ParamError("column " + name + (want_cat ? " must be categorical" : " must be continuous"));
  }
  if (spec.kind == TestKind::kChiSq) {
    const AttributeInfo* a = meta.find(spec.columns[0]);
    if (spec.null_probs.size() != a->categories.size())
      throw ParamError("null distribution has " + std::to_string(spec.null_probs.size()) +
                       " probabilities for " + std::to_string(a->categories.size()) + " categories");
    if (spec.one_sided) throw ParamError("CHISQ is inherently one-tailed; omit sidedness");
  }
  if (spec.kind == TestKind::kFTest && spec.one_sided)
    throw ParamError("FTEST is inherently one-tailed; omit sidedness");
  std::set<std::string> uniq(spec.columns.begin(), spec.columns.end());
  if (uniq.size() != spec.columns.size()) throw ParamError("test spec repeats a column");
}

void public_dfs(const TestSpec& spec, const DatasetMetadata& meta, unsigned& df1, unsigned& df2) {
  unsigned n = static_cast<unsigned>(meta.n_rows);
  df2 = 0;
  switch (spec.kind) {
    case TestKind::kTTest:
      if (n < 2) throw ParamError("t test needs at least 2 rows");
      df1 = 2 * n - 2;
      break;
    case TestKind::kPearson:
      if (n < 3) throw ParamError("correlation test needs at least 3 rows");
      df1 = n - 2;
      break;
    case TestKind::kChiSq:
      df1 = static_cast<unsigned>(spec.null_probs.size()) - 1;
      break;
    case TestKind::kFTest: {
      unsigned g = static_cast<unsigned>(spec.columns.size());
      df1 = g - 1;
      df2 = n * g - g;
      break;
    }
  }
}

namespace {
struct PartyResult {
  double tau = 0;
  bool bit = false;
  Bytes transcript;
};
}  // namespace

std::vector<std::vector<CipherWire>> load_test_columns(const EncryptedDataset& ds,
                                                       const TestSpec& spec) {
  std::vector<std::vector<CipherWire>> cols;
  if (spec.kind == TestKind::kChiSq) {
    cols = ds.load_onehot(spec.columns[0]);
  } else {
    for (const auto& name : spec.columns) cols.push_back(ds.load_column(name));
  }
  return cols;
}

AlphaState replay_wealth(const std::vector<LogEntry>& entries, const GenesisParams& gp) {
  AlphaState st = alpha_initial(gp.alpha);
  for (size_t i = 1; i < entries.size(); ++i) {
    const Certificate& c = entries[i].cert;
    double aj = next_alpha(st, gp.alpha);
    st = (c.tau == "BIT") ? update_wealth_decision(st, c.decision == "reject", aj, gp.alpha)
                          : update_wealth(st, std::strtod(c.p.c_str(), nullptr), aj, gp.alpha);
  }
  return st;
}

TestStatisticPair build_test_circuit(Engine& eng, const TestSpec& spec,
                                     const std::vector<std::vector<CipherWire>>& cols,
                                     unsigned n_rows, unsigned phi, CircuitStrategy strategy) {
  switch (spec.kind) {
    case TestKind::kTTest:
      return ttest_circuit(eng, cols[0], cols[1], strategy);
    case TestKind::kPearson:
      return pearson_circuit(eng, cols[0], cols[1], strategy);
    case TestKind::kFTest:
      return ftest_circuit(eng, cols, strategy);
    case TestKind::kChiSq: {
      std::vector<CipherWire> counts;
      counts.reserve(cols.size());
      for (const auto& group : cols) {
        CipherWire acc = group[0];
        for (size_t r = 1; r < group.size(); ++r) acc = eng.wire_add(acc, group[r]);
        counts.push_back(std::move(acc));
      }
      return chisq_circuit(eng, counts, spec.null_probs, n_rows, phi, strategy);
    }
  }
  throw Error("unreachable");
}

Certificate compute_test(Deployment& dep, const TestRequest& req, int64_t now_unix) {
  const TestSpec& spec = req.spec;
  spec.validate();
  if (req.researcher_key.size() != 32) throw ParamError("researcher key must be 32 bytes");
  if (!ed25519_verify(req.researcher_key, spec.hash(), req.signature))
    throw ParamError("researcher signature does not verify");
  const DatasetMetadata& meta = dep.dataset.meta();
  check_spec_against_dataset(meta, spec);

  const RevealPolicy& policy = dep.dataset.policy();
  std::string day = utc_day(now_unix);
  Bytes spec_hash = spec.hash();
  if (admitted_count(dep.attempts_path, req.researcher_key, day) >= policy.daily_quota) {
    log_attempt(dep.attempts_path, req.researcher_key, now_unix, spec_hash, "quota-exceeded");
    throw QuotaError("daily test quota exhausted for this researcher key");
  }
  log_attempt(dep.attempts_path, req.researcher_key, now_unix, spec_hash, "admitted");

  const GenesisParams& gp = dep.log->params();
  AlphaState st = replay_wealth(dep.log->entries(), gp);
  double alpha_j = next_alpha(st, gp.alpha);

  bool bit_mode = gp.mode == "significance-bit";
  unsigned df1 = 0, df2 = 0;
  public_dfs(spec, meta, df1, df2);
  double critical = bit_mode ? critical_statistic(spec.kind, alpha_j, df1, df2, spec.one_sided) : 0;

  std::vector<std::vector<CipherWire>> cols = load_test_columns(dep.dataset, spec);

  unsigned k = dep.dataset.pk().n_parties;
  uint64_t rho = dep.log->next_rho();
  LocalBus bus(k);
  std::vector<std::unique_ptr<Channel>> eps;
  for (unsigned i = 1; i <= k; ++i) eps.push_back(bus.endpoint(i));
  std::vector<PartyResult> outs(k);
  std::vector<std::exception_ptr> errs(k);
  std::vector<std::thread> threads;
  for (unsigned i = 0; i < k; ++i) {
    threads.emplace_back([&, i] {
      try {
        Engine eng(dep.dataset.pk(), dep.shares[i], *eps[i],
                   dep.mpc_seed + (rho << 8) + i);
        TestStatisticPair pair =
            build_test_circuit(eng, spec, cols, static_cast<unsigned>(meta.n_rows),
                               dep.dataset.phi(), dep.strategy);
        if (bit_mode)
          outs[i].bit = significance_bit(eng, pair, critical, dep.dataset.phi(), spec.one_sided);
        else
          outs[i].tau = reveal_statistic(eng, pair);
        outs[i].transcript = eps[i]->transcript_hash();
      } catch (...) {
        errs[i] = std::current_exception();
        eps[i]->abort("party " + std::to_string(i + 1) + " failed");
      }
    });
  }
  for (auto& t : threads) t.join();

  for (unsigned i = 0; i < k; ++i) {
    if (!errs[i]) continue;
    std::string why;
    try {
      std::rethrow_exception(errs[i]);
    } catch (const std::exception& e) {
      why = e.what();
    }
    log_attempt(dep.attempts_path, req.researcher_key, now_unix, spec_hash, "failed", why);
    std::rethrow_exception(errs[i]);
  }
  for (unsigned i = 1; i < k; ++i) {
    bool same = bit_mode ? outs[i].bit == outs[0].bit : outs[i].tau == outs[0].tau;
    if (!same || outs[i].transcript != outs[0].transcript)
      throw Error("parties disagree on the outcome; refusing to certify");
  }

  Certificate cert;
  cert.rho = rho;
  cert.test_id = to_string(spec.kind);
  cert.spec_hash = spec_hash;
  cert.researcher_key = req.researcher_key;
  cert.timestamp = rfc3339_utc(now_unix);
  bool reject;
  if (bit_mode) {
    cert.tau = "BIT";
    cert.p = "BIT";
    reject = outs[0].bit;
  } else {
    cert.tau = format_decimal12(outs[0].tau);
    cert.p = format_decimal12(p_from_test(spec.kind, outs[0].tau, df1, df2, spec.one_sided));
    // decide from the recorded 12-decimal value: the audit replays that string
    reject = std::strtod(cert.p.c_str(), nullptr) <= alpha_j;
  }
  cert.decision = reject ? "reject" : "accept";

  Bytes h = entry_hash_for(cert, dep.log->last_hash(), nullptr);
  std::vector<LogSignature> sigs;
  for (size_t i = 0; i < dep.signers.size(); ++i)
    sigs.push_back(LogSignature{gp.roster[i].id, ed25519_sign(dep.signers[i].sk, h)});
  const LogEntry& entry = dep.log->append(cert, sigs);
  log_attempt(dep.attempts_path, req.researcher_key, now_unix, spec_hash, "completed", "", rho);
  return entry.cert;
}

std::vector<WealthPoint> wealth_trajectory(const std::vector<LogEntry>& entries) {
  if (entries.empty() || !entries[0].genesis_params)
    throw LedgerError("log has no genesis entry");
  GenesisParams gp = GenesisParams::from_json(*entries[0].genesis_params);
  AlphaState st = alpha_initial(gp.alpha);
  std::vector<WealthPoint> out;
  out.push_back(WealthPoint{0, 0.0, st.wealth, "genesis"});
  for (size_t i = 1; i < entries.size(); ++i) {
    const Certificate& c = entries[i].cert;
    double aj = next_alpha(st, gp.alpha);
    st = (c.tau == "BIT") ? update_wealth_decision(st, c.decision == "reject", aj, gp.alpha)
                          : update_wealth(st, std::strtod(c.p.c_str(), nullptr), aj, gp.alpha);
    out.push_back(WealthPoint{c.rho, aj, st.wealth, c.decision});
  }
  return out;
}

// --- plaintext simulation ---

json FdrReport::to_json() const {
  json fr = json::array();
  for (const auto& f : fractions) {
    fr.push_back(json{{"null_fraction", f.null_fraction},
                      {"investing", {{"mean_fdr", f.investing.mean_fdr},
                                     {"mean_discoveries", f.investing.mean_discoveries}}},
                      {"fixed", {{"mean_fdr", f.fixed.mean_fdr},
                                 {"mean_discoveries", f.fixed.mean_discoveries}}},
                      {"min_wealth", f.min_wealth},
                      {"wealth_trajectory_first_dataset", f.wealth0},
                      {"pvalues_first_dataset", f.pvalues0},
                      {"alphas_first_dataset", f.alphas0},
                      {"is_null_first_dataset", f.is_null0}});
  }
  return json{{"datasets", config.n_datasets},
              {"attributes", config.n_attrs},
              {"rows", config.n_rows},
              {"tests_per_dataset", config.n_tests},
              {"seed", config.seed},
              {"shift_sigmas", config.shift_sigmas},
              {"fixed_alpha", config.fixed_alpha},
              {"alpha_investing", config.alpha.to_json()},
              {"fractions", fr}};
}

// Eq.-2 statistic of two equal-length samples, in the clear.
static double plain_t(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, qx = 0, qy = 0;
  for (double v : x) sx += v, qx += v * v;
  for (double v : y) sy += v, qy += v * v;
  double n = static_cast<double>(x.size());
  double num = (n - 1) * (sx - sy) * (sx - sy);
  double den = n * qx + n * qy - sx * sx - sy * sy;
  if (!(den > 0)) return 0;
  double t = std::sqrt(num / den);
  return sx - sy < 0 ? -t : t;
}

FdrReport fdr_sim(const FdrConfig& cfg) {
  cfg.alpha.validate();
  if (cfg.n_attrs < 8 || cfg.n_tests < 1 || cfg.n_rows < 2 || cfg.n_datasets < 1)
    throw ParamError("simulation dimensions out of range");
  FdrReport report;
  report.config = cfg;

  const unsigned n_shift = cfg.n_attrs / 4;  // columns carrying a true effect
  const unsigned n_base = cfg.n_attrs - n_shift;
  const double sigma = std::sqrt((101.0 * 101.0 - 1.0) / 12.0);  // uniform on {0..100}
  const double shift = cfg.shift_sigmas * sigma;

  for (size_t fi = 0; fi < cfg.fractions.size(); ++fi) {
    double q = cfg.fractions[fi];
    if (!(q >= 0 && q <= 1)) throw ParamError("null fraction must be in [0,1]");
    unsigned n_null = static_cast<unsigned>(std::lround(q * cfg.n_tests));
    FdrFractionReport fr;
    fr.null_fraction = q;
    fr.min_wealth = cfg.alpha.alpha;

    double sum_fdp_inv = 0, sum_r_inv = 0, sum_fdp_fix = 0, sum_r_fix = 0;
    for (unsigned d = 0; d < cfg.n_datasets; ++d) {
      Rng rng(cfg.seed + 1000003ull * fi + d);

      std::vector<std::vector<double>> col(cfg.n_attrs, std::vector<double>(cfg.n_rows));
      for (unsigned a = 0; a < cfg.n_attrs; ++a)
        for (unsigned r = 0; r < cfg.n_rows; ++r) {
          col[a][r] = static_cast<double>(rng.u64() % 101);
          if (a >= n_base) col[a][r] += shift;
        }

      std::vector<uint8_t> is_null(cfg.n_tests, 0);
      for (unsigned j = 0; j < n_null; ++j) is_null[j] = 1;
      for (unsigned j = cfg.n_tests - 1; j > 0; --j)
        std::swap(is_null[j], is_null[rng.u64() % (j + 1)]);

      AlphaState st = alpha_initial(cfg.alpha);
      if (d == 0) fr.wealth0.push_back(st.wealth);
      unsigned v_inv = 0, r_inv = 0, v_fix = 0, r_fix = 0;
      for (unsigned j = 0; j < cfg.n_tests; ++j) {
        unsigned a, b;
        if (is_null[j]) {
          a = rng.u64() % n_base;
          do b = rng.u64() % n_base; while (b == a);
        } else {
          a = rng.u64() % n_base;
          b = n_base + rng.u64() % n_shift;
        }
        double t = plain_t(col[a], col[b]);
        double p = p_from_test(TestKind::kTTest, t, 2 * cfg.n_rows - 2, 0, false);

        double aj = next_alpha(st, cfg.alpha);
        bool rej_inv = p <= aj;
        st = update_wealth(st, p, aj, cfg.alpha);
        fr.min_wealth = std::min(fr.min_wealth, st.wealth);
        if (rej_inv) ++r_inv, v_inv += is_null[j];

        bool rej_fix = p <= cfg.fixed_alpha;
        if (rej_fix) ++r_fix, v_fix += is_null[j];

        if (d == 0) {
          fr.wealth0.push_back(st.wealth);
          fr.pvalues0.push_back(p);
          fr.alphas0.push_back(aj);
          fr.is_null0.push_back(is_null[j]);
        }
      }
      sum_fdp_inv += r_inv ? static_cast<double>(v_inv) / r_inv : 0.0;
      sum_fdp_fix += r_fix ? static_cast<double>(v_fix) / r_fix : 0.0;
      sum_r_inv += r_inv;
      sum_r_fix += r_fix;
    }
    fr.investing.mean_fdr = sum_fdp_inv / cfg.n_datasets;
    fr.investing.mean_discoveries = sum_r_inv / cfg.n_datasets;
    fr.fixed.mean_fdr = sum_fdp_fix / cfg.n_datasets;
    fr.fixed.mean_discoveries = sum_r_fix / cfg.n_datasets;
    report.fractions.push_back(std::move(fr));
  }
  return report;
}

}  // namespace star
