#include <cinttypes>
#include <fstream>
#include <iostream>

#include "star/transport.hpp"

#include "vendor/CLI11.hpp"

using namespace star;
using nlohmann::json;

namespace {

json read_json_or_die(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParamError("cannot open " + path);
  return json::parse(in, nullptr, true);
}

Ed25519KeyPair load_researcher(const std::string& path) {
  json j = read_json_or_die(path);
  Ed25519KeyPair kp;
  kp.pk = from_hex(j.at("pk").get<std::string>());
  kp.sk = from_hex(j.at("sk").get<std::string>());
  return kp;
}

int cmd_setup(const std::string& csv, const std::string& metadata, const std::string& out,
              unsigned bits, unsigned parties, unsigned threshold, AlphaParams alpha,
              const std::string& mode, unsigned quota, double split, unsigned phi, uint64_t seed,
              const std::string& strategy) {
  SetupConfig cfg;
  cfg.csv_path = csv;
  cfg.metadata_path = metadata;
  cfg.out_dir = out;
  cfg.paillier.modulus_bits = bits;
  cfg.paillier.n_parties = parties;
  cfg.paillier.threshold = threshold;
  cfg.alpha = alpha;
  cfg.policy.mode = mode;
  cfg.policy.daily_quota = quota;
  cfg.split = split;
  cfg.phi = phi;
  cfg.seed = seed;
  cfg.now_unix = time(nullptr);
  cfg.strategy = strategy_from_string(strategy);
  SetupResult res = owner_setup(cfg);
  json j{{"home", res.home},
         {"dataset", res.dataset_dir},
         {"ledger", res.ledger_path},
         {"exploration_csv", res.exploration_csv},
         {"exploration_rows", res.exploration_rows},
         {"validation_rows", res.validation_rows},
         {"researcher_key", res.researcher_key_path},
         {"key_shares", res.share_paths},
         {"server_keys", res.signer_paths}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

TestSpec spec_from_cli(const std::string& spec_file, const std::string& test,
                       const std::vector<std::string>& columns,
                       const std::vector<double>& null_probs, bool one_sided) {
  if (!spec_file.empty()) return TestSpec::from_json(read_json_or_die(spec_file));
  TestSpec s;
  s.kind = test_kind_from_string(test);
  s.columns = columns;
  s.null_probs = null_probs;
  s.one_sided = one_sided;
  s.validate();
  return s;
}

int cmd_test(const std::string& home, const TestSpec& spec, const std::string& researcher_path,
             const std::string& remote) {
  std::string rp = researcher_path;
  if (rp.empty()) rp = home + "/researcher.json";
  Ed25519KeyPair researcher = load_researcher(rp);

  if (!remote.empty()) {
    auto colon = remote.rfind(':');
    if (colon == std::string::npos) throw ParamError("--remote wants host:port");
    std::string host = remote.substr(0, colon);
    int port = std::stoi(remote.substr(colon + 1));
    json reply = remote_test(host, static_cast<uint16_t>(port), spec, researcher);
    std::cout << reply.dump(2) << "\n";
    return reply.value("ok", false) ? 0 : 1;
  }

  Deployment dep = open_deployment(home);
  TestRequest req{spec, researcher.pk, sign_request(researcher, spec)};
  Certificate cert = compute_test(dep, req, time(nullptr));
  json j{{"rho", cert.rho},
         {"test_id", cert.test_id},
         {"spec_hash", to_hex(cert.spec_hash)},
         {"tau", cert.tau},
         {"p", cert.p},
         {"decision", cert.decision},
         {"timestamp", cert.timestamp}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_audit(const std::string& ledger, uint64_t rho) {
  std::vector<LogEntry> entries;
  try {
    entries = read_log(ledger);
  } catch (const std::exception& e) {
    std::cerr << "unreadable ledger: " << e.what() << "\n";
    return 2;
  }
  std::vector<WealthPoint> points;
  try {
    points = wealth_trajectory(entries);
  } catch (const std::exception& e) {
    std::cerr << "cannot replay wealth: " << e.what() << "\n";
    return 2;
  }
  printf("%-6s %-14s %-14s %s\n", "rho", "alpha_rho", "wealth_after", "decision");
  for (const auto& p : points) {
    if (p.rho == 0) {
      printf("%-6" PRIu64 " %-14s %-14.10f %s\n", p.rho, "-", p.wealth_after, p.decision.c_str());
      continue;
    }
    printf("%-6" PRIu64 " %-14.10f %-14.10f %s\n", p.rho, p.alpha_j, p.wealth_after,
           p.decision.c_str());
  }
  AuditResult res = perform_audit(entries, rho);
  printf("alpha_%" PRIu64 " = %.12f\n", rho, res.alpha_rho);
  if (res.valid) {
    printf("entry %" PRIu64 ": VALID\n", rho);
    return 0;
  }
  printf("entry %" PRIu64 ": INVALID (%s)\n", rho, res.why.c_str());
  return 1;
}

int cmd_verify_log(const std::string& ledger) {
  std::ifstream probe(ledger);
  if (!probe) {
    std::cerr << "unreadable ledger: cannot open " << ledger << "\n";
    return 2;
  }
  VerifyResult res = verify_log(ledger);
  if (res.ok) {
    size_t n = read_log(ledger).size();
    printf("ok: %zu entries, chain and quorum verified\n", n);
    return 0;
  }
  printf("invalid at entry %zu: %s\n", res.first_bad, res.why.c_str());
  return 1;
}

int cmd_fdr_sim(FdrConfig cfg, const std::string& out_path) {
  FdrReport report = fdr_sim(cfg);
  std::string text = report.to_json().dump(2) + "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw ParamError("cannot write " + out_path);
    out << text;
  }
  std::cout << text;
  for (const auto& f : report.fractions)
    fprintf(stderr, "null fraction %.2f: investing FDR %.4f (%.1f discoveries), fixed FDR %.4f (%.1f)\n",
            f.null_fraction, f.investing.mean_fdr, f.investing.mean_discoveries,
            f.fixed.mean_fdr, f.fixed.mean_discoveries);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"statistical tests over an encrypted holdout with a certified test log"};
  app.require_subcommand(1);

  // setup
  auto* setup = app.add_subcommand("setup", "encrypt a dataset and deal keys to the servers");
  std::string csv, metadata, out_dir, mode = "full-statistic", strategy = "aggregated-products";
  unsigned bits = 2048, parties = 3, threshold = 2, quota = 10, phi = 40;
  double alpha = 0.05, beta = 0.5, gamma = 0.0125, split = 0.75;
  uint64_t seed = 0;
  setup->add_option("--csv", csv, "input csv with a header row")->required();
  setup->add_option("--metadata", metadata, "attribute declarations (json)")->required();
  setup->add_option("--out", out_dir, "output directory")->required();
  setup->add_option("--bits", bits, "Paillier modulus bits");
  setup->add_option("--parties", parties, "number of computing servers");
  setup->add_option("--threshold", threshold, "decryption threshold t");
  setup->add_option("--alpha", alpha, "initial wealth and per-test cap");
  setup->add_option("--beta", beta, "spending fraction");
  setup->add_option("--gamma", gamma, "discovery reward");
  setup->add_option("--mode", mode)->check(CLI::IsMember({"full-statistic", "significance-bit"}));
  setup->add_option("--quota", quota, "per-researcher daily test quota");
  setup->add_option("--split", split, "exploration fraction of the rows");
  setup->add_option("--phi", phi, "fixed-point fractional bits");
  setup->add_option("--seed", seed, "setup randomness seed (0 draws one)");
  setup->add_option("--strategy", strategy)
      ->check(CLI::IsMember({"aggregated-products", "beaver-per-element"}));

  // test
  auto* test = app.add_subcommand("test", "run one statistical test and log the certificate");
  std::string home, spec_file, test_name, researcher_path, remote;
  std::vector<std::string> columns;
  std::vector<double> null_probs;
  bool one_sided = false;
  test->add_option("--home", home, "deployment directory from setup")->required();
  test->add_option("--spec", spec_file, "test spec json file");
  test->add_option("--test", test_name, "TTEST | PEARSON | CHISQ | FTEST");
  test->add_option("--columns", columns, "columns the test touches")->delimiter(',');
  test->add_option("--null-probs", null_probs, "CHISQ null distribution")->delimiter(',');
  test->add_flag("--one-sided", one_sided, "one-sided alternative (TTEST/PEARSON)");
  test->add_option("--researcher", researcher_path, "researcher key file");
  test->add_option("--remote", remote, "submit to a serving leader at host:port");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run one computing server over TCP");
  std::string serve_home, serve_config;
  unsigned party = 1;
  unsigned mesh_port = 0, control_port = 0;
  std::vector<std::string> peer_specs;
  bool replicate = false;
  int max_tests = -1;
  std::string key_share;
  serve_cmd->add_option("--home", serve_home, "deployment directory")->required();
  serve_cmd->add_option("--config", serve_config, "serve config json (overrides flags)");
  serve_cmd->add_option("--party", party, "this server's 1-based id");
  serve_cmd->add_option("--mesh-port", mesh_port, "port for the server mesh");
  serve_cmd->add_option("--peers", peer_specs, "peer list as id:host:port")->delimiter(',');
  serve_cmd->add_option("--control-port", control_port, "researcher port (leader only)");
  serve_cmd->add_flag("--replicate-ledger", replicate, "append to this server's ledger copy");
  serve_cmd->add_option("--max-tests", max_tests, "exit after this many tests");
  serve_cmd->add_option("--key-share", key_share, "key share file (STAR_KEY_SHARE_PATH wins)");

  // audit
  auto* audit = app.add_subcommand("audit", "replay the budget and audit one entry");
  std::string audit_ledger;
  uint64_t rho = 0;
  audit->add_option("--ledger", audit_ledger, "ledger file")->required();
  audit->add_option("--rho", rho, "entry to audit")->required();

  // verify-log
  auto* verify = app.add_subcommand("verify-log", "check the hash chain and quorum signatures");
  std::string verify_ledger;
  verify->add_option("--ledger", verify_ledger, "ledger file")->required();

  // fdr-sim
  auto* sim = app.add_subcommand("fdr-sim", "plaintext false-discovery simulation");
  FdrConfig fcfg;
  std::string sim_out;
  sim->add_option("--datasets", fcfg.n_datasets);
  sim->add_option("--attrs", fcfg.n_attrs);
  sim->add_option("--rows", fcfg.n_rows);
  sim->add_option("--tests", fcfg.n_tests);
  sim->add_option("--fractions", fcfg.fractions, "null fractions to sweep")->delimiter(',');
  sim->add_option("--seed", fcfg.seed);
  sim->add_option("--alpha", fcfg.alpha.alpha);
  sim->add_option("--beta", fcfg.alpha.beta);
  sim->add_option("--gamma", fcfg.alpha.gamma);
  sim->add_option("--shift", fcfg.shift_sigmas, "effect size of non-null columns, in sigmas");
  sim->add_option("--fixed-alpha", fcfg.fixed_alpha, "uncontrolled arm threshold");
  sim->add_option("--out", sim_out, "also write the report here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (setup->parsed())
      return cmd_setup(csv, metadata, out_dir, bits, parties, threshold,
                       AlphaParams{alpha, beta, gamma}, mode, quota, split, phi, seed, strategy);
    if (test->parsed()) {
      TestSpec spec = spec_from_cli(spec_file, test_name, columns, null_probs, one_sided);
      return cmd_test(home, spec, researcher_path, remote);
    }
    if (serve_cmd->parsed()) {
      ServeConfig cfg;
      if (!serve_config.empty()) {
        cfg = serve_config_from_json(read_json_or_die(serve_config), serve_home);
      } else {
        cfg.home = serve_home;
        cfg.party = party;
        cfg.mesh_port = static_cast<uint16_t>(mesh_port);
        cfg.control_port = static_cast<uint16_t>(control_port);
        cfg.replicate_ledger = replicate;
        cfg.max_tests = max_tests;
        cfg.key_share_path = key_share;
        for (const auto& ps : peer_specs) {
          auto c1 = ps.find(':'), c2 = ps.rfind(':');
          if (c1 == std::string::npos || c2 == c1) throw ParamError("--peers wants id:host:port");
          cfg.peers.push_back(PeerAddr{static_cast<unsigned>(std::stoul(ps.substr(0, c1))),
                                       ps.substr(c1 + 1, c2 - c1 - 1),
                                       static_cast<uint16_t>(std::stoul(ps.substr(c2 + 1)))});
        }
      }
      return serve(cfg);
    }
    if (audit->parsed()) return cmd_audit(audit_ledger, rho);
    if (verify->parsed()) return cmd_verify_log(verify_ledger);
    if (sim->parsed()) return cmd_fdr_sim(fcfg, sim_out);
  } catch (const QuotaError& e) {
    std::cerr << "quota: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
