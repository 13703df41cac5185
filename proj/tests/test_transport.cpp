#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "vendor/doctest.h"

#include <latch>
#include <map>
#include <thread>

#include "star/transport.hpp"
#include "support.hpp"

using namespace star;
using star::test::decode_wire;
using star::test::encrypt_column;
using star::test::fixture_key;
using star::test::plain_pearson;
using star::test::plain_ttest;
using star::test::read_file;
using star::test::run_parties;
using star::test::TmpDir;

namespace {

std::vector<PeerAddr> peers_for(unsigned id, unsigned k, uint16_t base) {
  std::vector<PeerAddr> ps;
  for (unsigned p = 1; p <= k; p++)
    if (p != id) ps.push_back({p, "127.0.0.1", static_cast<uint16_t>(base + p)});
  return ps;
}

// Spawns one thread per party, each with its own TcpChannel; returns what each
// party threw (empty exception_ptr = clean exit).
template <class F>
std::vector<std::exception_ptr> run_mesh(unsigned k, uint16_t base, const Bytes& token, F fn,
                                         int timeout_ms = 20000) {
  std::vector<std::exception_ptr> errs(k);
  std::vector<std::thread> ts;
  for (unsigned id = 1; id <= k; id++)
    ts.emplace_back([&, id] {
      try {
        TcpChannel ch(id, k, static_cast<uint16_t>(base + id), peers_for(id, k, base), token,
                      timeout_ms);
        fn(id, ch);
      } catch (...) {
        errs[id - 1] = std::current_exception();
      }
    });
  for (auto& t : ts) t.join();
  return errs;
}

std::string what_of(std::exception_ptr ep) {
  if (!ep) return "";
  try {
    std::rethrow_exception(ep);
  } catch (const std::exception& e) {
    return e.what();
  }
}

// The round script both transports replay in the parity test.
std::vector<mpz_class> scripted(unsigned id, int round) {
  if (round == 0) return {mpz_class(id) * 1000 + 1, mpz_class(id)};
  if (round == 1) {  // one party stays silent that round
    if (id == 2) return {};
    return {mpz_class(7), mpz_class(0)};
  }
  return {(mpz_class(1) << 500) + 97 * id};
}

constexpr Tag kScriptTags[3] = {Tag::kReveal, Tag::kTestSpec, Tag::kOpen};

}  // namespace

TEST_CASE("integers survive the wire encoding, truncation does not") {
  std::vector<mpz_class> msg = {0, 1, 255, 256, 65535, mpz_class(1) << 64,
                                (mpz_class(1) << 512) - 19};
  Bytes b = pack_integers(msg);
  CHECK(unpack_integers(b.data(), b.size()) == msg);
  CHECK(pack_integers({}).empty());
  CHECK(unpack_integers(b.data(), 0).empty());

  // the 2-byte length prefix caps one integer at 65535 bytes
  mpz_class widest = (mpz_class(1) << (8 * 65535)) - 1;
  Bytes wb = pack_integers({widest});
  CHECK(unpack_integers(wb.data(), wb.size()) == std::vector<mpz_class>{widest});
  CHECK_THROWS_AS(pack_integers({widest + 1}), ParamError);

  Bytes one = pack_integers({mpz_class(123456789)});
  CHECK_THROWS_WITH_AS(unpack_integers(one.data(), one.size() - 1),
                       "truncated integer payload", ProtocolAbort);
  uint8_t half[1] = {0};
  CHECK_THROWS_WITH_AS(unpack_integers(half, 1), "truncated integer length prefix",
                       ProtocolAbort);
}

TEST_CASE("the tcp mesh delivers the same rounds and transcript as the in-process bus") {
  const unsigned k = 3;
  using Rounds = std::vector<std::vector<std::vector<mpz_class>>>;

  auto drive = [&](unsigned id, Channel& ch, Rounds& rounds, Bytes& transcript) {
    for (int r = 0; r < 3; r++) rounds.push_back(ch.exchange(kScriptTags[r], scripted(id, r)));
    transcript = ch.transcript_hash();
  };

  std::vector<Rounds> local_rounds(k), tcp_rounds(k);
  std::vector<Bytes> local_tx(k), tcp_tx(k);
  run_parties(k, [&](unsigned id, Channel& ch) {
    drive(id, ch, local_rounds[id - 1], local_tx[id - 1]);
  });
  auto errs = run_mesh(k, 24601, Bytes(32, 0xAA), [&](unsigned id, TcpChannel& ch) {
    drive(id, ch, tcp_rounds[id - 1], tcp_tx[id - 1]);
  });
  for (unsigned i = 0; i < k; i++) CHECK(what_of(errs[i]) == "");

  // every party sees every message, identically on both transports
  for (unsigned i = 0; i < k; i++) {
    REQUIRE(tcp_rounds[i].size() == 3);
    CHECK(tcp_rounds[i] == local_rounds[i]);
    CHECK(tcp_rounds[i] == tcp_rounds[0]);
    for (int r = 0; r < 3; r++)
      for (unsigned p = 1; p <= k; p++) CHECK(tcp_rounds[i][r][p - 1] == scripted(p, r));
  }
  CHECK(tcp_tx[0] == tcp_tx[1]);
  CHECK(tcp_tx[0] == tcp_tx[2]);
  CHECK(tcp_tx[0] == local_tx[0]);  // byte-identical chain across transports
}

TEST_CASE("an engine certifies identically over tcp and the local bus") {
  const PaillierKeyPair& kp = fixture_key();
  const unsigned k = kp.pk.n_parties;
  const unsigned phi = 40;
  Rng data_rng(31337);
  auto cx = encrypt_column(kp.pk, {3, -1, 4, 1, -5}, phi, 1000, data_rng);
  auto cy = encrypt_column(kp.pk, {2, 2, -5, 0, 3}, phi, 1000, data_rng);

  auto compute = [&](Engine& eng, std::vector<double>& out, Bytes& transcript) {
    auto xs = eng.ct_to_shares(cx);
    auto ys = eng.ct_to_shares(cy);
    auto prod = eng.mul(xs, ys);
    auto raws = eng.reveal(prod);
    for (size_t i = 0; i < raws.size(); i++)
      out.push_back(ratio_to_double(raws[i], 1, prod[i].scale_exp));
    transcript = eng.channel().transcript_hash();
  };

  std::vector<std::vector<double>> local_out(k), tcp_out(k);
  std::vector<Bytes> local_tx(k), tcp_tx(k);
  run_parties(k, [&](unsigned id, Channel& ch) {
    Engine eng(kp.pk, kp.shares[id - 1], ch, 4242 + id);
    compute(eng, local_out[id - 1], local_tx[id - 1]);
  });
  auto errs = run_mesh(k, 24611, Bytes(32, 0xAB), [&](unsigned id, TcpChannel& ch) {
    Engine eng(kp.pk, kp.shares[id - 1], ch, 4242 + id);
    compute(eng, tcp_out[id - 1], tcp_tx[id - 1]);
  });
  for (unsigned i = 0; i < k; i++) CHECK(what_of(errs[i]) == "");

  const std::vector<double> expect = {6, -2, -20, 0, -15};
  for (unsigned i = 0; i < k; i++) {
    CHECK(tcp_out[i] == expect);
    CHECK(local_out[i] == expect);
    CHECK(tcp_tx[i] == local_tx[i]);  // same seeds, same bytes, same chain
  }
}

TEST_CASE("an abort names the aborting party at every peer") {
  const unsigned k = 3;
  std::latch survivors_done(2);
  std::vector<int> abort_party(k, -99);
  std::vector<std::string> abort_why(k);

  auto errs = run_mesh(k, 24621, Bytes(32, 0xAC), [&](unsigned id, TcpChannel& ch) {
    ch.exchange(Tag::kReveal, {mpz_class(id)});
    if (id == 2) {
      ch.abort("synthetic fault at party 2");
      try {
        ch.exchange(Tag::kReveal, {mpz_class(9)});
      } catch (const ProtocolAbort& e) {
        abort_party[id - 1] = e.party_id;
        abort_why[id - 1] = e.what();
      }
      survivors_done.wait();  // keep the sockets alive until the peers saw the abort
      return;
    }
    try {
      ch.exchange(Tag::kReveal, {mpz_class(id)});
    } catch (const ProtocolAbort& e) {
      abort_party[id - 1] = e.party_id;
      abort_why[id - 1] = e.what();
    }
    survivors_done.count_down();
  });
  for (unsigned i = 0; i < k; i++) CHECK(what_of(errs[i]) == "");

  CHECK(abort_party[0] == 2);
  CHECK(abort_party[2] == 2);
  CHECK(abort_why[0] == "synthetic fault at party 2");
  CHECK(abort_why[2] == "synthetic fault at party 2");
  // the aborting party replays its own reason locally
  CHECK(abort_why[1] == "synthetic fault at party 2");
}

TEST_CASE("a tag mismatch desynchronizes the round and everyone stops") {
  const unsigned k = 3;
  std::vector<std::string> whys(k);
  auto errs = run_mesh(
      k, 24631, Bytes(32, 0xAD),
      [&](unsigned id, TcpChannel& ch) {
        ch.exchange(id == 1 ? Tag::kOpen : Tag::kReveal, {mpz_class(id)});
      },
      8000);
  unsigned aborted = 0, desynced = 0;
  for (unsigned i = 0; i < k; i++) {
    whys[i] = what_of(errs[i]);
    if (!whys[i].empty()) aborted++;
    if (whys[i].find("mesh desync") != std::string::npos) desynced++;
  }
  CHECK(aborted == 3);
  CHECK(desynced >= 2);  // both honest parties see the bad header directly
}

TEST_CASE("a wrong session token never joins the mesh") {
  const unsigned k = 3;
  const uint16_t base = 24641;
  std::vector<std::exception_ptr> errs(k);
  std::vector<std::thread> ts;
  for (unsigned id = 1; id <= k; id++)
    ts.emplace_back([&, id] {
      Bytes token(32, id == 3 ? 0xEE : 0xAE);
      try {
        TcpChannel ch(id, k, static_cast<uint16_t>(base + id), peers_for(id, k, base), token,
                      6000);
        ch.exchange(Tag::kReveal, {mpz_class(id)});
      } catch (...) {
        errs[id - 1] = std::current_exception();
      }
    });
  for (auto& t : ts) t.join();

  for (unsigned i = 0; i < k; i++) CHECK(errs[i]);
  CHECK(what_of(errs[0]).find("mesh session token mismatch") != std::string::npos);
}

TEST_CASE("a silent peer times out instead of hanging the mesh") {
  const uint16_t base = 24651;
  std::latch timed_out(1);
  std::string why;
  std::vector<std::thread> ts;
  ts.emplace_back([&] {
    TcpChannel ch(1, 2, base + 1, peers_for(1, 2, base), Bytes(32, 0xAF), 1500);
    try {
      ch.exchange(Tag::kReveal, {mpz_class(1)});
    } catch (const ProtocolAbort& e) {
      why = e.what();
    }
    timed_out.count_down();
  });
  ts.emplace_back([&] {
    TcpChannel ch(2, 2, base + 2, peers_for(2, 2, base), Bytes(32, 0xAF), 6000);
    timed_out.wait();  // never sends a frame while party 1 waits
  });
  for (auto& t : ts) t.join();
  CHECK(why == "timed out waiting for a peer frame");
}

TEST_CASE("served deployments answer signed requests over the control port") {
  TmpDir dir;
  {
    std::ofstream csv(dir.file("data.csv"));
    csv << "x,y\n5,7\n12,9\n9,15\n20,4\n7,12\n14,10\n3,8\n18,13\n11,6\n6,17\n16,5\n8,11\n";
    std::ofstream meta(dir.file("meta.json"));
    meta << R"({"attributes":[{"name":"x","kind":"continuous","bound":1000.0},)"
         << R"({"name":"y","kind":"continuous","bound":1000.0}]})";
  }
  SetupConfig cfg;
  cfg.csv_path = dir.file("data.csv");
  cfg.metadata_path = dir.file("meta.json");
  cfg.out_dir = dir.file("home");
  cfg.paillier.modulus_bits = 512;
  cfg.alpha = AlphaParams{0.05, 0.25, 0.0125};
  cfg.policy.daily_quota = 10;
  cfg.split = 0.5;
  cfg.seed = 808;
  cfg.now_unix = 1771200000;
  SetupResult made = owner_setup(cfg);

  const uint16_t base = 24661, control = 24669;
  std::vector<std::thread> servers;
  std::vector<int> rcs(3, -1);
  for (unsigned party = 1; party <= 3; party++)
    servers.emplace_back([&, party] {
      ServeConfig sc;
      sc.home = made.home;
      sc.party = party;
      sc.mesh_port = static_cast<uint16_t>(base + party);
      sc.peers = peers_for(party, 3, base);
      sc.control_port = party == 1 ? control : 0;
      sc.max_tests = party == 1 ? 2 : -1;
      rcs[party - 1] = serve(sc);
    });

  auto rj = nlohmann::json::parse(read_file(made.researcher_key_path));
  Ed25519KeyPair researcher{from_hex(rj.at("pk").get<std::string>()),
                            from_hex(rj.at("sk").get<std::string>())};

  TestSpec tt;
  tt.kind = TestKind::kTTest;
  tt.columns = {"x", "y"};
  nlohmann::json r1 = remote_test("127.0.0.1", control, tt, researcher);
  REQUIRE(r1.at("ok").get<bool>());
  auto c1 = r1.at("certificate");
  CHECK(c1.at("rho").get<uint64_t>() == 1);
  CHECK(c1.at("test_id").get<std::string>() == "TTEST");
  CHECK(c1.at("spec_hash").get<std::string>() == to_hex(tt.hash()));
  CHECK(c1.at("signatures").size() == 3);

  // a rejected request leaves the mesh intact and costs nothing
  TestSpec ghost = tt;
  ghost.columns = {"x", "ghost"};
  nlohmann::json bad = remote_test("127.0.0.1", control, ghost, researcher);
  CHECK_FALSE(bad.at("ok").get<bool>());
  CHECK(bad.at("error").get<std::string>().find("unknown column") != std::string::npos);

  TestSpec pr;
  pr.kind = TestKind::kPearson;
  pr.columns = {"x", "y"};
  nlohmann::json r2 = remote_test("127.0.0.1", control, pr, researcher);
  REQUIRE(r2.at("ok").get<bool>());
  CHECK(r2.at("certificate").at("rho").get<uint64_t>() == 2);

  for (auto& t : servers) t.join();
  CHECK(rcs == std::vector<int>{0, 0, 0});

  // the statistics match the decrypted validation split
  Deployment dep = open_deployment(made.home);
  Rng rng(909);
  std::vector<double> xs, ys;
  for (const auto& w : dep.dataset.load_column("x"))
    xs.push_back(decode_wire(dep.dataset.pk(), dep.shares, w, rng));
  for (const auto& w : dep.dataset.load_column("y"))
    ys.push_back(decode_wire(dep.dataset.pk(), dep.shares, w, rng));
  double t1 = std::strtod(c1.at("tau").get<std::string>().c_str(), nullptr);
  CHECK(t1 == doctest::Approx(plain_ttest(xs, ys)).epsilon(1e-9));
  double t2 = std::strtod(r2.at("certificate").at("tau").get<std::string>().c_str(), nullptr);
  CHECK(t2 == doctest::Approx(plain_pearson(xs, ys)).epsilon(1e-9));

  CHECK(verify_log(made.ledger_path).ok);
  auto entries = read_log(made.ledger_path);
  REQUIRE(entries.size() == 3);
  CHECK(perform_audit(entries, 1).valid);
  CHECK(perform_audit(entries, 2).valid);

  std::map<std::string, int> events;
  {
    std::ifstream in(dep.attempts_path);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) events[nlohmann::json::parse(line).value("event", "?")]++;
  }
  CHECK(events["admitted"] == 2);
  CHECK(events["completed"] == 2);
}
