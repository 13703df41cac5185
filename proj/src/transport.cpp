#include "star/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <fstream>
#include <random>
#include <thread>

namespace star {

using nlohmann::json;

static constexpr size_t kMaxFrame = 256u << 20;
static constexpr uint8_t kHelloMagic[4] = {'S', 'T', 'R', '1'};

static void write_all(int fd, const uint8_t* buf, size_t n) {
  while (n) {
    ssize_t w = ::send(fd, buf, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw ProtocolAbort(std::string("peer connection lost: ") + strerror(errno));
    }
    buf += w;
    n -= static_cast<size_t>(w);
  }
}

static void read_exact(int fd, uint8_t* buf, size_t n, int timeout_ms) {
  while (n) {
    struct pollfd pf{fd, POLLIN, 0};
    int pr = ::poll(&pf, 1, timeout_ms);
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw ProtocolAbort(std::string("poll failed: ") + strerror(errno));
    }
    if (pr == 0) throw ProtocolAbort("timed out waiting for a peer frame");
    ssize_t r = ::recv(fd, buf, n, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ProtocolAbort(std::string("peer read failed: ") + strerror(errno));
    }
    if (r == 0) throw ProtocolAbort("peer closed the connection");
    buf += r;
    n -= static_cast<size_t>(r);
  }
}

static void put_u32(Bytes& b, uint32_t v) {
  for (int i = 3; i >= 0; --i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

static uint32_t get_u32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

static int listen_on(uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error("socket() failed");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(fd);
    throw Error("cannot bind port " + std::to_string(port) + ": " + strerror(errno));
  }
  if (::listen(fd, 16) < 0) {
    ::close(fd);
    throw Error("listen() failed");
  }
  return fd;
}

static int connect_to(const std::string& host, uint16_t port, int timeout_ms) {
  struct addrinfo hints{}, *res = nullptr;
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  std::string service = std::to_string(port);
  if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || !res)
    throw ProtocolAbort("cannot resolve peer host: " + host);
  auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  int fd = -1;
  for (;;) {
    fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) break;
    if (::connect(fd, res->ai_addr, res->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
    if (std::chrono::steady_clock::now() >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw ProtocolAbort("cannot connect to " + host + ":" + service);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

// hello: magic, 2-byte sender id, 32-byte session token; both directions
static void send_hello(int fd, unsigned id, const Bytes& token) {
  Bytes b(kHelloMagic, kHelloMagic + 4);
  b.push_back(static_cast<uint8_t>(id >> 8));
  b.push_back(static_cast<uint8_t>(id & 0xff));
  b.insert(b.end(), token.begin(), token.end());
  write_all(fd, b.data(), b.size());
}

static unsigned recv_hello(int fd, const Bytes& token, int timeout_ms) {
  uint8_t buf[4 + 2 + 32];
  read_exact(fd, buf, sizeof buf, timeout_ms);
  if (memcmp(buf, kHelloMagic, 4) != 0) throw ProtocolAbort("bad mesh handshake magic");
  if (!std::equal(token.begin(), token.end(), buf + 6))
    throw ProtocolAbort("mesh session token mismatch");
  return (unsigned(buf[4]) << 8) | buf[5];
}

TcpChannel::TcpChannel(unsigned party_id, unsigned n_parties, uint16_t listen_port,
                       const std::vector<PeerAddr>& peers, const Bytes& session_token,
                       int timeout_ms)
    : id_(party_id), k_(n_parties), timeout_ms_(timeout_ms), fds_(n_parties, -1) {
  if (id_ < 1 || id_ > k_ || k_ < 2) throw ParamError("bad party id for the mesh");
  if (peers.size() != k_ - 1) throw ParamError("peer list must cover every other party");
  if (session_token.size() != 32) throw ParamError("session token must be 32 bytes");

  int lfd = -1;
  unsigned expect_accepts = k_ - id_;  // higher ids dial us
  if (expect_accepts > 0) lfd = listen_on(listen_port);

  try {
    // dial every lower id; accept every higher one. No cycles, no races.
    for (const auto& p : peers) {
      if (p.id >= id_) continue;
      if (p.id < 1 || p.id > k_) throw ParamError("peer id out of range");
      int fd = connect_to(p.host, p.port, timeout_ms_);
      send_hello(fd, id_, session_token);
      unsigned who = recv_hello(fd, session_token, timeout_ms_);
      if (who != p.id) {
        ::close(fd);
        throw ProtocolAbort("peer identified as party " + std::to_string(who) + ", expected " +
                            std::to_string(p.id));
      }
      fds_[p.id - 1] = fd;
    }
    for (unsigned got = 0; got < expect_accepts; ++got) {
      struct pollfd pf{lfd, POLLIN, 0};
      int pr = ::poll(&pf, 1, timeout_ms_);
      if (pr <= 0) throw ProtocolAbort("timed out waiting for higher-id peers to dial in");
      int fd = ::accept(lfd, nullptr, nullptr);
      if (fd < 0) throw ProtocolAbort("accept() failed");
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      unsigned who = recv_hello(fd, session_token, timeout_ms_);
      if (who <= id_ || who > k_ || fds_[who - 1] != -1) {
        ::close(fd);
        throw ProtocolAbort("unexpected mesh hello from party " + std::to_string(who));
      }
      send_hello(fd, id_, session_token);
      fds_[who - 1] = fd;
    }
  } catch (...) {
    if (lfd >= 0) ::close(lfd);
    for (int fd : fds_)
      if (fd >= 0) ::close(fd);
    throw;
  }
  if (lfd >= 0) ::close(lfd);
}

TcpChannel::~TcpChannel() {
  for (int fd : fds_)
    if (fd >= 0) ::close(fd);
}

void TcpChannel::send_frame(int fd, uint8_t tag, uint32_t round, const Bytes& payload) {
  Bytes frame;
  frame.reserve(4 + 7 + payload.size());
  put_u32(frame, static_cast<uint32_t>(1 + 4 + 2 + payload.size()));
  frame.push_back(tag);
  put_u32(frame, round);
  frame.push_back(static_cast<uint8_t>(id_ >> 8));
  frame.push_back(static_cast<uint8_t>(id_ & 0xff));
  frame.insert(frame.end(), payload.begin(), payload.end());
  write_all(fd, frame.data(), frame.size());
}

Bytes TcpChannel::recv_frame(int fd, uint8_t& tag, uint32_t& round, uint16_t& sender) {
  uint8_t head[4];
  read_exact(fd, head, 4, timeout_ms_);
  uint32_t len = get_u32(head);
  if (len < 7 || len > kMaxFrame) throw ProtocolAbort("mesh frame length out of range");
  Bytes body(len);
  read_exact(fd, body.data(), len, timeout_ms_);
  tag = body[0];
  round = get_u32(body.data() + 1);
  sender = static_cast<uint16_t>((uint16_t(body[5]) << 8) | body[6]);
  return Bytes(body.begin() + 7, body.end());
}

std::vector<std::vector<mpz_class>> TcpChannel::exchange(Tag tag,
                                                         const std::vector<mpz_class>& msg) {
  if (aborted_) throw ProtocolAbort(abort_reason_);
  if (round_ > 0xffffffffull) {
    abort("round counter exhausted");
    throw ProtocolAbort(abort_reason_);
  }
  uint32_t r = static_cast<uint32_t>(round_);
  Bytes own = pack_integers(msg);
  for (unsigned p = 1; p <= k_; ++p)
    if (p != id_) send_frame(fds_[p - 1], static_cast<uint8_t>(tag), r, own);

  std::vector<Bytes> payloads(k_);
  std::vector<std::vector<mpz_class>> result(k_);
  payloads[id_ - 1] = std::move(own);
  result[id_ - 1] = msg;
  for (unsigned p = 1; p <= k_; ++p) {
    if (p == id_) continue;
    uint8_t t = 0;
    uint32_t rr = 0;
    uint16_t snd = 0;
    Bytes pl = recv_frame(fds_[p - 1], t, rr, snd);
    if (t == static_cast<uint8_t>(Tag::kAbort)) {
      aborted_ = true;
      std::string why = "aborted by peer";
      auto xs = unpack_integers(pl.data(), pl.size());
      if (!xs.empty()) {
        Bytes rb = mpz_to_bytes(xs[0]);
        why.assign(rb.begin(), rb.end());
      }
      abort_reason_ = why;
      throw ProtocolAbort(why, static_cast<int>(snd));
    }
    if (t != static_cast<uint8_t>(tag) || rr != r || snd != p) {
      abort("mesh desync: unexpected frame header");
      throw ProtocolAbort(abort_reason_);
    }
    result[p - 1] = unpack_integers(pl.data(), pl.size());
    payloads[p - 1] = std::move(pl);
  }

  // same fold as the in-process bus, so transcripts agree across transports
  Sha256Stream h;
  h.update(chain_);
  uint8_t rb[8];
  for (int i = 0; i < 8; i++) rb[i] = static_cast<uint8_t>(round_ >> (56 - 8 * i));
  h.update(rb, 8);
  for (unsigned i = 0; i < k_; i++) {
    uint8_t tb = static_cast<uint8_t>(tag);
    h.update(&tb, 1);
    h.update(payloads[i]);
  }
  chain_ = h.finish();
  round_++;
  return result;
}

void TcpChannel::abort(const std::string& reason) {
  if (aborted_) return;
  aborted_ = true;
  abort_reason_ = reason;
  Bytes rb(reason.begin(), reason.end());
  Bytes payload = pack_integers({mpz_from_bytes(rb.data(), rb.size())});
  for (unsigned p = 1; p <= k_; ++p) {
    if (p == id_ || fds_[p - 1] < 0) continue;
    try {
      send_frame(fds_[p - 1], static_cast<uint8_t>(Tag::kAbort), static_cast<uint32_t>(round_),
                 payload);
    } catch (...) {
      // best effort: the peer will notice the closed socket instead
    }
  }
}

// --- serve mode ---

ServeConfig serve_config_from_json(const json& j, const std::string& home) {
  ServeConfig cfg;
  cfg.home = home;
  cfg.party = j.at("party").get<unsigned>();
  cfg.mesh_port = j.at("mesh_port").get<uint16_t>();
  for (const auto& pj : j.value("peers", json::array()))
    cfg.peers.push_back(PeerAddr{pj.at("id").get<unsigned>(), pj.at("host").get<std::string>(),
                                 pj.at("port").get<uint16_t>()});
  cfg.control_port = j.value("control_port", 0);
  cfg.replicate_ledger = j.value("replicate_ledger", false);
  cfg.max_tests = j.value("max_tests", -1);
  cfg.key_share_path = j.value("key_share", "");
  return cfg;
}

namespace {

struct ServeState {
  EncryptedDataset ds;
  PaillierKeyShare ks;
  Ed25519KeyPair signer;
  std::string ledger_path;
  std::string attempts_path;
  CircuitStrategy strategy = CircuitStrategy::kAggregatedProducts;
  unsigned party = 1;
  unsigned k = 0;
  bool replicate = false;
};

Bytes fixed_width(const mpz_class& x, size_t width) {
  Bytes b = mpz_to_bytes(x);
  if (b.size() > width) throw ProtocolAbort("peer sent an oversized signature");
  Bytes out(width - b.size(), 0);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::string read_line_fd(int fd, int timeout_ms, size_t cap = 1 << 20) {
  std::string line;
  char c;
  while (line.size() < cap) {
    read_exact(fd, reinterpret_cast<uint8_t*>(&c), 1, timeout_ms);
    if (c == '\n') return line;
    line += c;
  }
  throw ProtocolAbort("control request exceeds the line cap");
}

// One full test as seen by a single server. Every party checks the request,
// recomputes the budget from its own ledger view, runs the circuit, and signs
// the candidate entry; only the leader (or a replicating peer) appends.
json run_served_test(ServeState& st, TcpChannel& ch, const TestRequest& req, int64_t now) {
  const TestSpec& spec = req.spec;
  spec.validate();
  if (!ed25519_verify(req.researcher_key, spec.hash(), req.signature))
    throw ParamError("researcher signature does not verify");
  check_spec_against_dataset(st.ds.meta(), spec);

  TestLog log = TestLog::open(st.ledger_path);
  const GenesisParams& gp = log.params();
  AlphaState wealth = replay_wealth(log.entries(), gp);
  double alpha_j = next_alpha(wealth, gp.alpha);
  uint64_t rho = log.next_rho();

  bool bit_mode = gp.mode == "significance-bit";
  unsigned df1 = 0, df2 = 0;
  public_dfs(spec, st.ds.meta(), df1, df2);
  double critical =
      bit_mode ? critical_statistic(spec.kind, alpha_j, df1, df2, spec.one_sided) : 0;

  auto cols = load_test_columns(st.ds, spec);

  std::random_device rd;
  uint64_t seed = (uint64_t(rd()) << 32) ^ rd();
  Engine eng(st.ds.pk(), st.ks, ch, seed);
  TestStatisticPair pair = build_test_circuit(eng, spec, cols,
                                              static_cast<unsigned>(st.ds.meta().n_rows),
                                              st.ds.phi(), st.strategy);

  Certificate cert;
  cert.rho = rho;
  cert.test_id = to_string(spec.kind);
  cert.spec_hash = spec.hash();
  cert.researcher_key = req.researcher_key;
  cert.timestamp = rfc3339_utc(now);
  bool reject;
  if (bit_mode) {
    cert.tau = "BIT";
    cert.p = "BIT";
    reject = significance_bit(eng, pair, critical, st.ds.phi(), spec.one_sided);
  } else {
    double tau = reveal_statistic(eng, pair);
    cert.tau = format_decimal12(tau);
    cert.p = format_decimal12(p_from_test(spec.kind, tau, df1, df2, spec.one_sided));
    reject = std::strtod(cert.p.c_str(), nullptr) <= alpha_j;
  }
  cert.decision = reject ? "reject" : "accept";

  Bytes h = entry_hash_for(cert, log.last_hash(), nullptr);
  Bytes own_sig = ed25519_sign(st.signer.sk, h);
  auto sig_msgs = ch.exchange(Tag::kEntrySig, {mpz_from_bytes(own_sig.data(), own_sig.size())});

  std::vector<LogSignature> sigs;
  for (unsigned p = 1; p <= st.k; ++p) {
    if (sig_msgs[p - 1].size() != 1) throw ProtocolAbort("missing signature share");
    Bytes sig = fixed_width(sig_msgs[p - 1][0], 64);
    if (!ed25519_verify(gp.roster[p - 1].pubkey, h, sig))
      throw ProtocolAbort("party " + std::to_string(p) + " sent a bad entry signature");
    sigs.push_back(LogSignature{gp.roster[p - 1].id, std::move(sig)});
  }
  if (st.party == 1 || st.replicate) log.append(cert, sigs);

  json sigs_j = json::array();
  for (const auto& s : sigs) sigs_j.push_back({{"server", s.server}, {"sig", to_hex(s.sig)}});
  return json{{"rho", cert.rho},
              {"test_id", cert.test_id},
              {"spec_hash", to_hex(cert.spec_hash)},
              {"tau", cert.tau},
              {"p", cert.p},
              {"decision", cert.decision},
              {"researcher_key", to_hex(cert.researcher_key)},
              {"timestamp", cert.timestamp},
              {"signatures", sigs_j}};
}

}  // namespace

int serve(const ServeConfig& cfg) {
  json home_cfg;
  {
    std::ifstream in(cfg.home + "/config.json");
    if (!in) throw ParamError("cannot open " + cfg.home + "/config.json");
    home_cfg = json::parse(in);
  }

  ServeState st;
  st.ds = EncryptedDataset::open(cfg.home + "/" + home_cfg.at("dataset").get<std::string>());
  st.ledger_path = cfg.home + "/" + home_cfg.at("ledger").get<std::string>();
  st.attempts_path = cfg.home + "/" + home_cfg.at("attempts").get<std::string>();
  st.strategy = strategy_from_string(home_cfg.at("strategy").get<std::string>());
  st.party = cfg.party;
  st.replicate = cfg.replicate_ledger;
  st.k = st.ds.pk().n_parties;
  if (cfg.party < 1 || cfg.party > st.k) throw ParamError("party id outside the roster");

  std::string share_path = cfg.home + "/shares/share_" + std::to_string(cfg.party) + ".json";
  if (!cfg.key_share_path.empty()) share_path = cfg.key_share_path;
  if (const char* env = std::getenv("STAR_KEY_SHARE_PATH"); env && *env) share_path = env;
  st.ks = read_key_share_file(share_path);
  if (st.ks.party_id != cfg.party)
    throw ParamError("key share in " + share_path + " belongs to party " +
                     std::to_string(st.ks.party_id));

  {
    std::ifstream in(cfg.home + "/server_keys/server_" + std::to_string(cfg.party) + ".json");
    if (!in) throw ParamError("cannot open this server's signing key");
    json j = json::parse(in);
    st.signer.pk = from_hex(j.at("pk").get<std::string>());
    st.signer.sk = from_hex(j.at("sk").get<std::string>());
  }

  Bytes fp = st.ds.pk().fingerprint();
  Bytes token_src(fp);
  const char* label = "star-mesh";
  token_src.insert(token_src.end(), label, label + strlen(label));
  Bytes token = sha256(token_src);

  bool leader = cfg.party == 1;
  int control_fd = -1;
  if (leader) {
    if (!cfg.control_port) throw ParamError("the leader needs a control port");
    control_fd = listen_on(cfg.control_port);
  }

  int handled = 0, failures = 0;
  bool done = false;
  while (!done) {
    std::unique_ptr<TcpChannel> ch;
    try {
      ch = std::make_unique<TcpChannel>(cfg.party, st.k, cfg.mesh_port, cfg.peers, token);
    } catch (const std::exception& e) {
      if (++failures >= 3) {
        fprintf(stderr, "mesh setup failed: %s\n", e.what());
        if (control_fd >= 0) ::close(control_fd);
        return 1;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(200));
      continue;
    }
    failures = 0;

    try {
      for (;;) {
        if (leader && cfg.max_tests >= 0 && handled >= cfg.max_tests) {
          ch->set_timeout(120000);
          ch->exchange(Tag::kTestSpec, {});  // empty broadcast: orderly shutdown
          done = true;
          break;
        }
        if (leader) {
          struct pollfd pf{control_fd, POLLIN, 0};
          if (::poll(&pf, 1, -1) <= 0) continue;
          int client = ::accept(control_fd, nullptr, nullptr);
          if (client < 0) continue;
          json reply;
          bool on_bus = false;
          try {
            json reqj = json::parse(read_line_fd(client, 60000));
            TestRequest req{TestSpec::from_json(reqj.at("spec")),
                            from_hex(reqj.at("researcher_key").get<std::string>()),
                            from_hex(reqj.at("signature").get<std::string>())};
            int64_t now = time(nullptr);
            // admission gate: signature, schema, quota — before the mesh hears of it
            req.spec.validate();
            if (req.researcher_key.size() != 32) throw ParamError("researcher key must be 32 bytes");
            if (!ed25519_verify(req.researcher_key, req.spec.hash(), req.signature))
              throw ParamError("researcher signature does not verify");
            check_spec_against_dataset(st.ds.meta(), req.spec);
            if (admitted_count(st.attempts_path, req.researcher_key, utc_day(now)) >=
                st.ds.policy().daily_quota) {
              log_attempt(st.attempts_path, req.researcher_key, now, req.spec.hash(),
                          "quota-exceeded");
              throw QuotaError("daily test quota exhausted for this researcher key");
            }
            log_attempt(st.attempts_path, req.researcher_key, now, req.spec.hash(), "admitted");

            std::string canon = req.spec.canonical_json();
            Bytes sb(canon.begin(), canon.end());
            ch->set_timeout(120000);
            on_bus = true;
            ch->exchange(Tag::kTestSpec,
                         {mpz_from_bytes(sb.data(), sb.size()),
                          mpz_from_bytes(req.researcher_key.data(), req.researcher_key.size()),
                          mpz_from_bytes(req.signature.data(), req.signature.size()),
                          mpz_class(static_cast<unsigned long>(now))});
            json cert = run_served_test(st, *ch, req, now);
            log_attempt(st.attempts_path, req.researcher_key, now, req.spec.hash(), "completed",
                        "", cert.at("rho").get<uint64_t>());
            reply = json{{"ok", true}, {"certificate", cert}};
            ++handled;
          } catch (const std::exception& e) {
            reply = json{{"ok", false}, {"error", e.what()}};
            if (on_bus) {
              std::string line = reply.dump() + "\n";
              write_all(client, reinterpret_cast<const uint8_t*>(line.data()), line.size());
              ::close(client);
              throw;  // mesh state is suspect: rebuild it
            }
          }
          std::string line = reply.dump() + "\n";
          try {
            write_all(client, reinterpret_cast<const uint8_t*>(line.data()), line.size());
          } catch (...) {
          }
          ::close(client);
        } else {
          ch->set_timeout(-1);  // idle until the leader broadcasts
          auto msgs = ch->exchange(Tag::kTestSpec, {});
          ch->set_timeout(120000);
          if (msgs[0].empty()) {
            done = true;
            break;
          }
          if (msgs[0].size() != 4) throw ProtocolAbort("malformed request broadcast");
          Bytes sb = mpz_to_bytes(msgs[0][0]);
          TestRequest req{TestSpec::from_json(json::parse(std::string(sb.begin(), sb.end()))),
                          fixed_width(msgs[0][1], 32), fixed_width(msgs[0][2], 64)};
          int64_t now = static_cast<int64_t>(msgs[0][3].get_ui());
          run_served_test(st, *ch, req, now);
          ++handled;
        }
      }
    } catch (const std::exception& e) {
      // a failed request poisons the round state; reconnect and keep serving
      fprintf(stderr, "mesh request failed (%s); rebuilding connections\n", e.what());
      ch.reset();
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  }
  if (control_fd >= 0) ::close(control_fd);
  return 0;
}

json remote_test(const std::string& host, uint16_t port, const TestSpec& spec,
                 const Ed25519KeyPair& researcher, int timeout_ms) {
  spec.validate();
  Bytes sig = ed25519_sign(researcher.sk, spec.hash());
  json req{{"spec", spec.to_json()},
           {"researcher_key", to_hex(researcher.pk)},
           {"signature", to_hex(sig)}};
  int fd = connect_to(host, port, std::min(timeout_ms, 30000));
  try {
    std::string line = req.dump() + "\n";
    write_all(fd, reinterpret_cast<const uint8_t*>(line.data()), line.size());
    std::string resp = read_line_fd(fd, timeout_ms);
    ::close(fd);
    return json::parse(resp);
  } catch (...) {
    ::close(fd);
    throw;
  }
}

}  // namespace star
