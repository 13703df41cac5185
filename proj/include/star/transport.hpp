#pragma once

#include "star/orchestrator.hpp"

namespace star {

struct PeerAddr {
  unsigned id = 0;
  std::string host;
  uint16_t port = 0;
};

// Channel over TCP with the frame layout: 4-byte big-endian frame length,
// 1-byte tag, 4-byte round number, 2-byte sender id, then the integers of the
// message, each big-endian with a 2-byte length prefix. Parties stay in
// lockstep: one frame per peer per round, and the transcript chain folds the
// same bytes as the in-process bus, so both transports certify identically.
class TcpChannel final : public Channel {
 public:
  // Binds listen_port, connects to every peer with a lower id, accepts the
  // rest. All parties must present the same session token (derived from the
  // public key) during the handshake.
  TcpChannel(unsigned party_id, unsigned n_parties, uint16_t listen_port,
             const std::vector<PeerAddr>& peers, const Bytes& session_token,
             int timeout_ms = 120000);
  ~TcpChannel() override;

  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  unsigned party_id() const override { return id_; }
  unsigned n_parties() const override { return k_; }
  std::vector<std::vector<mpz_class>> exchange(Tag tag,
                                               const std::vector<mpz_class>& msg) override;
  void abort(const std::string& reason) override;
  Bytes transcript_hash() const override { return chain_; }

  // <0 waits forever; serve uses that while idle between requests.
  void set_timeout(int ms) { timeout_ms_ = ms; }

 private:
  void send_frame(int fd, uint8_t tag, uint32_t round, const Bytes& payload);
  Bytes recv_frame(int fd, uint8_t& tag, uint32_t& round, uint16_t& sender);

  unsigned id_ = 0, k_ = 0;
  int timeout_ms_ = 120000;
  std::vector<int> fds_;  // index party-1; own entry -1
  uint64_t round_ = 0;
  bool aborted_ = false;
  std::string abort_reason_;
  Bytes chain_ = Bytes(32, 0);
};

// One computing server: joins the mesh, answers the leader's broadcasts, and
// (as party 1) accepts researcher requests on the control port as one JSON
// line per connection, answering with the certificate or an error.
struct ServeConfig {
  std::string home;
  unsigned party = 1;
  uint16_t mesh_port = 0;
  std::vector<PeerAddr> peers;
  uint16_t control_port = 0;  // leader only
  bool replicate_ledger = false;
  int max_tests = -1;  // stop after this many mesh requests; <0 runs until killed
  std::string key_share_path;  // defaults to the home layout; env overrides
};

ServeConfig serve_config_from_json(const nlohmann::json& j, const std::string& home);

int serve(const ServeConfig& cfg);

// Researcher side: submit the signed spec to a leader and wait for the reply.
nlohmann::json remote_test(const std::string& host, uint16_t port, const TestSpec& spec,
                           const Ed25519KeyPair& researcher, int timeout_ms = 600000);

}  // namespace star
