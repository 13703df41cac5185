#pragma once

#include <memory>

#include "star/common.hpp"

namespace star {

enum class Tag : uint8_t {
  kMask = 1,      // E(r_i) masks for ciphertext-to-share conversion
  kDecShare = 2,  // decryption shares + proofs
  kProd = 3,      // cmult(E(x), share) contributions
  kTripleA = 4,   // E(a_i) for triple generation
  kTripleB = 5,   // cmult(E(a), b_i) for triple generation
  kOpen = 6,      // Beaver openings
  kReveal = 7,    // share broadcasts for reveal
  kTestSpec = 8,  // leader broadcasts an admitted request (serve mode)
  kEntrySig = 9,  // signature shares over a candidate log entry hash
  kAbort = 0xFF,
};

// One party's endpoint onto a round-based broadcast network. Every round all k
// parties call exchange with the same tag; the call returns every party's
// message for that round (index i-1 = party i, own message included).
class Channel {
 public:
  virtual ~Channel() = default;
  virtual unsigned party_id() const = 0;   // 1-based
  virtual unsigned n_parties() const = 0;
  virtual std::vector<std::vector<mpz_class>> exchange(Tag tag,
                                                       const std::vector<mpz_class>& msg) = 0;
  // Wake all peers with a failure; their pending/next exchange throws ProtocolAbort.
  virtual void abort(const std::string& reason) = 0;
  // Running SHA-256 over every completed round (round number, per-party tag + payload).
  virtual Bytes transcript_hash() const = 0;
};

// Deterministic in-process bus for k co-located party threads.
class LocalBus {
 public:
  explicit LocalBus(unsigned n_parties);
  std::unique_ptr<Channel> endpoint(unsigned party_id);

  struct Core;  // shared barrier state, defined with the endpoints

 private:
  std::shared_ptr<Core> core_;
};

// Serialization shared by transcripts and the TCP transport: big-endian
// magnitude with a 2-byte big-endian length prefix per integer.
Bytes pack_integers(const std::vector<mpz_class>& msg);
std::vector<mpz_class> unpack_integers(const uint8_t* data, size_t len);

}  // namespace star
