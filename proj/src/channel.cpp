#include "star/channel.hpp"

#include <condition_variable>
#include <mutex>

namespace star {

Bytes pack_integers(const std::vector<mpz_class>& msg) {
  Bytes out;
  for (const auto& x : msg) {
    Bytes b = mpz_to_bytes(x);
    if (b.size() > 0xffff) throw ParamError("pack_integers: value exceeds 2-byte length prefix");
    out.push_back(static_cast<uint8_t>(b.size() >> 8));
    out.push_back(static_cast<uint8_t>(b.size() & 0xff));
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

std::vector<mpz_class> unpack_integers(const uint8_t* data, size_t len) {
  std::vector<mpz_class> out;
  size_t pos = 0;
  while (pos < len) {
    if (pos + 2 > len) throw ProtocolAbort("truncated integer length prefix");
    size_t n = (static_cast<size_t>(data[pos]) << 8) | data[pos + 1];
    pos += 2;
    if (pos + n > len) throw ProtocolAbort("truncated integer payload");
    out.push_back(mpz_from_bytes(data + pos, n));
    pos += n;
  }
  return out;
}

struct LocalBus::Core {
  unsigned k;
  std::mutex m;
  std::condition_variable cv;
  uint64_t round = 0;
  unsigned filled = 0;
  unsigned drained;
  std::vector<uint8_t> tags;
  std::vector<std::vector<mpz_class>> slots;
  bool aborted = false;
  std::string abort_reason;
  int abort_party = -1;
  Bytes chain = Bytes(32, 0);

  explicit Core(unsigned n) : k(n), drained(n), tags(n, 0), slots(n) {}
};

namespace {

class BusEndpoint : public Channel {
 public:
  BusEndpoint(std::shared_ptr<LocalBus::Core> core, unsigned id) : core_(std::move(core)), id_(id) {}

  unsigned party_id() const override { return id_; }
  unsigned n_parties() const override { return core_->k; }

  std::vector<std::vector<mpz_class>> exchange(Tag tag,
                                               const std::vector<mpz_class>& msg) override {
    auto& c = *core_;
    std::unique_lock<std::mutex> lock(c.m);
    uint64_t r = next_round_++;

    c.cv.wait(lock, [&] { return c.aborted || (c.round == r && c.drained == c.k); });
    throw_if_aborted();

    c.tags[id_ - 1] = static_cast<uint8_t>(tag);
    c.slots[id_ - 1] = msg;
    c.filled++;
    if (c.filled == c.k) {
      for (unsigned i = 0; i < c.k; i++) {
        if (c.tags[i] != static_cast<uint8_t>(tag)) {
          c.aborted = true;
          c.abort_reason = "round tag mismatch (protocol desync)";
          c.cv.notify_all();
          throw ProtocolAbort(c.abort_reason);
        }
      }
      fold_transcript(c, r);
      c.drained = 0;
      c.cv.notify_all();
    } else {
      c.cv.wait(lock, [&] { return c.aborted || (c.round == r && c.filled == c.k); });
      throw_if_aborted();
    }

    auto result = c.slots;
    c.drained++;
    if (c.drained == c.k) {
      c.filled = 0;
      for (auto& s : c.slots) s.clear();
      c.round++;
      c.cv.notify_all();
    }
    return result;
  }

  void abort(const std::string& reason) override {
    auto& c = *core_;
    std::lock_guard<std::mutex> lock(c.m);
    if (!c.aborted) {
      c.aborted = true;
      c.abort_reason = reason;
      c.abort_party = static_cast<int>(id_);
    }
    c.cv.notify_all();
  }

  Bytes transcript_hash() const override {
    auto& c = *core_;
    std::lock_guard<std::mutex> lock(c.m);
    return c.chain;
  }

 private:
  void throw_if_aborted() {
    auto& c = *core_;
    if (c.aborted) throw ProtocolAbort(c.abort_reason, c.abort_party);
  }

  static void fold_transcript(LocalBus::Core& c, uint64_t round) {
    Sha256Stream h;
    h.update(c.chain);
    uint8_t rb[8];
    for (int i = 0; i < 8; i++) rb[i] = static_cast<uint8_t>(round >> (56 - 8 * i));
    h.update(rb, 8);
    for (unsigned i = 0; i < c.k; i++) {
      h.update(&c.tags[i], 1);
      Bytes payload = pack_integers(c.slots[i]);
      h.update(payload);
    }
    c.chain = h.finish();
  }

  std::shared_ptr<LocalBus::Core> core_;
  unsigned id_;
  uint64_t next_round_ = 0;
};

}  // namespace

LocalBus::LocalBus(unsigned n_parties) : core_(std::make_shared<Core>(n_parties)) {
  if (n_parties < 2) throw ParamError("LocalBus: need at least 2 parties");
}

std::unique_ptr<Channel> LocalBus::endpoint(unsigned party_id) {
  if (party_id < 1 || party_id > core_->k) throw ParamError("LocalBus: bad party id");
  return std::make_unique<BusEndpoint>(core_, party_id);
}

}  // namespace star
