#pragma once

// Shared helpers for the test binaries: the committed fixture key, a thread
// harness for k-party runs over a LocalBus, plaintext statistic oracles, and
// scratch-directory plumbing.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "star/circuits.hpp"
#include "star/engine.hpp"

#ifndef STAR_TEST_DIR
#error "build must define STAR_TEST_DIR"
#endif

namespace star::test {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 512-bit, 3 parties, threshold 2; generated once and committed so tests skip
// the safe-prime search.
inline const PaillierKeyPair& fixture_key() {
  static PaillierKeyPair kp =
      PaillierKeyPair::from_json(read_file(std::string(STAR_TEST_DIR) + "/fixtures/key_512_3_2.json"));
  return kp;
}

struct TmpDir {
  std::string path;
  TmpDir() {
    char tpl[] = "/tmp/star-test-XXXXXX";
    if (!mkdtemp(tpl)) throw Error("mkdtemp failed");
    path = tpl;
  }
  ~TmpDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return path + "/" + name; }
};

// Runs fn(party_id, channel) on k threads over one bus. A throwing party
// aborts the bus so the others unblock; the first original (non-abort) error
// is rethrown on the caller's thread.
inline void run_parties(unsigned k, const std::function<void(unsigned, Channel&)>& fn) {
  LocalBus bus(k);
  std::vector<std::unique_ptr<Channel>> eps;
  for (unsigned p = 1; p <= k; p++) eps.push_back(bus.endpoint(p));
  std::vector<std::exception_ptr> errs(k);
  std::vector<std::thread> threads;
  for (unsigned i = 0; i < k; i++) {
    threads.emplace_back([&, i] {
      try {
        fn(i + 1, *eps[i]);
      } catch (...) {
        errs[i] = std::current_exception();
        eps[i]->abort("party " + std::to_string(i + 1) + " failed");
      }
    });
  }
  for (auto& t : threads) t.join();
  for (unsigned i = 0; i < k; i++) {  // prefer the root cause over echoes of the abort
    if (!errs[i]) continue;
    try {
      std::rethrow_exception(errs[i]);
    } catch (const ProtocolAbort&) {
      continue;
    } catch (...) {
      std::rethrow_exception(errs[i]);
    }
  }
  for (unsigned i = 0; i < k; i++)
    if (errs[i]) std::rethrow_exception(errs[i]);
}

inline void run_engines(const PaillierKeyPair& kp, uint64_t seed,
                        const std::function<void(Engine&)>& fn) {
  run_parties(kp.pk.n_parties, [&](unsigned pid, Channel& ch) {
    Engine eng(kp.pk, kp.shares[pid - 1], ch, seed + pid);
    fn(eng);
  });
}

// A public column of encrypted cells, as every party would see it.
inline std::vector<CipherWire> encrypt_column(const PaillierPublicKey& pk,
                                              const std::vector<double>& xs, unsigned phi,
                                              double bound, Rng& rng) {
  MagnitudeBudget budget{fp_encode(bound, phi).raw + 1};
  std::vector<CipherWire> out;
  out.reserve(xs.size());
  for (double x : xs) {
    FixedPoint v = fp_encode(x, phi);
    if (abs(v.raw) > budget.bound) throw ParamError("cell exceeds declared bound");
    out.push_back({encrypt(pk, to_ring(v.raw, pk.N), rng), static_cast<int>(phi), budget});
  }
  return out;
}

inline double decode_wire(const PaillierPublicKey& pk, const std::vector<PaillierKeyShare>& ks,
                          const CipherWire& w, Rng& rng) {
  mpz_class raw = from_ring(decrypt_with_shares(pk, ks, w.ct, rng), pk.N);
  return ratio_to_double(raw, 1, w.scale_exp);
}

// --- plaintext statistic oracles (double precision, straight off the data) ---

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// two-sample pooled t with equal group sizes
inline double plain_ttest(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = mean_of(x), my = mean_of(y);
  double vx = 0, vy = 0;
  for (double v : x) vx += (v - mx) * (v - mx);
  for (double v : y) vy += (v - my) * (v - my);
  vx /= n - 1;
  vy /= n - 1;
  return (mx - my) / std::sqrt((vx + vy) / n);
}

inline double plain_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, qx = 0, qy = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); i++) {
    sx += x[i];
    sy += y[i];
    qx += x[i] * x[i];
    qy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * qx - sx * sx) * (n * qy - sy * sy));
}

inline double plain_chisq(const std::vector<double>& counts, const std::vector<double>& probs,
                          unsigned n) {
  double stat = 0;
  for (size_t i = 0; i < counts.size(); i++) {
    const double e = n * probs[i];
    stat += (counts[i] - e) * (counts[i] - e) / e;
  }
  return stat;
}

// one-way F with the within-group divisor (n - k), n = rows per group
inline double plain_ftest(const std::vector<std::vector<double>>& groups) {
  const double k = static_cast<double>(groups.size());
  const double n = static_cast<double>(groups[0].size());
  std::vector<double> means;
  double grand = 0;
  for (const auto& g : groups) {
    means.push_back(mean_of(g));
    grand += means.back();
  }
  grand /= k;
  double ssb = 0, ssw = 0;
  for (size_t i = 0; i < groups.size(); i++) {
    ssb += (means[i] - grand) * (means[i] - grand);
    for (double v : groups[i]) ssw += (v - means[i]) * (v - means[i]);
  }
  ssb *= n;
  return (ssb / (k - 1)) / (ssw / (n - k));
}

}  // namespace star::test
