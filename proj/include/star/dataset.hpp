#pragma once

#include "star/engine.hpp"

#include "vendor/json.hpp"

namespace star {

struct AttributeInfo {
  std::string name;
  bool categorical = false;
  double bound = 2147483648.0;           // |value| cap for continuous columns
  std::vector<std::string> categories;   // categorical: discovered if empty
};

struct RevealPolicy {
  std::string mode = "full-statistic";  // or "significance-bit"
  unsigned daily_quota = 10;

  void validate() const;
  nlohmann::json to_json() const;
  static RevealPolicy from_json(const nlohmann::json& j);
};

// The published description of the holdout: everything here is public and
// nothing in it depends on cell values beyond the declared fields.
struct DatasetMetadata {
  size_t n_rows = 0;  // rows in the encrypted validation split
  std::vector<AttributeInfo> attrs;
  std::vector<std::vector<std::string>> independence;  // declared independent sets
  size_t exploration_rows = 0;
  size_t validation_rows = 0;

  void validate() const;
  const AttributeInfo* find(const std::string& name) const;
  nlohmann::json to_json() const;
  static DatasetMetadata from_json(const nlohmann::json& j);
};

// Owner-side view of the CSV: original tokens kept so the exploration split
// can be written back without floating-point churn.
struct PlainColumn {
  AttributeInfo info;
  std::vector<double> values;    // continuous
  std::vector<unsigned> cats;    // categorical: index into info.categories
  std::vector<std::string> raw;  // original cell text
};

struct PlainDataset {
  std::vector<PlainColumn> cols;
  size_t n_rows = 0;
};

// Parses a comma-separated file with a header row against the declared
// attributes (any column order). Errors name the row/column: schema mismatch,
// non-finite cell, out-of-domain value, unknown category.
PlainDataset read_csv(const std::string& path, const DatasetMetadata& meta);

void write_csv(const std::string& path, const PlainDataset& data,
               const std::vector<size_t>& rows);

// On-disk encrypted dataset: directory with header.json plus one ciphertext
// file per continuous column (<name>.ct, hex, one per line) and one per
// category for categorical columns (<name>.<j>.ct, one-hot cells).
class EncryptedDataset {
 public:
  static EncryptedDataset create(const std::string& dir, const PlainDataset& plain,
                                 const std::vector<size_t>& rows, const PaillierPublicKey& pk,
                                 unsigned phi, const RevealPolicy& policy,
                                 const std::vector<std::vector<std::string>>& independence,
                                 size_t exploration_rows, Rng& rng);
  static EncryptedDataset open(const std::string& dir);

  const DatasetMetadata& meta() const { return meta_; }
  const PaillierPublicKey& pk() const { return pk_; }
  unsigned phi() const { return phi_; }
  const RevealPolicy& policy() const { return policy_; }
  const std::string& dir() const { return dir_; }

  // CipherWires carry scale phi and the column's magnitude budget.
  std::vector<CipherWire> load_column(const std::string& name) const;
  // one vector of indicator wires per category, scale 0
  std::vector<std::vector<CipherWire>> load_onehot(const std::string& name) const;

 private:
  std::string dir_;
  DatasetMetadata meta_;
  PaillierPublicKey pk_;
  unsigned phi_ = 40;
  RevealPolicy policy_;
};

}  // namespace star
