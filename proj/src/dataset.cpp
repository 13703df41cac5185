#include "star/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace star {

using nlohmann::json;

void RevealPolicy::validate() const {
  if (mode != "full-statistic" && mode != "significance-bit")
    throw ParamError("unknown reveal mode: " + mode);
  if (daily_quota == 0) throw ParamError("daily quota must be positive");
}

json RevealPolicy::to_json() const {
  return json{{"mode", mode}, {"daily_quota", daily_quota}};
}

RevealPolicy RevealPolicy::from_json(const json& j) {
  RevealPolicy p;
  p.mode = j.at("mode").get<std::string>();
  p.daily_quota = j.at("daily_quota").get<unsigned>();
  p.validate();
  return p;
}

static bool valid_column_name(const std::string& s) {
  if (s.empty() || s.size() > 128) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

void DatasetMetadata::validate() const {
  if (attrs.empty()) throw ParamError("dataset has no attributes");
  std::set<std::string> seen;
  for (const auto& a : attrs) {
    if (!valid_column_name(a.name))
      throw ParamError("column name must be [A-Za-z0-9_]+: '" + a.name + "'");
    if (!seen.insert(a.name).second) throw ParamError("duplicate column: " + a.name);
    if (a.categorical) {
      // empty means the labels are discovered from the data on read
      if (!a.categories.empty() && a.categories.size() < 2)
        throw ParamError("categorical column needs at least 2 categories: " + a.name);
      std::set<std::string> cs;
      for (const auto& c : a.categories) {
        if (c.empty() || c.find_first_of(",\"\n\r") != std::string::npos)
          throw ParamError("bad category label in column " + a.name);
        if (!cs.insert(c).second) throw ParamError("duplicate category in column " + a.name);
      }
    } else {
      if (!(a.bound > 0) || !std::isfinite(a.bound))
        throw ParamError("domain bound must be positive and finite: " + a.name);
    }
  }
  for (const auto& group : independence)
    for (const auto& name : group)
      if (!find(name)) throw ParamError("independence set names unknown column: " + name);
}

const AttributeInfo* DatasetMetadata::find(const std::string& name) const {
  for (const auto& a : attrs)
    if (a.name == name) return &a;
  return nullptr;
}

json DatasetMetadata::to_json() const {
  json attrs_j = json::array();
  for (const auto& a : attrs) {
    json aj{{"name", a.name}, {"kind", a.categorical ? "categorical" : "continuous"}};
    if (a.categorical)
      aj["categories"] = a.categories;
    else
      aj["bound"] = a.bound;
    attrs_j.push_back(std::move(aj));
  }
  return json{{"n_rows", n_rows},
              {"attributes", std::move(attrs_j)},
              {"independence", independence},
              {"exploration_rows", exploration_rows},
              {"validation_rows", validation_rows}};
}

DatasetMetadata DatasetMetadata::from_json(const json& j) {
  DatasetMetadata m;
  m.n_rows = j.value("n_rows", size_t{0});
  m.exploration_rows = j.value("exploration_rows", size_t{0});
  m.validation_rows = j.value("validation_rows", size_t{0});
  for (const auto& aj : j.at("attributes")) {
    AttributeInfo a;
    a.name = aj.at("name").get<std::string>();
    std::string kind = aj.at("kind").get<std::string>();
    if (kind == "categorical") {
      a.categorical = true;
      if (aj.contains("categories")) a.categories = aj["categories"].get<std::vector<std::string>>();
    } else if (kind == "continuous") {
      a.categorical = false;
      if (aj.contains("bound")) a.bound = aj["bound"].get<double>();
    } else {
      throw ParamError("unknown attribute kind: " + kind);
    }
    m.attrs.push_back(std::move(a));
  }
  if (j.contains("independence"))
    m.independence = j["independence"].get<std::vector<std::vector<std::string>>>();
  return m;
}

static std::vector<std::string> split_csv_line(const std::string& line, size_t lineno) {
  if (line.find('"') != std::string::npos)
    throw ParamError("quoted csv fields are not supported (line " + std::to_string(lineno) + ")");
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

PlainDataset read_csv(const std::string& path, const DatasetMetadata& meta) {
  meta.validate();
  std::ifstream in(path);
  if (!in) throw ParamError("cannot open csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParamError("csv is empty: " + path);
  auto header = split_csv_line(line, 1);

  // schema check: csv columns and declared attributes must match as sets
  std::set<std::string> csv_names(header.begin(), header.end());
  if (csv_names.size() != header.size()) throw ParamError("schema mismatch: duplicate csv column");
  std::set<std::string> meta_names;
  for (const auto& a : meta.attrs) meta_names.insert(a.name);
  if (csv_names != meta_names) {
    std::string why = "schema mismatch: csv columns do not match declared attributes (";
    for (const auto& n : header)
      if (!meta_names.count(n)) why += "undeclared '" + n + "' ";
    for (const auto& n : meta_names)
      if (!csv_names.count(n)) why += "missing '" + n + "' ";
    throw ParamError(why + ")");
  }

  PlainDataset data;
  data.cols.reserve(header.size());
  for (const auto& name : header) data.cols.push_back(PlainColumn{*meta.find(name), {}, {}, {}});

  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() && in.peek() == EOF) break;  // trailing newline
    auto cells = split_csv_line(line, lineno);
    if (cells.size() != header.size())
      throw ParamError("csv row " + std::to_string(lineno) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    for (size_t c = 0; c < cells.size(); ++c) data.cols[c].raw.push_back(cells[c]);
    ++data.n_rows;
  }
  if (data.n_rows == 0) throw ParamError("csv has no data rows: " + path);

  for (auto& col : data.cols) {
    if (col.info.categorical) {
      if (col.info.categories.empty()) {  // discover labels from the data
        std::set<std::string> labels(col.raw.begin(), col.raw.end());
        col.info.categories.assign(labels.begin(), labels.end());
        if (col.info.categories.size() < 2)
          throw ParamError("categorical column has fewer than 2 labels: " + col.info.name);
      }
      col.cats.reserve(data.n_rows);
      for (size_t r = 0; r < data.n_rows; ++r) {
        auto it = std::find(col.info.categories.begin(), col.info.categories.end(), col.raw[r]);
        if (it == col.info.categories.end())
          throw ParamError("unknown category '" + col.raw[r] + "' in column " + col.info.name +
                           " at csv row " + std::to_string(r + 2));
        col.cats.push_back(static_cast<unsigned>(it - col.info.categories.begin()));
      }
    } else {
      col.values.reserve(data.n_rows);
      for (size_t r = 0; r < data.n_rows; ++r) {
        const std::string& cell = col.raw[r];
        char* end = nullptr;
        double v = std::strtod(cell.c_str(), &end);
        if (cell.empty() || end != cell.c_str() + cell.size())
          throw ParamError("cell is not numeric in column " + col.info.name + " at csv row " +
                           std::to_string(r + 2) + ": '" + cell + "'");
        if (!std::isfinite(v))
          throw ParamError("non-finite cell in column " + col.info.name + " at csv row " +
                           std::to_string(r + 2));
        if (std::fabs(v) > col.info.bound)
          throw ParamError("out-of-domain value in column " + col.info.name + " at csv row " +
                           std::to_string(r + 2) + ": " + cell);
        col.values.push_back(v);
      }
    }
  }
  return data;
}

void write_csv(const std::string& path, const PlainDataset& data,
               const std::vector<size_t>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParamError("cannot write csv: " + path);
  for (size_t c = 0; c < data.cols.size(); ++c) out << (c ? "," : "") << data.cols[c].info.name;
  out << "\n";
  for (size_t r : rows) {
    for (size_t c = 0; c < data.cols.size(); ++c) out << (c ? "," : "") << data.cols[c].raw[r];
    out << "\n";
  }
  if (!out.flush()) throw ParamError("short write: " + path);
}

static void write_ct_file(const std::string& path, const std::vector<mpz_class>& cts) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParamError("cannot write ciphertext file: " + path);
  for (const auto& ct : cts) out << to_hex(mpz_to_bytes(ct)) << "\n";
  if (!out.flush()) throw ParamError("short write: " + path);
}

static std::vector<mpz_class> read_ct_file(const std::string& path, size_t n_rows,
                                           const mpz_class& n2) {
  std::ifstream in(path);
  if (!in) throw ParamError("cannot open ciphertext file: " + path);
  std::vector<mpz_class> out;
  out.reserve(n_rows);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    mpz_class ct = mpz_from_bytes(from_hex(line));
    if (ct < 0 || ct >= n2) throw ParamError("ciphertext out of range in " + path);
    out.push_back(std::move(ct));
  }
  if (out.size() != n_rows)
    throw ParamError("ciphertext file " + path + " has " + std::to_string(out.size()) +
                     " rows, expected " + std::to_string(n_rows));
  return out;
}

EncryptedDataset EncryptedDataset::create(const std::string& dir, const PlainDataset& plain,
                                          const std::vector<size_t>& rows,
                                          const PaillierPublicKey& pk, unsigned phi,
                                          const RevealPolicy& policy,
                                          const std::vector<std::vector<std::string>>& independence,
                                          size_t exploration_rows, Rng& rng) {
  if (rows.size() < 2) throw ParamError("validation split needs at least 2 rows");
  policy.validate();
  std::filesystem::create_directories(dir);

  EncryptedDataset ds;
  ds.dir_ = dir;
  ds.pk_ = pk;
  ds.phi_ = phi;
  ds.policy_ = policy;
  ds.meta_.n_rows = rows.size();
  ds.meta_.independence = independence;
  ds.meta_.exploration_rows = exploration_rows;
  ds.meta_.validation_rows = rows.size();

  for (const auto& col : plain.cols) {
    ds.meta_.attrs.push_back(col.info);
    if (col.info.categorical) {
      for (size_t j = 0; j < col.info.categories.size(); ++j) {
        std::vector<mpz_class> cts;
        cts.reserve(rows.size());
        for (size_t r : rows) {
          mpz_class m = (col.cats[r] == j) ? 1 : 0;
          cts.push_back(encrypt(pk, m, rng).c);
        }
        write_ct_file(dir + "/" + col.info.name + "." + std::to_string(j) + ".ct", cts);
      }
    } else {
      std::vector<mpz_class> cts;
      cts.reserve(rows.size());
      for (size_t r : rows) {
        FixedPoint fp = fp_encode(col.values[r], phi);
        cts.push_back(encrypt(pk, to_ring(fp.raw, pk.N), rng).c);
      }
      write_ct_file(dir + "/" + col.info.name + ".ct", cts);
    }
  }
  ds.meta_.validate();

  json header{{"kind", "star-encrypted-dataset"},
              {"version", 1},
              {"phi", phi},
              {"public_key", json::parse(pk.to_json())},
              {"policy", policy.to_json()},
              {"metadata", ds.meta_.to_json()}};
  std::ofstream out(dir + "/header.json", std::ios::trunc);
  if (!out) throw ParamError("cannot write dataset header");
  out << header.dump(2) << "\n";
  if (!out.flush()) throw ParamError("short write: dataset header");
  return ds;
}

EncryptedDataset EncryptedDataset::open(const std::string& dir) {
  std::ifstream in(dir + "/header.json");
  if (!in) throw ParamError("cannot open dataset header in " + dir);
  json header = json::parse(in, nullptr, true);
  if (header.value("kind", "") != "star-encrypted-dataset")
    throw ParamError("not an encrypted dataset: " + dir);
  EncryptedDataset ds;
  ds.dir_ = dir;
  ds.phi_ = header.at("phi").get<unsigned>();
  ds.pk_ = PaillierPublicKey::from_json(header.at("public_key").dump());
  ds.policy_ = RevealPolicy::from_json(header.at("policy"));
  ds.meta_ = DatasetMetadata::from_json(header.at("metadata"));
  ds.meta_.validate();
  for (const auto& a : ds.meta_.attrs)  // published datasets carry concrete labels
    if (a.categorical && a.categories.empty())
      throw ParamError("categorical column has no labels: " + a.name);
  return ds;
}

std::vector<CipherWire> EncryptedDataset::load_column(const std::string& name) const {
  const AttributeInfo* a = meta_.find(name);
  if (!a) throw ParamError("unknown column: " + name);
  if (a->categorical) throw ParamError("column is categorical, expected continuous: " + name);
  auto cts = read_ct_file(dir_ + "/" + name + ".ct", meta_.n_rows, pk_.N2);
  std::vector<CipherWire> wires;
  wires.reserve(cts.size());
  mpz_class budget = fp_encode(a->bound, phi_).raw + 1;
  for (auto& ct : cts)
    wires.push_back(
        CipherWire{Ciphertext{std::move(ct)}, static_cast<int>(phi_), MagnitudeBudget{budget}});
  return wires;
}

std::vector<std::vector<CipherWire>> EncryptedDataset::load_onehot(const std::string& name) const {
  const AttributeInfo* a = meta_.find(name);
  if (!a) throw ParamError("unknown column: " + name);
  if (!a->categorical) throw ParamError("column is continuous, expected categorical: " + name);
  std::vector<std::vector<CipherWire>> groups;
  groups.reserve(a->categories.size());
  for (size_t j = 0; j < a->categories.size(); ++j) {
    auto cts = read_ct_file(dir_ + "/" + name + "." + std::to_string(j) + ".ct", meta_.n_rows,
                            pk_.N2);
    std::vector<CipherWire> wires;
    wires.reserve(cts.size());
    for (auto& ct : cts)
      wires.push_back(CipherWire{Ciphertext{std::move(ct)}, 0, MagnitudeBudget{mpz_class(1)}});
    groups.push_back(std::move(wires));
  }
  return groups;
}

}  // namespace star
