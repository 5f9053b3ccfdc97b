#pragma once

// Text formats: sparse tensor records ("dims p1 p2 p3" then "i j k v",
// 1-based) and JSON model documents. All writers go through a temp file
// and a rename so readers never see a partial file.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include <json.hpp>

#include "logitcp/config.hpp"
#include "logitcp/likelihood.hpp"

namespace logitcp {

using Json = nlohmann::json;

/// Unreadable or malformed input file.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Shortest-exact formatting: %.17g always round-trips a double.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Tensor files

/// Observed entries only; unobserved cells are simply absent.
inline std::string format_tensor(const BinaryTensor3& x) {
  const auto& d = x.dims();
  std::string out = "dims " + std::to_string(d.p1) + " " + std::to_string(d.p2) + " " + std::to_string(d.p3) + "\n";
  for (std::size_t k = 0; k < d.p3; ++k)
    for (std::size_t j = 0; j < d.p2; ++j)
      for (std::size_t i = 0; i < d.p1; ++i) {
        const auto n = x.index(i, j, k);
        if (!x.observed(n)) continue;
        out += std::to_string(i + 1) + " " + std::to_string(j + 1) + " " + std::to_string(k + 1) + " " +
               (x.value(n) ? "1" : "0") + "\n";
      }
  return out;
}

/// Every entry of a real tensor.
inline std::string format_tensor(const DenseTensor3& t) {
  const auto& d = t.dims();
  std::string out = "dims " + std::to_string(d.p1) + " " + std::to_string(d.p2) + " " + std::to_string(d.p3) + "\n";
  for (std::size_t k = 0; k < d.p3; ++k)
    for (std::size_t j = 0; j < d.p2; ++j)
      for (std::size_t i = 0; i < d.p1; ++i) {
        out += std::to_string(i + 1) + " " + std::to_string(j + 1) + " " + std::to_string(k + 1) + " " +
               format_real(t(i, j, k)) + "\n";
      }
  return out;
}

inline void write_tensor(const std::filesystem::path& path, const BinaryTensor3& x) {
  write_atomic(path, format_tensor(x));
}

inline void write_tensor(const std::filesystem::path& path, const DenseTensor3& t) {
  write_atomic(path, format_tensor(t));
}

/// Parses a binary tensor file; absent records become missing entries.
inline BinaryTensor3 parse_binary_tensor(const std::string& text, const std::string& source = "<input>") {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) -> IoError {
    return IoError(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  Dims dims{0, 0, 0};
  bool have_dims = false;
  std::vector<std::uint8_t> vals;
  std::vector<std::uint8_t> mask;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (!have_dims) {
      long long p[3];
      if (first != "dims" || !(ls >> p[0] >> p[1] >> p[2])) throw fail("expected header 'dims p1 p2 p3'");
      if (p[0] < 1 || p[1] < 1 || p[2] < 1) throw fail("dims must be positive");
      dims = Dims{static_cast<std::size_t>(p[0]), static_cast<std::size_t>(p[1]), static_cast<std::size_t>(p[2])};
      vals.assign(dims.size(), 0);
      mask.assign(dims.size(), 0);
      have_dims = true;
      std::string extra;
      if (ls >> extra) throw fail("unexpected text after dims");
      continue;
    }
    long long idx[3];
    std::string value;
    std::istringstream rec(line);
    if (!(rec >> idx[0] >> idx[1] >> idx[2] >> value)) throw fail("expected record 'i j k v'");
    std::string extra;
    if (rec >> extra) throw fail("unexpected text after record");
    for (int m = 0; m < 3; ++m) {
      if (idx[m] < 1 || static_cast<std::size_t>(idx[m]) > dims[m + 1]) {
        throw fail("index " + std::to_string(idx[m]) + " out of range for mode " + std::to_string(m + 1));
      }
    }
    if (value != "0" && value != "1") throw fail("binary value must be 0 or 1, got '" + value + "'");
    const std::size_t n = static_cast<std::size_t>(idx[0] - 1) +
                          dims.p1 * (static_cast<std::size_t>(idx[1] - 1) + dims.p2 * static_cast<std::size_t>(idx[2] - 1));
    if (mask[n]) throw fail("duplicate entry (" + std::to_string(idx[0]) + "," + std::to_string(idx[1]) + "," +
                            std::to_string(idx[2]) + ")");
    mask[n] = 1;
    vals[n] = value == "1" ? 1 : 0;
  }
  if (!have_dims) throw IoError(source + ": missing 'dims' header");
  return BinaryTensor3(dims, std::move(vals), std::move(mask));
}

inline BinaryTensor3 read_binary_tensor(const std::filesystem::path& path) {
  return parse_binary_tensor(read_text(path), path.string());
}

// ---------------------------------------------------------------------------
// Model files

inline Json to_json(const Matrix& m) {
  Json cols = Json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Json col = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) col.push_back(m(r, c));
    cols.push_back(std::move(col));
  }
  return cols;
}

inline Matrix matrix_from_json(const Json& j, std::size_t rows, const char* name) {
  if (!j.is_array()) throw IoError(std::string("model field ") + name + " must be a list of columns");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(j.size()));
  for (std::size_t c = 0; c < j.size(); ++c) {
    if (!j[c].is_array() || j[c].size() != rows) {
      throw IoError(std::string("model field ") + name + " column " + std::to_string(c + 1) + " has the wrong length");
    }
    for (std::size_t r = 0; r < rows; ++r) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[c][r].get<double>();
  }
  return m;
}

inline Json config_to_json(const FitConfig& cfg) {
  Json j;
  j["method"] = to_string(cfg.method);
  j["rank"] = cfg.rank;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, NoPenalty>) {
          j["penalty"] = {{"kind", "none"}};
        } else if constexpr (std::is_same_v<P, L1Penalty>) {
          j["penalty"] = {{"kind", "l1"}, {"c", {p.c[0], p.c[1], p.c[2]}}};
        } else {
          j["penalty"] = {{"kind", "l0"}, {"s", {p.s[0], p.s[1], p.s[2]}}};
        }
      },
      cfg.penalty);
  j["n_starts"] = cfg.starts();
  j["init"] = to_string(cfg.init);
  j["cluster_threshold"] = cfg.cluster_threshold;
  j["reestimate"] = cfg.reestimate;
  j["inner_tol"] = cfg.inner_tol;
  j["outer_abs_tol"] = cfg.outer_abs_tol;
  j["outer_rel_tol"] = cfg.outer_rel_tol;
  j["max_outer_iters"] = cfg.max_outer_iters;
  j["max_inner_iters"] = cfg.max_inner_iters;
  j["symmetric_uv"] = cfg.symmetric_uv;
  j["seed"] = cfg.seed;
  return j;
}

inline Json report_metadata(const FitReport& r) {
  Json j;
  j["loss_trace"] = r.loss_trace;
  j["n_starts_used"] = r.n_starts_used;
  j["clusters_found"] = r.clusters_found;
  j["converged"] = r.converged;
  j["reason"] = r.reason;
  Json comps = Json::array();
  for (const auto& c : r.per_component) comps.push_back({{"weight", c.weight}, {"marginal_deviance", c.marginal_deviance}});
  j["per_component"] = std::move(comps);
  return j;
}

/// A model plus free-form config echo and fit metadata.
struct ModelDocument {
  LogitModel model;
  Json config = Json::object();
  Json metadata = Json::object();

  friend bool operator==(const ModelDocument&, const ModelDocument&) = default;
};

inline Json to_json(const ModelDocument& doc) {
  const auto& m = doc.model;
  const Dims dims = m.dims();
  Json j;
  j["format"] = "logitcp-model";
  j["version"] = 1;
  j["dims"] = {dims.p1, dims.p2, dims.p3};
  j["mu"] = m.mu;
  j["d"] = std::vector<double>(m.d.data(), m.d.data() + m.d.size());
  j["U"] = to_json(m.U);
  j["V"] = to_json(m.V);
  j["W"] = to_json(m.W);
  j["config"] = doc.config;
  j["metadata"] = doc.metadata;
  return j;
}

inline std::string format_model(const ModelDocument& doc) { return to_json(doc).dump(2) + "\n"; }

inline ModelDocument parse_model(const std::string& text, const std::string& source = "<model>") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw IoError(source + ": " + e.what());
  }
  try {
    if (j.value("format", "") != "logitcp-model") throw IoError(source + ": not a logitcp model file");
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw IoError(source + ": dims must have three entries");
    ModelDocument doc;
    doc.model.mu = j.at("mu").get<double>();
    const auto d = j.at("d").get<std::vector<double>>();
    doc.model.d = Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
    doc.model.U = matrix_from_json(j.at("U"), dims[0], "U");
    doc.model.V = matrix_from_json(j.at("V"), dims[1], "V");
    doc.model.W = matrix_from_json(j.at("W"), dims[2], "W");
    const auto R = doc.model.d.size();
    if (doc.model.U.cols() != R || doc.model.V.cols() != R || doc.model.W.cols() != R) {
      throw IoError(source + ": factor column counts do not match the number of weights");
    }
    if (j.contains("config")) doc.config = j["config"];
    if (j.contains("metadata")) doc.metadata = j["metadata"];
    return doc;
  } catch (const Json::exception& e) {
    throw IoError(source + ": " + e.what());
  }
}

inline void write_model(const std::filesystem::path& path, const ModelDocument& doc) {
  write_atomic(path, format_model(doc));
}

inline ModelDocument read_model(const std::filesystem::path& path) { return parse_model(read_text(path), path.string()); }

}  // namespace logitcp
