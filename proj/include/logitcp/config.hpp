#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "logitcp/likelihood.hpp"

namespace logitcp {

struct NoPenalty {
  friend bool operator==(const NoPenalty&, const NoPenalty&) = default;
};

/// ||u_r||_1 <= c[0], ||v_r||_1 <= c[1], ||w_r||_1 <= c[2].
struct L1Penalty {
  std::array<double, 3> c{};
  friend bool operator==(const L1Penalty&, const L1Penalty&) = default;
};

/// ||u_r||_0 <= s[0], ...
struct L0Penalty {
  std::array<std::size_t, 3> s{};
  friend bool operator==(const L0Penalty&, const L0Penalty&) = default;
};

using Penalty = std::variant<NoPenalty, L1Penalty, L0Penalty>;

enum class Method { als, tp, tsp, ttp };
enum class InitKind { spectral, random };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::als: return "als";
    case Method::tp: return "tp";
    case Method::tsp: return "tsp";
    case Method::ttp: return "ttp";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "als") return Method::als;
  if (s == "tp") return Method::tp;
  if (s == "tsp") return Method::tsp;
  if (s == "ttp") return Method::ttp;
  throw ConfigError("unknown method '" + s + "' (expected als|tp|tsp|ttp)");
}

inline std::string to_string(InitKind k) { return k == InitKind::spectral ? "spectral" : "random"; }

inline InitKind parse_init(const std::string& s) {
  if (s == "spectral") return InitKind::spectral;
  if (s == "random") return InitKind::random;
  throw ConfigError("unknown init '" + s + "' (expected spectral|random)");
}

/// l1 bounds c_j = sqrt(p_j) * ratio.
inline L1Penalty l1_from_ratio(const Dims& dims, double ratio) {
  L1Penalty p;
  for (int n = 1; n <= 3; ++n) p.c[n - 1] = std::sqrt(static_cast<double>(dims[n])) * ratio;
  return p;
}

/// l0 bounds s_j = floor(p_j * ratio), at least 1.
inline L0Penalty l0_from_ratio(const Dims& dims, double ratio) {
  L0Penalty p;
  for (int n = 1; n <= 3; ++n) {
    const auto s = static_cast<std::size_t>(std::floor(static_cast<double>(dims[n]) * ratio + 1e-12));
    p.s[n - 1] = std::max<std::size_t>(1, std::min(s, dims[n]));
  }
  return p;
}

struct FitConfig {
  Method method = Method::tp;
  std::size_t rank = 1;
  Penalty penalty = NoPenalty{};
  /// Number of rank-one starts; unset means max(10, R^3).
  std::optional<std::size_t> n_starts;
  InitKind init = InitKind::spectral;
  double cluster_threshold = 0.5;
  /// Re-run the rank-one fit from each selected cluster representative.
  bool reestimate = true;
  double inner_tol = 1e-4;
  double outer_abs_tol = 1e-2;
  double outer_rel_tol = 1e-5;
  std::size_t max_outer_iters = 50;
  std::size_t max_inner_iters = 100;
  bool symmetric_uv = false;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t starts() const {
    if (n_starts) return *n_starts;
    return std::max<std::size_t>(10, rank * rank * rank);
  }
};

/// Throws ConfigError when the configuration is infeasible for `dims`.
inline void validate_config(const FitConfig& cfg, const Dims& dims) {
  if (cfg.rank < 1) throw ConfigError("rank must be >= 1");
  if (cfg.cluster_threshold < 1e-4 || cfg.cluster_threshold > 1.0) {
    throw ConfigError("cluster threshold must lie in [1e-4, 1]");
  }
  if (cfg.max_outer_iters < 1 || cfg.max_inner_iters < 1) throw ConfigError("iteration limits must be >= 1");
  if (cfg.symmetric_uv && dims.p1 != dims.p2) throw ConfigError("symmetric u = v requires p1 == p2");
  if (cfg.method != Method::als && cfg.starts() < cfg.rank) throw ConfigError("number of starts must be >= rank");
  const bool want_none = cfg.method == Method::als || cfg.method == Method::tp;
  if (want_none && !std::holds_alternative<NoPenalty>(cfg.penalty)) {
    throw ConfigError(to_string(cfg.method) + " does not take a sparsity penalty");
  }
  if (cfg.method == Method::tsp) {
    const auto* p = std::get_if<L1Penalty>(&cfg.penalty);
    if (!p) throw ConfigError("tsp requires an l1 penalty");
    for (int n = 1; n <= 3; ++n) {
      const double c = p->c[n - 1];
      if (c < 1.0 - 1e-12 || c > std::sqrt(static_cast<double>(dims[n])) + 1e-12) {
        throw ConfigError("l1 bound c_" + std::to_string(n) + " must lie in [1, sqrt(p_" + std::to_string(n) + ")]");
      }
    }
  }
  if (cfg.method == Method::ttp) {
    const auto* p = std::get_if<L0Penalty>(&cfg.penalty);
    if (!p) throw ConfigError("ttp requires an l0 penalty");
    for (int n = 1; n <= 3; ++n) {
      if (p->s[n - 1] < 1 || p->s[n - 1] > dims[n]) {
        throw ConfigError("l0 bound s_" + std::to_string(n) + " must lie in [1, p_" + std::to_string(n) + "]");
      }
    }
  }
  if (cfg.symmetric_uv) {
    if (const auto* p = std::get_if<L1Penalty>(&cfg.penalty); p && p->c[0] != p->c[1]) {
      throw ConfigError("symmetric u = v requires c_1 == c_2");
    }
    if (const auto* p = std::get_if<L0Penalty>(&cfg.penalty); p && p->s[0] != p->s[1]) {
      throw ConfigError("symmetric u = v requires s_1 == s_2");
    }
  }
}

struct ComponentSummary {
  double weight = 0.0;
  /// Deviance of the offset plus this single component.
  double marginal_deviance = 0.0;
};

struct FitReport {
  LogitModel model;
  /// -l per outer MM iteration (for power methods: the leading component's final fit).
  std::vector<double> loss_trace;
  std::size_t n_starts_used = 0;
  std::size_t clusters_found = 0;
  std::vector<ComponentSummary> per_component;
  bool converged = false;
  std::string reason;
};

}  // namespace logitcp
