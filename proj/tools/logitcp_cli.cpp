// logitcp: simulate, fit, select, complete and report from the command line.
//
// Exit codes: 0 success, 2 bad flags or invalid input, 3 a fit stopped at
// an iteration limit (its output is still written, flagged in metadata).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "logitcp/logitcp.hpp"

namespace fs = std::filesystem;
using namespace logitcp;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kNotConverged = 3;

/// Thrown for flag combinations CLI11 cannot express.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitFlags {
  std::size_t rank = 1;
  std::string method = "tp";
  std::optional<double> c_ratio;
  std::optional<double> s_ratio;
  bool symmetric_uv = false;
  std::optional<std::size_t> starts;
  std::string init = "spectral";
  double cluster_threshold = 0.5;
  bool no_reestimate = false;
  std::size_t max_outer = 50;
  std::uint64_t seed = 0;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f, bool rank_required) {
  auto* rank = cmd->add_option("--rank", f.rank, "Number of components")->check(CLI::PositiveNumber);
  if (rank_required) rank->required();
  cmd->add_option("--method", f.method, "Solver")->check(CLI::IsMember({"als", "tp", "tsp", "ttp"}));
  auto* c = cmd->add_option("--c-ratio", f.c_ratio, "l1 level c, with c_j = sqrt(p_j) c (tsp)");
  auto* s = cmd->add_option("--s-ratio", f.s_ratio, "l0 level s, with s_j = floor(p_j s) (ttp)");
  c->excludes(s);
  cmd->add_flag("--symmetric-uv", f.symmetric_uv, "Constrain u_r = v_r (needs p1 == p2)");
  cmd->add_option("--starts", f.starts, "Rank-one starts L (default max(10, R^3))")->check(CLI::PositiveNumber);
  cmd->add_option("--init", f.init, "Start initialization")->check(CLI::IsMember({"spectral", "random"}));
  cmd->add_option("--cluster-threshold", f.cluster_threshold, "Tuple distance below which starts are merged");
  cmd->add_flag("--no-reestimate", f.no_reestimate, "Keep cluster representatives as fitted");
  cmd->add_option("--max-outer", f.max_outer, "Outer MM iteration limit")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Random seed");
}

FitConfig fit_config(const FitFlags& f, const Dims& dims) {
  FitConfig cfg;
  cfg.method = parse_method(f.method);
  cfg.rank = f.rank;
  cfg.n_starts = f.starts;
  cfg.init = parse_init(f.init);
  cfg.cluster_threshold = f.cluster_threshold;
  cfg.reestimate = !f.no_reestimate;
  cfg.max_outer_iters = f.max_outer;
  cfg.symmetric_uv = f.symmetric_uv;
  cfg.seed = f.seed;
  if (cfg.method == Method::tsp) {
    if (f.s_ratio) throw UsageError("--s-ratio applies to ttp; tsp takes --c-ratio");
    if (!f.c_ratio) throw UsageError("tsp needs --c-ratio");
    cfg.penalty = penalty_for(cfg.method, dims, f.c_ratio);
  } else if (cfg.method == Method::ttp) {
    if (f.c_ratio) throw UsageError("--c-ratio applies to tsp; ttp takes --s-ratio");
    if (!f.s_ratio) throw UsageError("ttp needs --s-ratio");
    cfg.penalty = penalty_for(cfg.method, dims, f.s_ratio);
  } else if (f.c_ratio || f.s_ratio) {
    throw UsageError(f.method + " does not take a sparsity ratio");
  }
  validate_config(cfg, dims);
  return cfg;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string fit_summary(const BinaryTensor3& x, const FitReport& r) {
  std::ostringstream out;
  const auto& m = r.model;
  const double nll = neg_loglik(x, m.theta());
  const auto df = model_df(m);
  out << "observed entries: " << x.observed_count() << " of " << x.size() << "\n";
  out << "components found: " << m.rank() << " (starts used " << r.n_starts_used << ")\n";
  out << "mu: " << fmt("%.6f", m.mu) << "\n";
  out << "-loglik: " << fmt("%.6f", nll) << "\n";
  out << "df: " << df << "\n";
  out << "AIC: " << fmt("%.6f", aic(x, m)) << "\n";
  out << "BIC: " << fmt("%.6f", bic(x, m)) << "\n";
  out << "converged: " << (r.converged ? "yes" : "no") << (r.reason.empty() ? "" : " (" + r.reason + ")") << "\n";
  if (m.rank() > 0) {
    out << "\ncomponent  weight  cumulative%  marginal%  marginal_deviance\n";
    try {
      const auto dev = explained_deviance(x, m);
      for (Eigen::Index k = 0; k < m.rank(); ++k) {
        const auto i = static_cast<std::size_t>(k);
        out << k + 1 << "  " << fmt("%.6f", m.d[k]) << "  " << fmt("%.4f", 100.0 * dev.cumulative[i]) << "  "
            << fmt("%.4f", 100.0 * dev.marginal[i]) << "  " << fmt("%.6f", dev.marginal_dev[i]) << "\n";
      }
      out << "null deviance: " << fmt("%.6f", dev.null_deviance) << "\n";
    } catch (const UndefinedRatio& e) {
      out << "deviance shares undefined: " << e.what() << "\n";
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------

struct SimulateFlags {
  std::optional<std::string> scenario;
  double scale = 1.0;
  std::vector<std::size_t> dims;
  std::optional<std::size_t> rank;
  std::vector<double> snr;
  double sparsity = 0.2;
  double mu = 0.0;
  std::uint64_t seed = 0;
  std::size_t baseline_reps = 100;
  std::optional<double> baseline;
  std::string out;
};

int run_simulate(const SimulateFlags& f) {
  SimConfig cfg;
  if (f.scenario) {
    if (!f.dims.empty()) throw UsageError("--dims cannot be combined with --scenario");
    cfg = scenario(*f.scenario, f.scale);
    if (f.rank && *f.rank != cfg.rank) throw UsageError("--rank conflicts with scenario " + *f.scenario);
    if (!f.snr.empty()) cfg.snr = f.snr;
  } else {
    if (f.dims.size() != 3) throw UsageError("give --scenario or --dims p1,p2,p3");
    if (f.scale != 1.0) throw UsageError("--scale applies to --scenario only");
    cfg.dims = Dims{f.dims[0], f.dims[1], f.dims[2]};
    if (cfg.dims.p1 < 1 || cfg.dims.p2 < 1 || cfg.dims.p3 < 1) throw UsageError("dims must be positive");
    cfg.rank = f.rank.value_or(1);
    cfg.snr = f.snr.empty() ? std::vector<double>(cfg.rank, 3.0) : f.snr;
  }
  cfg.sparsity = f.sparsity;
  cfg.mu_star = f.mu;
  cfg.seed = f.seed;
  cfg.baseline_reps = f.baseline_reps;
  validate_sim_config(cfg);

  Json meta;
  Dataset ds;
  if (f.baseline) {
    ds = gen_dataset(cfg, *f.baseline);
    meta["baseline_source"] = "flag";
  } else {
    const auto b = calibrate_baseline(cfg.dims, cfg.rank, derive_seed(cfg.seed, 3), cfg.baseline_reps);
    ds = gen_dataset(cfg, b.d_b);
    meta["baseline_source"] = "calibrated";
    meta["baseline_successes"] = b.successes;
    meta["baseline_failures"] = b.failure_notes;
  }
  meta["d_b"] = ds.d_b;

  Json sim;
  if (f.scenario) {
    sim["scenario"] = *f.scenario;
    sim["scale"] = f.scale;
  }
  sim["dims"] = {cfg.dims.p1, cfg.dims.p2, cfg.dims.p3};
  sim["rank"] = cfg.rank;
  sim["snr"] = cfg.snr;
  sim["sparsity"] = cfg.sparsity;
  sim["mu_star"] = cfg.mu_star;
  sim["seed"] = cfg.seed;
  sim["baseline_reps"] = cfg.baseline_reps;

  const fs::path dir(f.out);
  write_tensor(dir / "data.txt", ds.x);
  write_model(dir / "truth.json", ModelDocument{ds.truth.model, sim, meta});
  std::cout << "wrote " << (dir / "data.txt").string() << " and " << (dir / "truth.json").string() << " (dims "
            << to_string(cfg.dims) << ", d_b " << fmt("%.6f", ds.d_b) << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct FitCommandFlags {
  std::string data;
  std::string out;
  std::optional<std::string> report;
  FitFlags fit;
};

int run_fit(const FitCommandFlags& f) {
  const BinaryTensor3 x = read_binary_tensor(f.data);
  const FitConfig cfg = fit_config(f.fit, x.dims());
  const FitReport r = fit(x, cfg);
  write_model(f.out, ModelDocument{r.model, config_to_json(cfg), report_metadata(r)});
  const std::string summary = fit_summary(x, r);
  if (f.report) {
    write_atomic(*f.report, summary);
  } else {
    std::cout << summary;
  }
  if (!r.converged) {
    std::cerr << "warning: " << r.reason << "; partial model written to " << f.out << "\n";
    return kNotConverged;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct SelectFlags {
  std::string data;
  std::string out;
  std::vector<std::size_t> ranks;
  std::vector<double> ratios;
  std::string criterion = "bic";
  std::size_t folds = 5;
  double min_marginal = 0.01;
  FitFlags fit;
};

std::string opt_real(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

int run_select(const SelectFlags& f) {
  const BinaryTensor3 x = read_binary_tensor(f.data);
  FitConfig base;
  base.method = parse_method(f.fit.method);
  base.n_starts = f.fit.starts;
  base.init = parse_init(f.fit.init);
  base.cluster_threshold = f.fit.cluster_threshold;
  base.reestimate = !f.fit.no_reestimate;
  base.max_outer_iters = f.fit.max_outer;
  base.symmetric_uv = f.fit.symmetric_uv;
  base.seed = f.fit.seed;
  if (!uses_ratio(base.method) && !f.ratios.empty()) throw UsageError(f.fit.method + " does not take --ratios");
  SelectionGrid grid;
  grid.ranks = f.ranks;
  grid.ratios = f.ratios;
  grid.criterion = parse_criterion(f.criterion);
  grid.cv_folds = f.folds;
  grid.min_marginal = f.min_marginal;
  const auto res = select_model(x, base, grid);

  std::size_t max_components = 0;
  for (const auto& row : res.table) max_components = std::max(max_components, row.cumulative.size());
  std::ostringstream csv;
  csv << "rank,ratio,score,df,neg_loglik,aic,bic,valid,converged";
  for (std::size_t r = 1; r <= max_components; ++r) csv << ",cumulative_" << r;
  for (std::size_t r = 1; r <= max_components; ++r) csv << ",marginal_" << r;
  csv << ",note\n";
  for (const auto& row : res.table) {
    csv << row.rank << "," << opt_real(row.ratio) << "," << format_real(row.score) << "," << row.df << ","
        << format_real(row.neg_loglik) << "," << format_real(row.aic) << "," << format_real(row.bic) << ","
        << (row.valid ? 1 : 0) << "," << (row.converged ? 1 : 0);
    for (std::size_t r = 0; r < max_components; ++r)
      csv << "," << (r < row.cumulative.size() ? format_real(row.cumulative[r]) : "");
    for (std::size_t r = 0; r < max_components; ++r)
      csv << "," << (r < row.marginal.size() ? format_real(row.marginal[r]) : "");
    std::string note = row.note;
    for (auto& ch : note)
      if (ch == '"') ch = '\'';
    csv << ",\"" << note << "\"\n";
  }
  write_atomic(f.out, csv.str());
  std::cout << "selected method=" << f.fit.method << " rank=" << res.rank;
  if (res.ratio) std::cout << " ratio=" << format_real(*res.ratio);
  std::cout << " criterion=" << f.criterion << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct CompleteFlags {
  std::string data;
  std::optional<std::string> model;
  std::optional<std::string> holdout;
  double threshold = 0.5;
  std::string out;
  FitFlags fit;
};

int run_complete(const CompleteFlags& f, bool fit_flags_given) {
  const BinaryTensor3 x = read_binary_tensor(f.data);
  if (x.fully_observed()) throw UsageError(f.data + " has no missing entries to predict");
  if (f.model && fit_flags_given) throw UsageError("--model cannot be combined with fit flags");
  if (!(f.threshold >= 0.0 && f.threshold <= 1.0)) throw UsageError("--threshold must lie in [0, 1]");

  LogitModel model;
  bool converged = true;
  if (f.model) {
    model = read_model(*f.model).model;
    if (model.dims() != x.dims()) {
      throw DimensionError("model dims " + to_string(model.dims()) + " differ from data dims " + to_string(x.dims()));
    }
  } else {
    const FitReport r = fit(x, fit_config(f.fit, x.dims()));
    model = r.model;
    converged = r.converged;
    if (!converged) std::cerr << "warning: " << r.reason << "\n";
  }

  const DenseTensor3 probs = predict_probs(model);
  std::ostringstream csv;
  csv << "i,j,k,prob,label\n";
  const auto& d = x.dims();
  for (std::size_t k = 0; k < d.p3; ++k)
    for (std::size_t j = 0; j < d.p2; ++j)
      for (std::size_t i = 0; i < d.p1; ++i) {
        const auto n = x.index(i, j, k);
        if (x.observed(n)) continue;
        csv << i + 1 << "," << j + 1 << "," << k + 1 << "," << format_real(probs[n]) << ","
            << (probs[n] >= f.threshold ? 1 : 0) << "\n";
      }
  write_atomic(f.out, csv.str());

  if (f.holdout) {
    const BinaryTensor3 h = read_binary_tensor(*f.holdout);
    if (h.dims() != x.dims()) throw DimensionError("holdout dims differ from data dims");
    std::cout << "heldout entries: " << h.observed_count() << "\n";
    std::cout << "heldout -loglik: " << fmt("%.6f", neg_loglik(h, model.theta())) << "\n";
    std::cout << "completion AUC: " << fmt("%.6f", completion_auc(h, probs)) << "\n";
  }
  return converged ? kOk : kNotConverged;
}

// ---------------------------------------------------------------------------

struct ReportFlags {
  std::string model;
  std::optional<std::string> truth;
  std::string out;
};

int run_report(const ReportFlags& f) {
  LogitModel fit_model = read_model(f.model).model;
  canonicalize(fit_model);
  const fs::path dir(f.out);

  // Slices d_r u_r w_r^T (p1 x p3), all scaled by one max-abs so panels share a color scale.
  const auto R = fit_model.rank();
  std::vector<Matrix> slices;
  double max_abs = 0.0;
  for (Eigen::Index r = 0; r < R; ++r) {
    slices.push_back(fit_model.d[r] * fit_model.U.col(r) * fit_model.W.col(r).transpose());
    max_abs = std::max(max_abs, slices.back().cwiseAbs().maxCoeff());
  }
  for (Eigen::Index r = 0; r < R; ++r) {
    Matrix& s = slices[static_cast<std::size_t>(r)];
    if (max_abs > 0.0) s /= max_abs;
    std::string csv;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      for (Eigen::Index k = 0; k < s.cols(); ++k) {
        if (k) csv += ",";
        csv += format_real(s(i, k));
      }
      csv += "\n";
    }
    write_atomic(dir / ("slice_" + std::to_string(r + 1) + ".csv"), csv);
  }

  std::ostringstream rep;
  rep << "components: " << R << "\n";
  rep << "slice scale (max |d_r u_r w_r^T|): " << format_real(max_abs) << "\n";
  if (f.truth) {
    const LogitModel truth = read_model(*f.truth).model;
    if (truth.dims() != fit_model.dims()) {
      throw DimensionError("model dims " + to_string(fit_model.dims()) + " differ from truth dims " +
                           to_string(truth.dims()));
    }
    rep << "rmse: " << format_real(rmse(fit_model, truth)) << "\n";
    if (truth.rank() == fit_model.rank()) {
      const auto e = evaluate(fit_model, truth);
      rep << "mean_error: " << format_real(e.mean_error) << "\n";
      rep << "mean_error_per_mode: " << format_real(e.mean_error_per_mode[0]) << " "
          << format_real(e.mean_error_per_mode[1]) << " " << format_real(e.mean_error_per_mode[2]) << "\n";
      rep << "weight_error: " << format_real(e.weight_error) << "\n";
      rep << "tpr: " << format_real(e.tpr) << "\n";
      rep << "fpr: " << format_real(e.fpr) << "\n";
      rep << "tpr_per_mode: " << format_real(e.tpr_per_mode[0]) << " " << format_real(e.tpr_per_mode[1]) << " "
          << format_real(e.tpr_per_mode[2]) << "\n";
      rep << "fpr_per_mode: " << format_real(e.fpr_per_mode[0]) << " " << format_real(e.fpr_per_mode[1]) << " "
          << format_real(e.fpr_per_mode[2]) << "\n";
      for (const auto& n : e.notes) rep << "note: " << n << "\n";
    } else {
      rep << "note: fitted rank " << fit_model.rank() << " differs from true rank " << truth.rank()
          << "; factor metrics skipped\n";
    }
  }
  write_atomic(dir / "report.txt", rep.str());
  std::cout << rep.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse logistic CP decomposition of binary tensors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "logitcp 1.0");

  SimulateFlags sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a spiked binary tensor and its ground truth");
  simulate->add_option("--scenario", sim.scenario, "Published scenario")->check(CLI::IsMember({"I", "II", "III", "IV"}));
  simulate->add_option("--scale", sim.scale, "Shrink p1 of a scenario (p1 = round(1000 scale))");
  simulate->add_option("--dims", sim.dims, "p1,p2,p3")->delimiter(',')->expected(3);
  simulate->add_option("--rank", sim.rank, "Number of components")->check(CLI::PositiveNumber);
  simulate->add_option("--snr", sim.snr, "Signal-to-noise ratios, one per component")->delimiter(',');
  simulate->add_option("--sparsity", sim.sparsity, "Share of nonzero entries per factor column");
  simulate->add_option("--mu", sim.mu, "True offset");
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_option("--baseline-reps", sim.baseline_reps, "Coin-flip replicates for the noise level")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--baseline", sim.baseline, "Use this noise level instead of calibrating")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim.out, "Output directory (data.txt, truth.json)")->required();

  FitCommandFlags fitf;
  auto* fitc = app.add_subcommand("fit", "Fit a logistic CP model");
  fitc->add_option("--data", fitf.data, "Tensor file")->required();
  fitc->add_option("--out", fitf.out, "Model file to write")->required();
  fitc->add_option("--report", fitf.report, "Write the text report here instead of stdout");
  add_fit_flags(fitc, fitf.fit, true);

  SelectFlags self;
  auto* select = app.add_subcommand("select", "Grid search over ranks and sparsity ratios");
  select->add_option("--data", self.data, "Tensor file")->required();
  select->add_option("--out", self.out, "Score table CSV")->required();
  select->add_option("--ranks", self.ranks, "Candidate ranks; the first one is used for the ratio sweep")
      ->delimiter(',')
      ->required();
  select->add_option("--ratios", self.ratios, "Candidate c- or s-ratios")->delimiter(',');
  select->add_option("--criterion", self.criterion, "Selection criterion")
      ->check(CLI::IsMember({"aic", "bic", "cv", "deviance"}));
  select->add_option("--folds", self.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  select->add_option("--min-marginal", self.min_marginal, "Deviance criterion: least share per component");
  select->add_option("--method", self.fit.method, "Solver")->check(CLI::IsMember({"als", "tp", "tsp", "ttp"}));
  select->add_flag("--symmetric-uv", self.fit.symmetric_uv, "Constrain u_r = v_r");
  select->add_option("--starts", self.fit.starts, "Rank-one starts per fit")->check(CLI::PositiveNumber);
  select->add_option("--max-outer", self.fit.max_outer, "Outer MM iteration limit")->check(CLI::PositiveNumber);
  select->add_option("--seed", self.fit.seed, "Random seed");

  CompleteFlags comp;
  auto* complete = app.add_subcommand("complete", "Predict the missing entries of a tensor");
  complete->add_option("--data", comp.data, "Tensor file with missing entries")->required();
  complete->add_option("--model", comp.model, "Model file; without it the data is fit first");
  complete->add_option("--holdout", comp.holdout, "Tensor file of held-out truths to score against");
  complete->add_option("--threshold", comp.threshold, "Label cut: prob >= threshold is 1");
  complete->add_option("--out", comp.out, "Predictions CSV")->required();
  add_fit_flags(complete, comp.fit, false);

  ReportFlags rep;
  auto* report = app.add_subcommand("report", "Metrics against a truth and rank-one slice CSVs");
  report->add_option("--model", rep.model, "Fitted model file")->required();
  report->add_option("--truth", rep.truth, "Ground-truth model file");
  report->add_option("--out", rep.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*fitc) return run_fit(fitf);
    if (*select) return run_select(self);
    if (*complete) {
      bool fit_flags_given = false;
      for (const char* name : {"--rank", "--method", "--c-ratio", "--s-ratio", "--symmetric-uv", "--starts", "--init",
                               "--cluster-threshold", "--no-reestimate", "--max-outer", "--seed"}) {
        fit_flags_given |= complete->count(name) > 0;
      }
      return run_complete(comp, fit_flags_given);
    }
    if (*report) return run_report(rep);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
