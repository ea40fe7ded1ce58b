#ifndef MLQE_EXPERIMENT_HPP
#define MLQE_EXPERIMENT_HPP

// Simulation-study driver: repetitions x (generate, contaminate, fit a q
// profile, select q), gathered into a row table and a per-q summary.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <limits>
#include <set>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "mlqe/estimate.hpp"
#include "mlqe/io.hpp"
#include "mlqe/qselect.hpp"
#include "mlqe/simulate.hpp"

namespace mlqe {

struct ExperimentConfig {
  sim::SimConfig sim;
  QGridSpec q_grid = QGridSpec::defaults_for(Selector::kKappa);
  Bounds bounds;
  std::optional<MaternParams> init;  // default_init per dataset when empty
  FitOptions fit;
  std::size_t repetitions = 1;
  Selector selector = Selector::kKappa;
  std::string output_dir = ".";
  unsigned threads = 0;  // 0: hardware concurrency

  void validate() const {
    sim.validate();
    bounds.validate();
    if (selector != Selector::kNone) {
      q_grid.validate(selector);
    } else {
      validate_q_grid(q_grid.grid);
    }
    if (repetitions < 1) throw DomainError("repetitions must be >= 1");
    if (init && !bounds.contains(*init)) throw DomainError("initial value lies outside the bounds");
  }

  /// Seed of repetition r's dataset; repetition 0 reuses sim.seed, so a
  /// one-repetition sweep sees the same data as `simulate` with that seed.
  std::uint64_t repetition_seed(std::size_t r) const { return sim.seed + r; }
};

namespace detail {

inline std::vector<double> three(const io::Record& rec, const std::string& key) {
  auto v = rec.get_list(key);
  if (v.size() != 3) throw DataError("key '" + key + "' needs three comma-separated values");
  return v;
}

}  // namespace detail

/// Reads a flat key=value configuration. Unknown keys are rejected, except
/// "meta.*" entries, so a run's metadata file can be fed back as its config.
inline ExperimentConfig config_from_record(const io::Record& rec, ExperimentConfig cfg = {}) {
  static const std::set<std::string> known = {
      "sim.sigma2",   "sim.beta",    "sim.nu",         "sim.n",
      "sim.m",        "sim.layout",  "sim.seed",       "contam.r",
      "contam.sd",    "qgrid.grid",  "qgrid.eps",      "qgrid.L",
      "qgrid.K",      "bounds.lower", "bounds.upper",  "fit.init",
      "fit.tol",      "fit.max_evals", "fit.scale",    "experiment.repetitions",
      "experiment.selector", "experiment.output_dir",  "experiment.threads"};
  for (const auto& [k, v] : rec.items()) {
    if (k.rfind("meta.", 0) == 0) continue;
    if (!known.count(k)) throw DataError("unknown configuration key '" + k + "'");
  }
  auto num = [&](const std::string& k, double& dst) {
    if (rec.has(k)) dst = rec.get_double(k);
  };
  auto count = [&](const std::string& k, auto& dst) {
    if (!rec.has(k)) return;
    const auto v = rec.get_int(k);
    if (v < 0) throw DataError("key '" + k + "' must be non-negative");
    dst = static_cast<std::remove_reference_t<decltype(dst)>>(v);
  };
  if (rec.has("experiment.selector")) {
    cfg.selector = parse_selector(rec.get("experiment.selector"));
    cfg.q_grid.L = QGridSpec::defaults_for(cfg.selector).L;
  }
  num("sim.sigma2", cfg.sim.theta.sigma2);
  num("sim.beta", cfg.sim.theta.beta);
  num("sim.nu", cfg.sim.theta.nu);
  count("sim.n", cfg.sim.n);
  count("sim.m", cfg.sim.m);
  if (rec.has("sim.layout")) cfg.sim.layout = sim::parse_layout(rec.get("sim.layout"));
  count("sim.seed", cfg.sim.seed);
  num("contam.r", cfg.sim.contamination.r);
  num("contam.sd", cfg.sim.contamination.noise_sd);
  if (rec.has("qgrid.grid")) cfg.q_grid.grid = rec.get_list("qgrid.grid");
  num("qgrid.eps", cfg.q_grid.eps);
  num("qgrid.L", cfg.q_grid.L);
  count("qgrid.K", cfg.q_grid.K);
  if (rec.has("bounds.lower")) {
    const auto v = detail::three(rec, "bounds.lower");
    cfg.bounds.lower = {v[0], v[1], v[2]};
  }
  if (rec.has("bounds.upper")) {
    const auto v = detail::three(rec, "bounds.upper");
    cfg.bounds.upper = {v[0], v[1], v[2]};
  }
  if (rec.has("fit.init")) {
    const auto v = detail::three(rec, "fit.init");
    cfg.init = MaternParams{v[0], v[1], v[2]};
  }
  num("fit.tol", cfg.fit.tol);
  count("fit.max_evals", cfg.fit.max_evals);
  if (rec.has("fit.scale")) cfg.fit.scale = rec.get_bool("fit.scale");
  count("experiment.repetitions", cfg.repetitions);
  if (rec.has("experiment.output_dir")) cfg.output_dir = rec.get("experiment.output_dir");
  count("experiment.threads", cfg.threads);
  return cfg;
}

/// The full configuration as a record that config_from_record reads back.
inline io::Record config_to_record(const ExperimentConfig& cfg) {
  io::Record rec;
  rec.set("sim.sigma2", cfg.sim.theta.sigma2);
  rec.set("sim.beta", cfg.sim.theta.beta);
  rec.set("sim.nu", cfg.sim.theta.nu);
  rec.set("sim.n", cfg.sim.n);
  rec.set("sim.m", cfg.sim.m);
  rec.set("sim.layout", sim::to_string(cfg.sim.layout));
  rec.set("sim.seed", cfg.sim.seed);
  rec.set("contam.r", cfg.sim.contamination.r);
  rec.set("contam.sd", cfg.sim.contamination.noise_sd);
  rec.set("qgrid.grid", io::join(cfg.q_grid.grid));
  rec.set("qgrid.eps", cfg.q_grid.eps);
  rec.set("qgrid.L", cfg.q_grid.L);
  rec.set("qgrid.K", cfg.q_grid.K);
  rec.set("bounds.lower", io::join({cfg.bounds.lower.sigma2, cfg.bounds.lower.beta,
                                    cfg.bounds.lower.nu}));
  rec.set("bounds.upper", io::join({cfg.bounds.upper.sigma2, cfg.bounds.upper.beta,
                                    cfg.bounds.upper.nu}));
  if (cfg.init) rec.set("fit.init", io::join({cfg.init->sigma2, cfg.init->beta, cfg.init->nu}));
  rec.set("fit.tol", cfg.fit.tol);
  rec.set("fit.max_evals", cfg.fit.max_evals);
  rec.set("fit.scale", cfg.fit.scale);
  rec.set("experiment.repetitions", cfg.repetitions);
  rec.set("experiment.selector", to_string(cfg.selector));
  rec.set("experiment.output_dir", cfg.output_dir);
  rec.set("experiment.threads", cfg.threads);
  return rec;
}

/// Memoized fits over q on one dataset. A new q starts from the estimate at
/// the nearest q above it already fitted, or from `init` when there is none.
class FitCache {
 public:
  FitCache(const ReplicateSet& reps, const LocationSet& locs, const Bounds& bounds,
           MaternParams init, FitOptions options)
      : reps_(reps), locs_(locs), bounds_(bounds), init_(init), options_(std::move(options)) {}

  const FitResult& fit_at(double q) {
    if (auto it = fits_.find(q); it != fits_.end()) return it->second;
    MaternParams start = init_;
    for (const auto& [qq, r] : fits_) {  // ascending; keep the smallest qq > q that succeeded
      if (qq > q && r.error.empty()) {
        start = r.theta_hat;
        break;
      }
    }
    FitResult r;
    try {
      r = fit(reps_, locs_, q, bounds_, start, options_);
    } catch (const std::exception& e) {
      r.q = q;
      r.init = start;
      r.theta_hat = start;
      r.error = e.what();
    }
    return fits_.emplace(q, std::move(r)).first->second;
  }

  void insert(const FitResult& r) { fits_.emplace(r.q, r); }

  /// Fit function for the selectors; failed or non-converged fits are unusable.
  FitFn as_fit_fn() {
    return [this](double q) -> std::optional<MaternParams> {
      const auto& r = fit_at(q);
      if (!r.error.empty() || !r.converged) return std::nullopt;
      return r.theta_hat;
    };
  }

 private:
  const ReplicateSet& reps_;
  const LocationSet& locs_;
  Bounds bounds_;
  MaternParams init_;
  FitOptions options_;
  std::map<double, FitResult> fits_;
};

/// Standard-error function for the SQV selector.
inline SeFn make_se_fn(const ReplicateSet& reps, const LocationSet& locs) {
  return [&reps, &locs](const MaternParams& theta, double q) -> std::optional<Eigen::Vector3d> {
    try {
      return std_errs(sandwich(reps, locs, theta, q)).se;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
}

struct SweepRow {
  std::size_t repetition = 0;
  std::string kind = "profile";  // "profile" or "selection"
  double q = 1.0;
  MaternParams theta;
  double kappa_hat = std::numeric_limits<double>::quiet_NaN();
  double objective = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  bool selected = false;
};

/// Bias, variance and MSE of one estimated quantity against its true value.
struct ErrorStats {
  std::size_t count = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double bias = std::numeric_limits<double>::quiet_NaN();
  double variance = std::numeric_limits<double>::quiet_NaN();
  double mse = std::numeric_limits<double>::quiet_NaN();
};

inline ErrorStats error_stats(const std::vector<double>& xs, double truth) {
  ErrorStats s;
  s.count = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double v = 0.0;
  double e = 0.0;
  for (double x : xs) {
    v += (x - s.mean) * (x - s.mean);
    e += (x - truth) * (x - truth);
  }
  s.bias = s.mean - truth;
  s.variance = v / static_cast<double>(xs.size());
  s.mse = e / static_cast<double>(xs.size());
  return s;
}

/// Per-q summary; "s" holds the estimates at the selected q.
struct SweepSummaryEntry {
  std::string label;  // q value, or "s"
  ErrorStats sigma2, beta, nu, kappa;
};

struct SweepOutput {
  std::vector<SweepRow> rows;
  std::vector<SweepSummaryEntry> summary;
  std::map<double, std::size_t> selected_q_histogram;
  std::vector<std::string> failures;
};

/// Rows for one repetition. Never throws: failures become non-converged rows.
inline std::vector<SweepRow> run_repetition(const ExperimentConfig& cfg, std::size_t rep,
                                            std::string& failure) {
  std::vector<SweepRow> rows;
  auto failed_rows = [&](const std::string& why) {
    failure = "repetition " + std::to_string(rep) + ": " + why;
    rows.clear();
    for (double q : cfg.q_grid.grid) {
      SweepRow row;
      row.repetition = rep;
      row.q = q;
      rows.push_back(row);
    }
    return rows;
  };
  try {
    auto sc = cfg.sim;
    sc.seed = cfg.repetition_seed(rep);
    const auto data = sim::simulate(sc);
    const MaternParams init = cfg.init ? *cfg.init : default_init(data.reps, cfg.bounds);
    const auto prof = fit_profile(data.reps, data.locs, cfg.q_grid.grid, cfg.bounds, init, cfg.fit);

    FitCache cache(data.reps, data.locs, cfg.bounds, init, cfg.fit);
    for (const auto& f : prof.fits) cache.insert(f);

    std::optional<double> q_star;
    if (cfg.selector == Selector::kKappa) {
      q_star = select_q_kappa(cache.as_fit_fn(), cfg.q_grid).q_star;
    } else if (cfg.selector == Selector::kSqv) {
      q_star = select_q_sqv(cache.as_fit_fn(), make_se_fn(data.reps, data.locs), data.reps.m(),
                            cfg.q_grid)
                   .q_star;
    }

    auto to_row = [&](const FitResult& f, const std::string& kind) {
      SweepRow row;
      row.repetition = rep;
      row.kind = kind;
      row.q = f.q;
      row.theta = f.theta_hat;
      row.objective = f.objective;
      row.converged = f.converged && f.error.empty();
      row.kappa_hat = f.error.empty() ? kappa(f.theta_hat) : row.kappa_hat;
      row.selected = q_star && *q_star == f.q;
      return row;
    };
    for (const auto& f : prof.fits) rows.push_back(to_row(f, "profile"));
    if (q_star) rows.push_back(to_row(cache.fit_at(*q_star), "selection"));
    return rows;
  } catch (const std::exception& e) {
    return failed_rows(e.what());
  }
}

inline SweepOutput summarize(const ExperimentConfig& cfg, std::vector<SweepRow> rows,
                             std::vector<std::string> failures) {
  SweepOutput out;
  out.rows = std::move(rows);
  out.failures = std::move(failures);
  const auto& truth = cfg.sim.theta;
  auto entry_for = [&](const std::string& label, auto pred) {
    std::vector<double> s2, b, nu, k;
    for (const auto& r : out.rows) {
      if (!pred(r) || !r.converged) continue;
      s2.push_back(r.theta.sigma2);
      b.push_back(r.theta.beta);
      nu.push_back(r.theta.nu);
      k.push_back(r.kappa_hat);
    }
    return SweepSummaryEntry{label, error_stats(s2, truth.sigma2), error_stats(b, truth.beta),
                             error_stats(nu, truth.nu), error_stats(k, kappa(truth))};
  };
  for (double q : cfg.q_grid.grid) {
    out.summary.push_back(entry_for(io::format_double(q), [q](const SweepRow& r) {
      return r.kind == "profile" && r.q == q;
    }));
  }
  if (cfg.selector != Selector::kNone) {
    out.summary.push_back(entry_for("s", [](const SweepRow& r) { return r.kind == "selection"; }));
    for (const auto& r : out.rows) {
      if (r.kind == "selection") ++out.selected_q_histogram[r.q];
    }
  }
  return out;
}

/// Runs every repetition (in parallel when threads allow) and gathers rows in
/// repetition order.
inline SweepOutput run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t reps = cfg.repetitions;
  std::vector<std::vector<SweepRow>> per_rep(reps);
  std::vector<std::string> fail(reps);
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, reps));
  if (threads <= 1) {
    for (std::size_t r = 0; r < reps; ++r) per_rep[r] = run_repetition(cfg, r, fail[r]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < reps; r = next++) per_rep[r] = run_repetition(cfg, r, fail[r]);
      });
    }
    for (auto& th : pool) th.join();
  }
  std::vector<SweepRow> rows;
  std::vector<std::string> failures;
  for (std::size_t r = 0; r < reps; ++r) {
    rows.insert(rows.end(), per_rep[r].begin(), per_rep[r].end());
    if (!fail[r].empty()) failures.push_back(fail[r]);
  }
  return summarize(cfg, std::move(rows), std::move(failures));
}

inline void write_sweep_rows(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "repetition,kind,q,sigma2,beta,nu,kappa,objective,converged,selected\n";
  for (const auto& r : rows) {
    out << r.repetition << ',' << r.kind << ',' << io::format_double(r.q) << ','
        << io::format_double(r.theta.sigma2) << ',' << io::format_double(r.theta.beta) << ','
        << io::format_double(r.theta.nu) << ',' << io::format_double(r.kappa_hat) << ','
        << io::format_double(r.objective) << ',' << (r.converged ? 1 : 0) << ','
        << (r.selected ? 1 : 0) << '\n';
  }
}

inline io::Record summary_record(const SweepOutput& out) {
  io::Record rec;
  for (const auto& e : out.summary) {
    const std::string p = "q[" + e.label + "].";
    auto put = [&](const std::string& name, const ErrorStats& s) {
      rec.set(p + name + ".count", s.count);
      rec.set(p + name + ".mean", s.mean);
      rec.set(p + name + ".bias", s.bias);
      rec.set(p + name + ".variance", s.variance);
      rec.set(p + name + ".mse", s.mse);
    };
    put("sigma2", e.sigma2);
    put("beta", e.beta);
    put("nu", e.nu);
    put("kappa", e.kappa);
  }
  for (const auto& [q, c] : out.selected_q_histogram) {
    rec.set("selected_q[" + io::format_double(q) + "]", c);
  }
  rec.set("failures", out.failures.size());
  return rec;
}

}  // namespace mlqe

#endif  // MLQE_EXPERIMENT_HPP
