#ifndef MLQE_TOOLS_CLI_HPP
#define MLQE_TOOLS_CLI_HPP

// The `mlqe` command line. run_cli is separate from main so the tests can
// drive it in-process.
//
//   mlqe simulate   --seed S --n N --m M [--layout grid|uniform] [--contam-r R --contam-sd SD]
//   mlqe fit        [--q Q] [--locations F --replicates F]
//   mlqe select-q   [--selector kappa|sqv] [--q-grid 1,0.99,...]
//   mlqe se         [--fit fit.txt] [--q Q]
//   mlqe variogram  [--bins B] [--max-dist D]
//   mlqe sweep      [--reps R] [--selector ...] [--q-grid ...]
//
// Every command accepts --config FILE (flat key=value) and --out DIR; flags
// override file values. The output directory falls back to $MLQE_OUT_DIR,
// then to the current directory.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mlqe/mlqe.hpp"

namespace mlqe::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<double> q;
  std::optional<std::vector<double>> q_grid;
  std::optional<double> contam_r;
  std::optional<double> contam_sd;
  std::optional<std::size_t> n;
  std::optional<std::size_t> m;
  std::optional<std::string> layout;
  std::optional<std::size_t> reps;
  std::optional<std::string> selector;
  std::optional<unsigned> threads;
  std::optional<double> sigma2, beta, nu;
  std::optional<std::string> locations;
  std::optional<std::string> replicates;
  std::optional<std::string> fit_file;
  std::size_t bins = 15;
  double max_dist = -1.0;
  bool no_scale = false;
};

inline void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "key=value configuration file");
  app->add_option("--out", f.out, "output directory");
}

inline void add_sim(CLI::App* app, Flags& f) {
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--n", f.n, "number of locations");
  app->add_option("--m", f.m, "number of replicates");
  app->add_option("--layout", f.layout, "grid or uniform");
  app->add_option("--contam-r", f.contam_r, "probability that a replicate is contaminated");
  app->add_option("--contam-sd", f.contam_sd, "sd of the contaminating noise");
  app->add_option("--sigma2", f.sigma2, "true variance");
  app->add_option("--beta", f.beta, "true range");
  app->add_option("--nu", f.nu, "true smoothness");
}

inline void add_data(CLI::App* app, Flags& f) {
  app->add_option("--locations", f.locations, "locations CSV (default <out>/locations.csv)");
  app->add_option("--replicates", f.replicates, "replicates CSV (default <out>/replicates.csv)");
}

inline void add_grid(CLI::App* app, Flags& f) {
  app->add_option("--q-grid", f.q_grid, "descending q grid starting at 1")->delimiter(',');
  app->add_option("--selector", f.selector, "kappa, sqv or none");
}

/// Configuration from --config (if any) with the flags applied on top.
inline ExperimentConfig resolve(const Flags& f) {
  ExperimentConfig cfg;
  bool out_from_file = false;
  if (f.config) {
    const auto rec = io::Record::load(*f.config);
    cfg = config_from_record(rec);
    out_from_file = rec.has("experiment.output_dir");
  }
  if (f.selector) {
    cfg.selector = parse_selector(*f.selector);
    cfg.q_grid.L = QGridSpec::defaults_for(cfg.selector).L;
  }
  if (f.seed) cfg.sim.seed = *f.seed;
  if (f.n) cfg.sim.n = *f.n;
  if (f.m) cfg.sim.m = *f.m;
  if (f.layout) cfg.sim.layout = sim::parse_layout(*f.layout);
  if (f.contam_r) cfg.sim.contamination.r = *f.contam_r;
  if (f.contam_sd) cfg.sim.contamination.noise_sd = *f.contam_sd;
  if (f.sigma2) cfg.sim.theta.sigma2 = *f.sigma2;
  if (f.beta) cfg.sim.theta.beta = *f.beta;
  if (f.nu) cfg.sim.theta.nu = *f.nu;
  if (f.q_grid) cfg.q_grid.grid = *f.q_grid;
  if (f.reps) cfg.repetitions = *f.reps;
  if (f.threads) cfg.threads = *f.threads;
  if (f.no_scale) cfg.fit.scale = false;
  if (f.out) {
    cfg.output_dir = *f.out;
  } else if (!out_from_file) {
    const char* env = std::getenv("MLQE_OUT_DIR");
    cfg.output_dir = env && *env ? env : ".";
  }
  return cfg;
}

inline std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.output_dir);
  return (std::filesystem::path(cfg.output_dir) / name).string();
}

struct Dataset {
  LocationSet locs;
  ReplicateSet reps;
};

inline Dataset load_dataset(const Flags& f, const ExperimentConfig& cfg) {
  const auto dir = std::filesystem::path(cfg.output_dir);
  auto locs = io::load_locations(f.locations.value_or((dir / "locations.csv").string()));
  auto reps = io::load_replicates(f.replicates.value_or((dir / "replicates.csv").string()));
  if (reps.n() != locs.size()) {
    throw DataError("replicates file has " + std::to_string(reps.n()) +
                    " locations but the locations file has " + std::to_string(locs.size()));
  }
  return {std::move(locs), std::move(reps)};
}

inline io::Record fit_record(const FitResult& r, bool scale) {
  io::Record rec;
  rec.set("q", r.q);
  rec.set("scale", scale);
  io::put_theta(rec, "theta_hat.", r.theta_hat);
  rec.set("kappa", r.error.empty() ? kappa(r.theta_hat) : std::numeric_limits<double>::quiet_NaN());
  rec.set("objective", r.objective);
  rec.set("converged", r.converged);
  rec.set("iterations", r.iterations);
  rec.set("evaluations", r.evaluations);
  io::put_theta(rec, "init.", r.init);
  if (!r.error.empty()) rec.set("error", r.error);
  return rec;
}

inline int cmd_simulate(const Flags& f, std::ostream& out) {
  const auto cfg = resolve(f);
  const auto data = sim::simulate(cfg.sim);
  io::save_locations(out_path(cfg, "locations.csv"), data.locs);
  io::save_replicates(out_path(cfg, "replicates.csv"), data.reps);
  auto meta = config_to_record(cfg);
  meta.set("meta.command", "simulate");
  meta.set("meta.generator", sim::kGeneratorId);
  std::string flags;
  std::size_t count = 0;
  for (bool b : data.contaminated) {
    flags += (flags.empty() ? "" : ",") + std::string(b ? "1" : "0");
    count += b;
  }
  meta.set("meta.contaminated", flags);
  meta.set("meta.contaminated_count", count);
  meta.save(out_path(cfg, "metadata.txt"));
  out << "wrote " << data.locs.size() << " locations x " << data.reps.m() << " replicates ("
      << count << " contaminated) to " << cfg.output_dir << '\n';
  return kOk;
}

inline int cmd_fit(const Flags& f, std::ostream& out) {
  const auto cfg = resolve(f);
  const auto data = load_dataset(f, cfg);
  const double q = f.q.value_or(1.0);
  const auto init = cfg.init ? *cfg.init : default_init(data.reps, cfg.bounds);
  const auto r = fit(data.reps, data.locs, q, cfg.bounds, init, cfg.fit);
  fit_record(r, cfg.fit.scale).save(out_path(cfg, "fit.txt"));
  out << "q=" << io::format_double(q) << " sigma2=" << io::format_double(r.theta_hat.sigma2)
      << " beta=" << io::format_double(r.theta_hat.beta)
      << " nu=" << io::format_double(r.theta_hat.nu) << " converged=" << r.converged << '\n';
  return r.converged ? kOk : kNumerical;
}

inline int cmd_select_q(const Flags& f, std::ostream& out) {
  auto cfg = resolve(f);
  if (cfg.selector == Selector::kNone) throw DomainError("select-q needs --selector kappa or sqv");
  cfg.q_grid.validate(cfg.selector);
  const auto data = load_dataset(f, cfg);
  const auto init = cfg.init ? *cfg.init : default_init(data.reps, cfg.bounds);
  FitCache cache(data.reps, data.locs, cfg.bounds, init, cfg.fit);
  const auto res = cfg.selector == Selector::kKappa
                       ? select_q_kappa(cache.as_fit_fn(), cfg.q_grid)
                       : select_q_sqv(cache.as_fit_fn(), make_se_fn(data.reps, data.locs),
                                      data.reps.m(), cfg.q_grid);
  io::Record rec;
  rec.set("selector", to_string(cfg.selector));
  rec.set("q_star", res.q_star);
  rec.set("reason", to_string(res.reason));
  io::put_theta(rec, "theta_hat.", cache.fit_at(res.q_star).theta_hat);
  rec.set("passes", res.trace.size());
  for (const auto& p : res.trace) {
    const std::string pre = "pass[" + std::to_string(p.pass) + "].";
    rec.set(pre + "grid", io::join(p.grid));
    rec.set(pre + "usable", io::join(p.usable));
    rec.set(pre + "series", io::join(p.series));
    rec.set(pre + "k_star", p.k_star);
    rec.set(pre + "accepted", p.accepted);
  }
  for (std::size_t i = 0; i < res.log.size(); ++i) rec.set("log[" + std::to_string(i) + "]", res.log[i]);
  rec.save(out_path(cfg, "selection.txt"));
  out << "q*=" << io::format_double(res.q_star) << " (" << to_string(res.reason) << ", "
      << res.trace.size() << " passes)\n";
  return kOk;
}

inline int cmd_se(const Flags& f, std::ostream& out) {
  const auto cfg = resolve(f);
  const auto data = load_dataset(f, cfg);
  const auto fit_path =
      f.fit_file.value_or((std::filesystem::path(cfg.output_dir) / "fit.txt").string());
  const auto fit_rec = io::Record::load(fit_path);
  MaternParams theta = io::get_theta(fit_rec, "theta_hat.");
  if (f.sigma2) theta.sigma2 = *f.sigma2;
  if (f.beta) theta.beta = *f.beta;
  if (f.nu) theta.nu = *f.nu;
  const double q = f.q.value_or(fit_rec.get_double("q"));
  const auto parts = sandwich(data.reps, data.locs, theta, q);
  const auto se = std_errs(parts);
  io::Record rec;
  rec.set("q", q);
  io::put_theta(rec, "theta_hat.", theta);
  rec.set("m", parts.m);
  rec.set("log_weight_offset", parts.log_weight_offset);
  for (int i = 0; i < 3; ++i) {
    rec.set("K[" + std::to_string(i) + "]", io::join({parts.K(i, 0), parts.K(i, 1), parts.K(i, 2)}));
  }
  for (int i = 0; i < 3; ++i) {
    rec.set("J[" + std::to_string(i) + "]", io::join({parts.J(i, 0), parts.J(i, 1), parts.J(i, 2)}));
  }
  rec.set("se", io::join({se.se[0], se.se[1], se.se[2]}));
  rec.set("se_classical", io::join({se.classical[0], se.classical[1], se.classical[2]}));
  rec.set("j_convention", to_string(se.convention));
  rec.set("j_condition", se.condition);
  rec.save(out_path(cfg, "se.txt"));
  out << "se=" << io::join({se.se[0], se.se[1], se.se[2]}) << " (J " << to_string(se.convention)
      << ")\n";
  return kOk;
}

inline int cmd_variogram(const Flags& f, std::ostream& out) {
  const auto cfg = resolve(f);
  const auto data = load_dataset(f, cfg);
  const auto curves = replicate_variograms(data.reps, data.locs, f.bins, f.max_dist);
  const auto path = out_path(cfg, "variogram.csv");
  std::ofstream csv(path);
  if (!csv) throw DataError("cannot open '" + path + "' for writing");
  csv << "replicate_id,bin_center,gamma,count\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    for (std::size_t b = 0; b < curves[i].bin_centers.size(); ++b) {
      csv << i << ',' << io::format_double(curves[i].bin_centers[b]) << ','
          << (curves[i].counts[b] ? io::format_double(curves[i].gamma[b]) : std::string("nan"))
          << ',' << curves[i].counts[b] << '\n';
    }
  }
  out << "wrote " << curves.size() << " curves to " << path << '\n';
  return kOk;
}

inline int cmd_sweep(const Flags& f, std::ostream& out) {
  const auto cfg = resolve(f);
  const auto res = run_sweep(cfg);
  {
    const auto path = out_path(cfg, "sweep_rows.csv");
    std::ofstream csv(path);
    if (!csv) throw DataError("cannot open '" + path + "' for writing");
    write_sweep_rows(csv, res.rows);
  }
  auto summary = summary_record(res);
  for (std::size_t i = 0; i < res.failures.size(); ++i) {
    summary.set("failure[" + std::to_string(i) + "]", res.failures[i]);
  }
  summary.save(out_path(cfg, "sweep_summary.txt"));
  auto meta = config_to_record(cfg);
  meta.set("meta.command", "sweep");
  meta.set("meta.generator", sim::kGeneratorId);
  meta.save(out_path(cfg, "metadata.txt"));
  out << "sweep: " << cfg.repetitions << " repetitions, " << res.rows.size() << " rows, "
      << res.failures.size() << " failed repetitions\n";
  return kOk;
}

/// Parses argv, runs one command and maps exceptions to exit codes.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Maximum Lq-likelihood estimation for Matern random fields"};
  app.require_subcommand(1);
  Flags f;

  auto* simulate = app.add_subcommand("simulate", "generate a seeded dataset");
  add_common(simulate, f);
  add_sim(simulate, f);

  auto* fit_cmd = app.add_subcommand("fit", "fit theta at one q");
  add_common(fit_cmd, f);
  add_data(fit_cmd, f);
  fit_cmd->add_option("--q", f.q, "q in (0, 1]");
  fit_cmd->add_flag("--no-scale", f.no_scale, "optimize the unscaled Lq objective");

  auto* select = app.add_subcommand("select-q", "choose q by grid refinement");
  add_common(select, f);
  add_data(select, f);
  add_grid(select, f);

  auto* se = app.add_subcommand("se", "sandwich standard errors for a fit");
  add_common(se, f);
  add_data(se, f);
  se->add_option("--fit", f.fit_file, "fit record (default <out>/fit.txt)");
  se->add_option("--q", f.q, "q (default: the fit's q)");
  se->add_option("--sigma2", f.sigma2, "override the fitted variance");
  se->add_option("--beta", f.beta, "override the fitted range");
  se->add_option("--nu", f.nu, "override the fitted smoothness");

  auto* vg = app.add_subcommand("variogram", "per-replicate empirical variograms");
  add_common(vg, f);
  add_data(vg, f);
  vg->add_option("--bins", f.bins, "number of distance bins");
  vg->add_option("--max-dist", f.max_dist, "largest distance (default half the maximum)");

  auto* sweep = app.add_subcommand("sweep", "repeated simulation study");
  add_common(sweep, f);
  add_sim(sweep, f);
  add_grid(sweep, f);
  sweep->add_option("--reps,--repetitions", f.reps, "number of repetitions");
  sweep->add_option("--threads", f.threads, "worker threads (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "mlqe: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(f, out);
    if (fit_cmd->parsed()) return cmd_fit(f, out);
    if (select->parsed()) return cmd_select_q(f, out);
    if (se->parsed()) return cmd_se(f, out);
    if (vg->parsed()) return cmd_variogram(f, out);
    if (sweep->parsed()) return cmd_sweep(f, out);
  } catch (const DomainError& e) {
    err << "mlqe: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "mlqe: " << e.what() << '\n';
    return kData;
  } catch (const NonSpdError& e) {
    err << "mlqe: " << e.what() << '\n';
    return kNumerical;
  } catch (const NumericalError& e) {
    err << "mlqe: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "mlqe: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "mlqe: " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}

}  // namespace mlqe::cli

#endif  // MLQE_TOOLS_CLI_HPP
