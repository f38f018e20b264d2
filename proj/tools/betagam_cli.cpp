#include "betagam/io.hpp"
#include "betagam/parallel.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace betagam;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotConverged = 2;
constexpr int kExitAllDegenerate = 3;
constexpr int kExitIo = 4;

struct CommonFlags {
  int workers = default_workers();
  double phi_min = 1.0;
  double phi_max = 500.0;
  double delta_abs = 50.0;
  double delta_sum = 100.0;
  double occupancy_min = 0.05;
  int inner_knots = 6;
  int degree = 3;
  int penalty_order = 2;
  int max_iter = 300;
  double tol = 1e-6;

  PhiBounds bounds() const { return {phi_min, phi_max}; }
  DiagnosticConfig diagnostics() const {
    DiagnosticConfig d;
    d.phi_max = phi_max;
    d.delta_abs = delta_abs;
    d.delta_sum = delta_sum;
    d.occupancy_min = occupancy_min;
    return d;
  }
  EmOptions em() const {
    EmOptions e;
    e.max_iter = max_iter;
    e.tol = tol;
    return e;
  }
};

void add_common(CLI::App* cmd, CommonFlags& f, bool model_flags) {
  cmd->add_option("--workers", f.workers, "Concurrent fits (default from BETAGAM_WORKERS)")->check(CLI::PositiveNumber);
  cmd->add_option("--phi-min", f.phi_min, "Lower precision bound")->check(CLI::PositiveNumber);
  cmd->add_option("--phi-max", f.phi_max, "Upper precision bound and saturation level");
  cmd->add_option("--delta-abs", f.delta_abs, "Largest allowed single precision gap in the upper tail");
  cmd->add_option("--delta-sum", f.delta_sum, "Largest allowed summed precision gap in the upper tail");
  cmd->add_option("--occupancy-min", f.occupancy_min, "Minimum posterior share per state");
  cmd->add_option("--max-iter", f.max_iter, "EM iteration cap");
  cmd->add_option("--tol", f.tol, "Relative EM tolerance");
  if (model_flags) {
    cmd->add_option("--inner-knots", f.inner_knots, "Inner knots per covariate");
    cmd->add_option("--degree", f.degree, "Spline degree");
    cmd->add_option("--penalty-order", f.penalty_order, "Difference penalty order");
  }
}

std::string stem_of(const std::string& path) {
  const fs::path p(path);
  return p.extension() == ".csv" ? (p.parent_path() / p.stem()).string() : path;
}

ScenarioConfig read_scenario(const std::string& path) {
  try {
    return load_scenario(path);
  } catch (const std::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

SplineDesign design_for(const Dataset& data, const CommonFlags& f) {
  return build_design(data.x, f.inner_knots, f.degree, f.penalty_order);
}

Observations observations_for(const Dataset& data) {
  Observations obs(data.y);
  if (obs.clipped_count() > 0) {
    std::cerr << "note: " << obs.clipped_count() << " observations clipped into (0, 1)\n";
  }
  return obs;
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed, const std::string& out) {
  ScenarioConfig config = read_scenario(config_path);
  config.seed = seed;
  Rng rng(seed);
  const SimulatedDataset sim = generate_dataset(config, rng);

  Dataset d;
  d.covariate_names = {"x1"};
  d.y = sim.y;
  d.x = sim.x;
  for (int t = 0; t < config.T; ++t) d.t.push_back(t + 1);
  write_dataset(out, d);

  const std::string stem = stem_of(out);
  std::string truth = "t,z,mu\n";
  for (int t = 0; t < config.T; ++t) {
    truth += std::to_string(t + 1) + "," + std::to_string(sim.z[static_cast<std::size_t>(t)] + 1) + "," +
             format_double(sim.true_mu[t]) + "\n";
  }
  write_text(stem + ".truth.csv", truth);

  const SplineDesign design = build_design(sim.x, config.inner_knots, 3, 2);
  ModelParams truth_params;
  truth_params.chain = config.true_chain();
  truth_params.design = design.spec;
  const auto betas = true_beta_equivalents(config, design.spec);
  for (int k = 0; k < config.K_true; ++k) {
    truth_params.states.push_back({betas[static_cast<std::size_t>(k)], config.phi_true[static_cast<std::size_t>(k)]});
  }
  nlohmann::json tj;
  tj["scenario"] = nlohmann::json::parse(scenario_to_json(config));
  tj["truth"] = params_to_json(truth_params);
  write_text(stem + ".truth.json", tj.dump(2) + "\n");
  std::cout << "wrote " << config.T << " rows to " << out << "\n";
  return kExitOk;
}

int cmd_fit(const std::string& data_path, int K, double lambda, int n_starts, std::uint64_t seed,
            const std::string& out, const std::string& report_path, const CommonFlags& f) {
  const Dataset data = read_dataset(data_path);
  const Observations obs = observations_for(data);
  const SplineDesign design = design_for(data, f);
  MultiStartOptions ms;
  ms.n_starts = n_starts;
  ms.seed = seed;
  ms.workers = f.workers;
  ms.bounds = f.bounds();
  ms.em = f.em();
  const MultiStartResult res = multi_start_fit(obs, design, K, lambda, ms);
  ModelReport report = make_report(res.best, design, f.diagnostics());
  report.seed = seed;
  report.n_starts = n_starts;
  report.best_median_gap = res.best_median_gap;
  report.failed_starts = res.failed_starts;
  report.clipped = obs.clipped_count();
  save_model(out, res.best.params, report);
  std::ostringstream text;
  write_report(text, res.best.params, report);
  std::cout << text.str();
  if (!report_path.empty()) write_text(report_path, text.str());
  if (!report.converged) {
    std::cerr << "warning: EM did not converge; the saved model is marked converged=false\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_select(const std::string& data_path, const std::vector<int>& Ks, const std::vector<double>& lambdas,
               int n_starts, bool warm, std::uint64_t seed, const std::string& out_dir, const CommonFlags& f) {
  const Dataset data = read_dataset(data_path);
  const Observations obs = observations_for(data);
  const SplineDesign design = design_for(data, f);
  fs::create_directories(out_dir);
  GridOptions g;
  g.K_set = Ks;
  g.lambda_set = lambdas;
  g.diagnostics = f.diagnostics();
  g.fit.n_starts = n_starts;
  g.fit.seed = seed;
  g.fit.bounds = f.bounds();
  g.fit.em = f.em();
  g.workers = f.workers;
  g.warm_continuation = warm;
  const std::string grid_path = (fs::path(out_dir) / "grid.csv").string();
  GridResult result;
  try {
    result = grid_search(obs, design, g);
  } catch (const NoValidModelError& e) {
    write_grid_csv(grid_path, e.grid().cells);
    std::cerr << "error: " << e.what() << "; grid written to " << grid_path << "\n";
    return kExitAllDegenerate;
  }
  write_grid_csv(grid_path, result.cells);
  const Selection& sel = *result.chosen;
  for (const auto& [k, idx] : sel.per_k) {
    const GridCell& c = result.cells[idx];
    std::cout << "K=" << k << " lambda*=" << format_double(c.lambda) << " AIC=" << format_double(c.crit.aic)
              << " BIC=" << format_double(c.crit.bic) << " ICL=" << format_double(c.crit.icl) << "\n";
  }
  std::cout << "selected K*=" << sel.K << " lambda*=" << format_double(sel.lambda) << "\n";
  const GridCell& chosen = result.cells[sel.cell];
  ModelReport report = make_report(*chosen.fit, design, f.diagnostics());
  report.seed = cell_seed(seed, chosen.K, sel.cell % lambdas.size());
  report.n_starts = n_starts;
  report.clipped = obs.clipped_count();
  save_model((fs::path(out_dir) / "model.json").string(), chosen.fit->params, report);
  return chosen.converged ? kExitOk : kExitNotConverged;
}

int cmd_decode(const std::string& model_path, const std::string& data_path, const std::string& out) {
  const LoadedModel model = load_model(model_path);
  const Dataset data = read_dataset(data_path);
  const Observations obs = observations_for(data);
  const SplineDesign design = rebuild_design(model.params.design, data.x);
  const Eigen::MatrixXd log_em = log_density_matrix(obs, design, model.params.states);
  const std::vector<int> path = viterbi(log_em, model.params.chain);
  const Posteriors post = forward_backward(log_em, model.params.chain);
  const int K = model.params.num_states();
  std::string text = "t,state";
  for (int k = 1; k <= K; ++k) text += ",gamma_" + std::to_string(k);
  text += "\n";
  for (std::size_t t = 0; t < path.size(); ++t) {
    text += std::to_string(data.t[t]) + "," + std::to_string(path[t] + 1);
    for (int k = 0; k < K; ++k) text += "," + format_double(post.gamma(static_cast<Eigen::Index>(t), k));
    text += "\n";
  }
  write_text(out, text);
  return kExitOk;
}

int cmd_bootstrap(const std::string& model_path, const std::string& data_path, int B, double alpha,
                  std::uint64_t seed, int n_starts, const std::string& out_dir, const CommonFlags& f) {
  const LoadedModel model = load_model(model_path);
  const Dataset data = read_dataset(data_path);
  const SplineDesign design = rebuild_design(model.params.design, data.x);
  fs::create_directories(out_dir);
  BootstrapOptions opt;
  opt.B = B;
  opt.alpha = alpha;
  opt.seed = seed;
  opt.n_starts = n_starts;
  opt.workers = f.workers;
  opt.diagnostics = f.diagnostics();
  opt.em = f.em();
  const BootstrapEnsemble ens = bootstrap_ensemble(model.params, design, opt);
  write_text((fs::path(out_dir) / "ensemble.json").string(), ensemble_to_json(ens).dump(2) + "\n");
  IntervalTable table;
  try {
    table = percentile_intervals(ens, model.params, alpha, opt.curve_points);
  } catch (const InsufficientReplicatesError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNotConverged;
  }
  write_intervals_csv((fs::path(out_dir) / "intervals.csv").string(), table);
  write_curves_csv((fs::path(out_dir) / "curves.csv").string(), table);
  for (const auto& r : table.rows) {
    if (r.bias_warning) std::cerr << "warning: estimate of " << r.parameter << " lies outside its interval\n";
  }
  std::cout << table.n_valid << " of " << B << " replicates valid\n";
  for (const auto& r : table.rows) {
    std::cout << r.parameter << " " << format_double(r.estimate) << " [" << format_double(r.lower) << ", "
              << format_double(r.upper) << "]\n";
  }
  return kExitOk;
}

int cmd_mc(const std::string& scenario_path, int R, std::uint64_t seed, const std::string& out_dir,
           const std::vector<double>& lambdas, int n_starts, bool warm, const CommonFlags& f) {
  const ScenarioConfig config = read_scenario(scenario_path);
  FitSpec spec;
  spec.lambdas = lambdas;
  spec.n_starts = n_starts;
  spec.degree = f.degree;
  spec.penalty_order = f.penalty_order;
  spec.bounds = f.bounds();
  spec.diagnostics = f.diagnostics();
  spec.em = f.em();
  spec.warm_continuation = warm;
  fs::create_directories(out_dir);
  const McResult res = run_monte_carlo(config, R, spec, seed, f.workers);
  write_replicates_csv((fs::path(out_dir) / "replicates.csv").string(), res.replicates);
  write_text((fs::path(out_dir) / "summary.json").string(), summary_to_json(res.summary).dump(2) + "\n");
  const McSummary& s = res.summary;
  std::cout << s.n_valid << " of " << s.n_total << " replicates valid\n"
            << "curve RMSE " << format_double(s.curve_rmse.mean) << " (" << format_double(s.curve_rmse.sd) << ")\n"
            << "phi RMSE " << format_double(s.phi_rmse.mean) << " (" << format_double(s.phi_rmse.sd) << ")\n"
            << "A RMSE " << format_double(s.A_rmse.mean) << " (" << format_double(s.A_rmse.sd) << ")\n"
            << "Viterbi accuracy " << format_double(s.accuracy.mean) << " (" << format_double(s.accuracy.sd)
            << ")\n";
  for (const auto& [lambda, count] : s.lambda_tally) {
    std::cout << "lambda " << format_double(lambda) << ": " << count << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beta-GAM hidden Markov models for proportion time series"};
  app.require_subcommand(1);
  CommonFlags f;
  const std::vector<double> default_lambdas{0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0};

  std::string config_path, data_path, model_path, out, out_dir, report_path, scenario_path;
  std::uint64_t seed = 1;
  int K = 2, n_starts = 15, B = 200, R = 20, boot_starts = 5;
  double lambda = 1.0, alpha = 0.05;
  std::vector<int> Ks{2, 3, 4, 5};
  std::vector<double> lambdas = default_lambdas;
  bool warm = false;

  auto* sim = app.add_subcommand("simulate", "Generate a dataset and truth sidecars from a scenario");
  sim->add_option("--config", config_path, "Scenario JSON")->required();
  sim->add_option("--seed", seed, "Random seed")->required();
  sim->add_option("--out", out, "Dataset CSV")->required();

  auto* fit = app.add_subcommand("fit", "Fit one (K, lambda) model");
  fit->add_option("--data", data_path, "Dataset CSV")->required();
  fit->add_option("--K", K, "Number of states")->required()->check(CLI::PositiveNumber);
  fit->add_option("--lambda", lambda, "Smoothing parameter")->required()->check(CLI::NonNegativeNumber);
  fit->add_option("--n-starts", n_starts, "Random starts")->check(CLI::PositiveNumber);
  fit->add_option("--seed", seed, "Random seed");
  fit->add_option("--out", out, "Model JSON")->required();
  fit->add_option("--report", report_path, "Also write the text report here");
  add_common(fit, f, true);

  auto* sel = app.add_subcommand("select", "Two-stage (K, lambda) grid search");
  sel->add_option("--data", data_path, "Dataset CSV")->required();
  sel->add_option("--K", Ks, "Candidate state counts")->delimiter(',');
  sel->add_option("--lambda", lambdas, "Candidate smoothing parameters")->delimiter(',');
  sel->add_option("--n-starts", n_starts, "Random starts per cell")->check(CLI::PositiveNumber);
  sel->add_option("--seed", seed, "Random seed");
  sel->add_option("--out-dir", out_dir, "Output directory")->required();
  sel->add_flag("--warm-continuation", warm, "Also start each lambda from the previous lambda's fit at the same K");
  add_common(sel, f, true);

  auto* dec = app.add_subcommand("decode", "Viterbi path and smoothed posteriors");
  dec->add_option("--model", model_path, "Model JSON")->required();
  dec->add_option("--data", data_path, "Dataset CSV")->required();
  dec->add_option("--out", out, "Output CSV")->required();

  auto* boot = app.add_subcommand("bootstrap", "Parametric bootstrap intervals");
  boot->add_option("--model", model_path, "Model JSON")->required();
  boot->add_option("--data", data_path, "Dataset CSV (covariates are reused)")->required();
  boot->add_option("--B", B, "Replicates")->check(CLI::Range(2, 1000000));
  boot->add_option("--alpha", alpha, "1 - confidence level")->check(CLI::Range(0.0, 1.0));
  boot->add_option("--seed", seed, "Random seed");
  boot->add_option("--n-starts", boot_starts, "Random starts per refit besides the warm start");
  boot->add_option("--out-dir", out_dir, "Output directory")->required();
  add_common(boot, f, false);

  auto* mc = app.add_subcommand("mc", "Monte Carlo study at fixed K");
  mc->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  mc->add_option("--R", R, "Replicates")->check(CLI::PositiveNumber);
  mc->add_option("--seed", seed, "Random seed")->required();
  mc->add_option("--out-dir", out_dir, "Output directory")->required();
  mc->add_option("--lambda", lambdas, "Smoothing grid")->delimiter(',');
  mc->add_option("--n-starts", n_starts, "Random starts per lambda")->check(CLI::PositiveNumber);
  mc->add_flag("--warm-continuation", warm, "Also start each lambda from the previous lambda's fit");
  add_common(mc, f, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitIo;
  }

  try {
    if (*sim) return cmd_simulate(config_path, seed, out);
    if (*fit) return cmd_fit(data_path, K, lambda, n_starts, seed, out, report_path, f);
    if (*sel) return cmd_select(data_path, Ks, lambdas, n_starts, warm, seed, out_dir, f);
    if (*dec) return cmd_decode(model_path, data_path, out);
    if (*boot) return cmd_bootstrap(model_path, data_path, B, alpha, seed, boot_starts, out_dir, f);
    if (*mc) return cmd_mc(scenario_path, R, seed, out_dir, lambdas, n_starts, warm, f);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
