#include "betagam/simulate.hpp"

#include "betagam/numkernel.hpp"
#include "betagam/parallel.hpp"
#include "betagam/uncertainty.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace betagam {

using nlohmann::json;

double MeanFunction::operator()(double x) const {
  return constant + linear * x + quadratic * x * x + sin_amp * std::sin(sin_freq * x) +
         exp_amp * std::exp(exp_rate * x);
}

MeanFunction MeanFunction::builtin(int index) {
  MeanFunction f;
  switch (index) {
    case 1:  // sin(1.5x)
      f.sin_amp = 1.0;
      f.sin_freq = 1.5;
      break;
    case 2:  // -0.5 + 0.4x^2
      f.constant = -0.5;
      f.quadratic = 0.4;
      break;
    case 3:  // 0.8 - 0.3 exp(0.5x)
      f.constant = 0.8;
      f.exp_amp = -0.3;
      f.exp_rate = 0.5;
      break;
    case 4:  // -1 + 0.5x + 0.5 sin(2x)
      f.constant = -1.0;
      f.linear = 0.5;
      f.sin_amp = 0.5;
      f.sin_freq = 2.0;
      break;
    default:
      throw std::invalid_argument("MeanFunction: built-in index must be 1..4");
  }
  return f;
}

ScenarioConfig ScenarioConfig::baseline() { return ScenarioConfig{}; }

ScenarioConfig ScenarioConfig::hard() {
  ScenarioConfig c;
  c.T = 1500;
  c.delta = 0.85;
  return c;
}

void ScenarioConfig::validate() const {
  if (K_true < 1) throw std::invalid_argument("scenario: K_true must be >= 1");
  if (T < 2) throw std::invalid_argument("scenario: T must be >= 2");
  if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument("scenario: delta must lie in [0, 1]");
  if (static_cast<int>(phi_true.size()) != K_true) throw std::invalid_argument("scenario: phi_true needs K_true entries");
  for (double p : phi_true) {
    if (!(p > 0.0) || !std::isfinite(p)) throw std::invalid_argument("scenario: precisions must be positive");
  }
  if (static_cast<int>(mean_functions.size()) != K_true) {
    throw std::invalid_argument("scenario: mean_functions needs K_true entries");
  }
  if (!(x_lo < x_hi)) throw std::invalid_argument("scenario: covariate_range must be increasing");
  if (inner_knots < 0) throw std::invalid_argument("scenario: inner_knots must be >= 0");
}

ChainParams ScenarioConfig::true_chain() const {
  ChainParams c;
  c.pi = Eigen::VectorXd::Constant(K_true, 1.0 / K_true);
  if (K_true == 1) {
    c.A = Eigen::MatrixXd::Ones(1, 1);
    return c;
  }
  c.A = Eigen::MatrixXd::Constant(K_true, K_true, (1.0 - delta) / (K_true - 1));
  c.A.diagonal().setConstant(delta);
  return c;
}

namespace {

MeanFunction parse_mean_function(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s.size() == 2 && s[0] == 'f' && s[1] >= '1' && s[1] <= '4') return MeanFunction::builtin(s[1] - '0');
    throw std::invalid_argument("scenario: unknown mean function '" + s + "'");
  }
  if (!j.is_object()) throw std::invalid_argument("scenario: mean function must be a name or an object");
  MeanFunction f;
  f.constant = j.value("constant", 0.0);
  f.linear = j.value("linear", 0.0);
  f.quadratic = j.value("quadratic", 0.0);
  f.sin_amp = j.value("sin_amp", 0.0);
  f.sin_freq = j.value("sin_freq", 1.0);
  f.exp_amp = j.value("exp_amp", 0.0);
  f.exp_rate = j.value("exp_rate", 1.0);
  return f;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.what());
  }
  ScenarioConfig c;
  try {
    c.T = j.value("T", c.T);
    c.K_true = j.value("K_true", c.K_true);
    c.delta = j.value("delta", c.delta);
    if (j.contains("phi_true")) c.phi_true = j.at("phi_true").get<std::vector<double>>();
    if (j.contains("covariate_range")) {
      const auto r = j.at("covariate_range").get<std::vector<double>>();
      if (r.size() != 2) throw std::invalid_argument("scenario: covariate_range needs two values");
      c.x_lo = r[0];
      c.x_hi = r[1];
    }
    if (j.contains("mean_functions")) {
      c.mean_functions.clear();
      for (const auto& f : j.at("mean_functions")) c.mean_functions.push_back(parse_mean_function(f));
    }
    c.inner_knots = j.value("inner_knots", c.inner_knots);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string scenario_to_json(const ScenarioConfig& config) {
  json j;
  j["T"] = config.T;
  j["K_true"] = config.K_true;
  j["delta"] = config.delta;
  j["phi_true"] = config.phi_true;
  j["covariate_range"] = {config.x_lo, config.x_hi};
  json fs = json::array();
  for (const auto& f : config.mean_functions) {
    fs.push_back({{"constant", f.constant},
                  {"linear", f.linear},
                  {"quadratic", f.quadratic},
                  {"sin_amp", f.sin_amp},
                  {"sin_freq", f.sin_freq},
                  {"exp_amp", f.exp_amp},
                  {"exp_rate", f.exp_rate}});
  }
  j["mean_functions"] = fs;
  j["inner_knots"] = config.inner_knots;
  j["seed"] = config.seed;
  return j.dump(2);
}

SimulatedDataset generate_dataset(const ScenarioConfig& config, Rng& rng) {
  config.validate();
  SimulatedDataset d;
  d.z = sample_chain(config.true_chain(), config.T, rng);
  d.x.resize(config.T);
  d.y.resize(config.T);
  d.true_mu.resize(config.T);
  for (int t = 0; t < config.T; ++t) {
    const auto k = static_cast<std::size_t>(d.z[static_cast<std::size_t>(t)]);
    d.x[t] = config.x_lo + (config.x_hi - config.x_lo) * rng.uniform();
    const double mu = logistic(config.mean_functions[k](d.x[t]));
    const double phi = config.phi_true[k];
    d.true_mu[t] = mu;
    d.y[t] = clip_unit(rng.beta(mu * phi, (1.0 - mu) * phi));
  }
  return d;
}

Eigen::MatrixXd true_curves(const ScenarioConfig& config, const Eigen::VectorXd& grid) {
  Eigen::MatrixXd out(grid.size(), config.K_true);
  for (int k = 0; k < config.K_true; ++k) {
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
      out(g, k) = logistic(config.mean_functions[static_cast<std::size_t>(k)](grid[g]));
    }
  }
  return out;
}

std::vector<Eigen::VectorXd> true_beta_equivalents(const ScenarioConfig& config, const DesignSpec& spec, int points) {
  if (spec.num_covariates() != 1) throw std::invalid_argument("true_beta_equivalents: single-covariate designs only");
  const KnotVector& kv = spec.knots.front();
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(points, kv.lo, kv.hi);
  const Eigen::MatrixXd basis = rebuild_design(spec, grid).basis;
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
  std::vector<Eigen::VectorXd> out;
  for (int k = 0; k < config.K_true; ++k) {
    Eigen::VectorXd eta(points);
    for (int g = 0; g < points; ++g) eta[g] = config.mean_functions[static_cast<std::size_t>(k)](grid[g]);
    out.push_back(qr.solve(eta));
  }
  return out;
}

TruthMetrics score_against_truth(const FitResult& fit, const SplineDesign& design, const ScenarioConfig& config,
                                 const SimulatedDataset& data, int grid_points) {
  const int K = fit.params.num_states();
  if (K != config.K_true) throw std::invalid_argument("score_against_truth: K differs from the truth");
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(grid_points, config.x_lo, config.x_hi);
  const Eigen::MatrixXd truth = true_curves(config, grid);
  const Eigen::MatrixXd est_unaligned = mean_curves(fit.params, rebuild_design(fit.params.design, grid).basis);
  const std::vector<int> order = best_alignment(est_unaligned, truth);
  const ModelParams aligned = permute_states(fit.params, order);

  TruthMetrics m;
  Eigen::MatrixXd est(grid_points, K);
  for (int k = 0; k < K; ++k) est.col(k) = est_unaligned.col(order[static_cast<std::size_t>(k)]);
  m.curve_rmse = std::sqrt((est - truth).squaredNorm() / static_cast<double>(est.size()));
  double se = 0.0;
  for (int k = 0; k < K; ++k) {
    const double d = aligned.states[static_cast<std::size_t>(k)].phi - config.phi_true[static_cast<std::size_t>(k)];
    se += d * d;
  }
  m.phi_rmse = std::sqrt(se / K);
  m.A_rmse = std::sqrt((aligned.chain.A - config.true_chain().A).squaredNorm() / static_cast<double>(K * K));

  const Observations obs(data.y);
  const std::vector<int> path = viterbi(log_density_matrix(obs, design, fit.params.states), fit.params.chain);
  std::vector<int> to_true(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) to_true[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k;
  std::size_t hits = 0;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (to_true[static_cast<std::size_t>(path[t])] == data.z[t]) ++hits;
  }
  m.accuracy = static_cast<double>(hits) / static_cast<double>(path.size());
  return m;
}

McReplicate run_replicate(const ScenarioConfig& config, const FitSpec& spec, std::uint64_t seed, int id) {
  McReplicate rep;
  rep.id = id;
  rep.seed = seed;
  try {
    Rng rng(seed);
    const SimulatedDataset data = generate_dataset(config, rng);
    const SplineDesign design = build_design(data.x, config.inner_knots, spec.degree, spec.penalty_order);
    const Observations obs(data.y);

    std::vector<GridCell> cells;
    std::optional<ModelParams> previous;
    for (std::size_t l = 0; l < spec.lambdas.size(); ++l) {
      MultiStartOptions ms;
      ms.n_starts = spec.n_starts;
      ms.seed = derive_seed(seed, 1 + l);
      ms.bounds = spec.bounds;
      ms.em = spec.em;
      if (spec.warm_continuation) ms.warm_start = previous;
      cells.push_back(fit_cell(obs, design, config.K_true, spec.lambdas[l], ms, spec.diagnostics));
      previous = cells.back().fit->params;
    }
    // Lambda by AIC among unflagged cells; if every cell is flagged the
    // replicate is scored at the overall AIC minimum and marked invalid.
    const std::optional<Selection> sel = select_model(cells);
    std::size_t chosen = 0;
    if (sel) {
      chosen = sel->cell;
    } else {
      for (std::size_t i = 1; i < cells.size(); ++i) {
        if (cells[i].crit.aic < cells[chosen].crit.aic) chosen = i;
      }
    }
    const GridCell& cell = cells[chosen];
    rep.lambda = cell.lambda;
    rep.converged = cell.converged;
    rep.flagged = cell.diagnostics.flagged;
    const TruthMetrics m = score_against_truth(*cell.fit, design, config, data);
    rep.curve_rmse = m.curve_rmse;
    rep.phi_rmse = m.phi_rmse;
    rep.A_rmse = m.A_rmse;
    rep.accuracy = m.accuracy;
  } catch (const std::exception& e) {
    rep.failed = true;
    rep.error = e.what();
  }
  return rep;
}

McSummary summarize_replicates(const std::vector<McReplicate>& replicates) {
  McSummary s;
  s.n_total = static_cast<int>(replicates.size());
  std::vector<const McReplicate*> ok;
  for (const auto& r : replicates) {
    if (r.valid()) ok.push_back(&r);
  }
  s.n_valid = static_cast<int>(ok.size());
  auto stat = [&](double McReplicate::*field) {
    MetricSummary m;
    if (ok.empty()) {
      m.mean = m.sd = std::numeric_limits<double>::quiet_NaN();
      return m;
    }
    double sum = 0.0;
    for (const auto* r : ok) sum += r->*field;
    m.mean = sum / static_cast<double>(ok.size());
    if (ok.size() > 1) {
      double ss = 0.0;
      for (const auto* r : ok) ss += (r->*field - m.mean) * (r->*field - m.mean);
      m.sd = std::sqrt(ss / static_cast<double>(ok.size() - 1));
    }
    return m;
  };
  s.curve_rmse = stat(&McReplicate::curve_rmse);
  s.phi_rmse = stat(&McReplicate::phi_rmse);
  s.A_rmse = stat(&McReplicate::A_rmse);
  s.accuracy = stat(&McReplicate::accuracy);
  for (const auto* r : ok) ++s.lambda_tally[r->lambda];
  return s;
}

McResult run_monte_carlo(const ScenarioConfig& config, int R, const FitSpec& spec, std::uint64_t seed, int workers) {
  if (R < 1) throw std::invalid_argument("run_monte_carlo: R must be >= 1");
  config.validate();
  McResult out;
  out.replicates.resize(static_cast<std::size_t>(R));
  parallel_for(out.replicates.size(), workers, [&](std::size_t r) {
    out.replicates[r] = run_replicate(config, spec, derive_seed(seed, r), static_cast<int>(r));
  });
  out.summary = summarize_replicates(out.replicates);
  return out;
}

}  // namespace betagam
