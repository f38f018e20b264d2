#include "betagam/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

namespace betagam {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || first == last) {
    throw IoError("not a number: '" + text + "'");
  }
  return v;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

long long parse_int(const std::string& text) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    throw IoError("not an integer: '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw IoError("not a boolean: '" + text + "'");
}

std::string csv_safe(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string part;
  std::istringstream ss(s);
  while (std::getline(ss, part, sep)) out.push_back(part);
  return out;
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from_json(const json& a) {
  const auto v = a.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  out.close();
  if (!out) throw IoError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ":1: missing header");
  const std::vector<std::string> header = split_csv(strip_cr(line));
  if (header.size() < 3 || header[0] != "t" || header[1] != "y") {
    throw IoError(path + ":1: header must be t,y,x1[,x2...]");
  }
  Dataset d;
  d.covariate_names.assign(header.begin() + 2, header.end());
  const std::size_t p = d.covariate_names.size();
  std::vector<double> ys;
  std::vector<double> xs;
  long long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv(line);
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    if (f.size() != header.size()) {
      throw IoError(where + "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    }
    try {
      const long long t = parse_int(f[0]);
      if (!d.t.empty() && t != d.t.back() + 1) throw IoError("t must increase by one (previous " + std::to_string(d.t.back()) + ")");
      const double y = parse_double(f[1]);
      if (!(y >= 0.0 && y <= 1.0)) throw IoError("y must lie in [0, 1]");
      d.t.push_back(t);
      ys.push_back(y);
      for (std::size_t j = 0; j < p; ++j) {
        const double x = parse_double(f[2 + j]);
        if (!std::isfinite(x)) throw IoError("covariate is not finite");
        xs.push_back(x);
      }
    } catch (const IoError& e) {
      throw IoError(where + e.what());
    }
  }
  if (d.t.empty()) throw IoError(path + ": no data rows");
  const auto T = static_cast<Eigen::Index>(d.t.size());
  d.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), T);
  d.x.resize(T, static_cast<Eigen::Index>(p));
  for (Eigen::Index t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < p; ++j) d.x(t, static_cast<Eigen::Index>(j)) = xs[static_cast<std::size_t>(t) * p + j];
  }
  return d;
}

void write_dataset(const std::string& path, const Dataset& data) {
  std::string out = "t,y";
  for (const auto& n : data.covariate_names) out += "," + n;
  out += "\n";
  for (Eigen::Index t = 0; t < data.y.size(); ++t) {
    out += std::to_string(data.t[static_cast<std::size_t>(t)]) + "," + format_double(data.y[t]);
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) out += "," + format_double(data.x(t, j));
    out += "\n";
  }
  write_text(path, out);
}

json params_to_json(const ModelParams& params) {
  json j;
  j["K"] = params.num_states();
  j["lambda"] = params.lambda;
  json knots = json::array();
  for (const auto& kv : params.design.knots) {
    knots.push_back({{"degree", kv.degree}, {"lo", kv.lo}, {"hi", kv.hi}, {"inner", kv.inner}});
  }
  j["design"] = {{"penalty_order", params.design.penalty_order}, {"knots", knots}};
  j["bounds"] = {{"phi_min", params.bounds.min}, {"phi_max", params.bounds.max}};
  j["pi"] = vector_json(params.chain.pi);
  json a = json::array();
  for (Eigen::Index i = 0; i < params.chain.A.rows(); ++i) a.push_back(vector_json(params.chain.A.row(i).transpose()));
  j["A"] = a;
  json states = json::array();
  for (const auto& s : params.states) states.push_back({{"phi", s.phi}, {"beta", vector_json(s.beta)}});
  j["states"] = states;
  return j;
}

ModelParams params_from_json(const json& j) {
  try {
    ModelParams p;
    const int K = j.at("K").get<int>();
    p.lambda = j.at("lambda").get<double>();
    const json& d = j.at("design");
    p.design.penalty_order = d.at("penalty_order").get<int>();
    for (const auto& kv : d.at("knots")) {
      p.design.knots.push_back(KnotVector::make(kv.at("degree").get<int>(), kv.at("inner").get<std::vector<double>>(),
                                                kv.at("lo").get<double>(), kv.at("hi").get<double>()));
    }
    p.bounds.min = j.at("bounds").at("phi_min").get<double>();
    p.bounds.max = j.at("bounds").at("phi_max").get<double>();
    p.chain.pi = vector_from_json(j.at("pi"));
    const json& a = j.at("A");
    if (static_cast<int>(a.size()) != K) throw IoError("model: A must have K rows");
    p.chain.A.resize(K, K);
    for (int i = 0; i < K; ++i) {
      const Eigen::VectorXd row = vector_from_json(a.at(static_cast<std::size_t>(i)));
      if (row.size() != K) throw IoError("model: A must be K x K");
      p.chain.A.row(i) = row.transpose();
    }
    for (const auto& s : j.at("states")) {
      StateEmission e;
      e.phi = s.at("phi").get<double>();
      e.beta = vector_from_json(s.at("beta"));
      if (e.beta.size() != p.design.num_columns()) throw IoError("model: coefficient length does not match knots");
      p.states.push_back(std::move(e));
    }
    if (p.num_states() != K || p.chain.pi.size() != K) throw IoError("model: state count mismatch");
    p.chain.validate(1e-8);
    return p;
  } catch (const json::exception& e) {
    throw IoError(std::string("model: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("model: ") + e.what());
  }
}

json model_to_json(const ModelParams& params, const ModelReport& report) {
  json j = params_to_json(params);
  j["schema_version"] = kModelSchemaVersion;
  j["software_version"] = kSoftwareVersion;
  j["seed"] = report.seed;
  j["fit"] = {{"loglik", report.log_likelihood},
              {"penalized_loglik", report.penalized_log_likelihood},
              {"converged", report.converged},
              {"n_iter", report.n_iter},
              {"n_starts", report.n_starts},
              {"best_median_gap", report.best_median_gap},
              {"failed_starts", report.failed_starts},
              {"clipped", report.clipped}};
  j["criteria"] = {{"nu", report.nu}, {"AIC", report.crit.aic}, {"BIC", report.crit.bic}, {"ICL", report.crit.icl}};
  j["diagnostics"] = {{"flagged", report.diagnostics.flagged},
                      {"reasons", report.diagnostics.reasons},
                      {"n_sat", report.diagnostics.n_sat},
                      {"tail_deltas", report.diagnostics.tail_deltas},
                      {"delta_tail", report.diagnostics.delta_tail},
                      {"occupancy", vector_json(report.diagnostics.occupancy)}};
  return j;
}

void save_model(const std::string& path, const ModelParams& params, const ModelReport& report) {
  write_text(path, model_to_json(params, report).dump(2) + "\n");
}

LoadedModel load_model(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
  LoadedModel m;
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kModelSchemaVersion) throw IoError(path + ": unsupported schema_version " + std::to_string(version));
    m.params = params_from_json(j);
    m.report.seed = j.at("seed").get<std::uint64_t>();
    const json& f = j.at("fit");
    m.report.log_likelihood = f.at("loglik").get<double>();
    m.report.penalized_log_likelihood = f.at("penalized_loglik").get<double>();
    m.report.converged = f.at("converged").get<bool>();
    m.report.n_iter = f.at("n_iter").get<int>();
    m.report.n_starts = f.at("n_starts").get<int>();
    m.report.best_median_gap = f.at("best_median_gap").get<double>();
    m.report.failed_starts = f.at("failed_starts").get<int>();
    m.report.clipped = f.at("clipped").get<int>();
    const json& c = j.at("criteria");
    m.report.nu = c.at("nu").get<double>();
    m.report.crit = {c.at("AIC").get<double>(), c.at("BIC").get<double>(), c.at("ICL").get<double>()};
    const json& d = j.at("diagnostics");
    m.report.diagnostics.flagged = d.at("flagged").get<bool>();
    m.report.diagnostics.reasons = d.at("reasons").get<std::vector<std::string>>();
    m.report.diagnostics.n_sat = d.at("n_sat").get<int>();
    m.report.diagnostics.tail_deltas = d.at("tail_deltas").get<std::vector<double>>();
    m.report.diagnostics.delta_tail = d.at("delta_tail").get<double>();
    m.report.diagnostics.occupancy = vector_from_json(d.at("occupancy"));
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return m;
}

ModelReport make_report(const FitResult& fit, const SplineDesign& design, const DiagnosticConfig& diag) {
  ModelReport r;
  r.log_likelihood = fit.log_likelihood;
  r.penalized_log_likelihood = fit.penalized_log_likelihood;
  r.nu = effective_dof(design, fit.posteriors, fit.params).total;
  r.crit = criteria(fit, r.nu);
  const Eigen::VectorXd phi = fit.params.phis();
  r.diagnostics = diagnose(std::span<const double>(phi.data(), static_cast<std::size_t>(phi.size())), fit.posteriors, diag);
  r.converged = fit.converged;
  r.n_iter = fit.n_iter;
  r.seed = fit.seed;
  return r;
}

void write_report(std::ostream& out, const ModelParams& params, const ModelReport& report) {
  const int K = params.num_states();
  out << "K = " << K << ", lambda = " << format_double(params.lambda) << "\n";
  out << "converged: " << (report.converged ? "yes" : "no") << " after " << report.n_iter << " EM iterations\n";
  out << "loglik = " << format_double(report.log_likelihood)
      << ", penalized = " << format_double(report.penalized_log_likelihood) << "\n";
  out << "nu = " << format_double(report.nu) << ", AIC = " << format_double(report.crit.aic)
      << ", BIC = " << format_double(report.crit.bic) << ", ICL = " << format_double(report.crit.icl) << "\n";
  out << "phi:";
  for (const auto& s : params.states) out << " " << format_double(s.phi);
  out << "\nA:\n";
  for (int i = 0; i < K; ++i) {
    out << " ";
    for (int j = 0; j < K; ++j) out << " " << format_double(params.chain.A(i, j));
    out << "\n";
  }
  out << "occupancy:";
  for (Eigen::Index k = 0; k < report.diagnostics.occupancy.size(); ++k) {
    out << " " << format_double(report.diagnostics.occupancy[k]);
  }
  out << "\ndiagnostics: " << (report.diagnostics.flagged ? "flagged (" + join(report.diagnostics.reasons, ';') + ")" : "ok")
      << "\n";
  if (report.n_starts > 0) {
    out << "starts: " << report.n_starts << ", failed " << report.failed_starts
        << ", best-median gap " << format_double(report.best_median_gap) << "\n";
  }
}

void write_grid_csv(const std::string& path, const std::vector<GridCell>& cells) {
  std::string out = "K,lambda,loglik,nu,AIC,BIC,ICL,flagged,reasons,converged\n";
  for (const auto& c : cells) {
    out += std::to_string(c.K) + "," + format_double(c.lambda) + "," + format_double(c.log_likelihood) + "," +
           format_double(c.nu) + "," + format_double(c.crit.aic) + "," + format_double(c.crit.bic) + "," +
           format_double(c.crit.icl) + "," + (c.diagnostics.flagged ? "1" : "0") + "," +
           join(c.diagnostics.reasons, ';') + "," + (c.converged ? "1" : "0") + "\n";
  }
  write_text(path, out);
}

std::vector<GridCell> read_grid_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  if (strip_cr(line) != "K,lambda,loglik,nu,AIC,BIC,ICL,flagged,reasons,converged") {
    throw IoError(path + ":1: unexpected grid header");
  }
  std::vector<GridCell> cells;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_csv(line);
    try {
      if (f.size() != 10) throw IoError("expected 10 fields");
      GridCell c;
      c.K = static_cast<int>(parse_int(f[0]));
      c.lambda = parse_double(f[1]);
      c.log_likelihood = parse_double(f[2]);
      c.nu = parse_double(f[3]);
      c.crit = {parse_double(f[4]), parse_double(f[5]), parse_double(f[6])};
      c.diagnostics.flagged = parse_bool(f[7]);
      c.diagnostics.reasons = split_on(f[8], ';');
      c.converged = parse_bool(f[9]);
      cells.push_back(std::move(c));
    } catch (const IoError& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cells;
}

void write_intervals_csv(const std::string& path, const IntervalTable& table) {
  std::string out = "parameter,estimate,lower,upper,level\n";
  for (const auto& r : table.rows) {
    out += r.parameter + "," + format_double(r.estimate) + "," + format_double(r.lower) + "," +
           format_double(r.upper) + "," + format_double(r.level) + "\n";
  }
  write_text(path, out);
}

void write_curves_csv(const std::string& path, const IntervalTable& table) {
  std::string out = "state,x,mean,lower,upper\n";
  for (const auto& r : table.curves) {
    out += std::to_string(r.state) + "," + format_double(r.x) + "," + format_double(r.mean) + "," +
           format_double(r.lower) + "," + format_double(r.upper) + "\n";
  }
  write_text(path, out);
}

json ensemble_to_json(const BootstrapEnsemble& ensemble) {
  json reps = json::array();
  for (const auto& r : ensemble.replicates) {
    json e = {{"index", r.index},   {"seed", r.seed},     {"converged", r.converged},
              {"degenerate", r.degenerate}, {"failed", r.failed}, {"valid", r.valid()}};
    if (r.failed) {
      e["error"] = r.error;
    } else {
      e["params"] = params_to_json(r.params);
    }
    reps.push_back(std::move(e));
  }
  return {{"B", ensemble.B}, {"base_seed", ensemble.base_seed}, {"replicates", reps}};
}

void write_replicates_csv(const std::string& path, const std::vector<McReplicate>& replicates) {
  std::string out = "replicate,seed,lambda,curve_rmse,phi_rmse,A_rmse,accuracy,converged,flagged,failed,valid,error\n";
  for (const auto& r : replicates) {
    out += std::to_string(r.id) + "," + std::to_string(r.seed) + "," + format_double(r.lambda) + "," +
           format_double(r.curve_rmse) + "," + format_double(r.phi_rmse) + "," + format_double(r.A_rmse) + "," +
           format_double(r.accuracy) + "," + (r.converged ? "1" : "0") + "," + (r.flagged ? "1" : "0") + "," +
           (r.failed ? "1" : "0") + "," + (r.valid() ? "1" : "0") + "," + csv_safe(r.error) + "\n";
  }
  write_text(path, out);
}

std::vector<McReplicate> read_replicates_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  std::vector<McReplicate> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_csv(line);
    try {
      if (f.size() != 12) throw IoError("expected 12 fields");
      McReplicate r;
      r.id = static_cast<int>(parse_int(f[0]));
      r.seed = std::stoull(f[1]);
      r.lambda = parse_double(f[2]);
      r.curve_rmse = parse_double(f[3]);
      r.phi_rmse = parse_double(f[4]);
      r.A_rmse = parse_double(f[5]);
      r.accuracy = parse_double(f[6]);
      r.converged = parse_bool(f[7]);
      r.flagged = parse_bool(f[8]);
      r.failed = parse_bool(f[9]);
      r.error = f[11];
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw IoError(path + ":" + std::to_string(line_no) + ": bad seed");
    } catch (const IoError& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

json summary_to_json(const McSummary& s) {
  auto metric = [](const MetricSummary& m) { return json{{"mean", m.mean}, {"sd", m.sd}}; };
  json tally = json::array();
  for (const auto& [lambda, count] : s.lambda_tally) tally.push_back({{"lambda", lambda}, {"count", count}});
  return {{"n_total", s.n_total},
          {"n_valid", s.n_valid},
          {"curve_rmse", metric(s.curve_rmse)},
          {"phi_rmse", metric(s.phi_rmse)},
          {"A_rmse", metric(s.A_rmse)},
          {"accuracy", metric(s.accuracy)},
          {"lambda_tally", tally}};
}

}  // namespace betagam
