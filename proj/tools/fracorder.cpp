#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fracorder/config.hpp"
#include "fracorder/expr.hpp"
#include "fracorder/forward.hpp"
#include "fracorder/inverse.hpp"
#include "fracorder/io.hpp"
#include "fracorder/laplace.hpp"
#include "fracorder/mlf.hpp"
#include "fracorder/model.hpp"
#include "fracorder/spectral.hpp"

namespace fs = std::filesystem;
using namespace fracorder;

namespace {

// exit codes: 0 ok, 1 verify failure, 2 precondition/usage, 3 solver, 4 no fit
int exit_code(errc c) {
  if (c == errc::precondition) return 2;
  if (c == errc::all_fits_failed) return 4;
  return 3;
}

// one machine-readable line on stderr
void error_line(int code, std::string_view kind, std::string msg) {
  for (char& ch : msg) {
    if (ch == '"') ch = '\'';
    if (ch == '\n') ch = ' ';
  }
  std::fprintf(stderr, "error: kind=%.*s exit=%d message=\"%s\"\n",
               static_cast<int>(kind.size()), kind.data(), code, msg.c_str());
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open '" + path.string() + "' for writing");
  out << body;
  out.flush();
  require(out.good(), "write to '" + path.string() + "' failed");
}

std::vector<double> uniform_nodes(double ell, int count) {
  std::vector<double> xs(static_cast<std::size_t>(count) + 1);
  for (int i = 0; i <= count; ++i)
    xs[static_cast<std::size_t>(i)] = ell * i / count;
  return xs;
}

// expression / tabulated file / constant, sampled uniformly over [0, ell]
std::vector<double> coefficient_samples(const RunConfig& rc, const std::string& expr,
                                        const std::string& file, double constant) {
  if (!expr.empty()) return Expression::parse(expr).sample(uniform_nodes(rc.ell, rc.mesh_size));
  if (!file.empty())
    return read_tabulated_file(file).sample(uniform_nodes(rc.ell, rc.mesh_size));
  return {constant};
}

EigenSystem make_eigs(const RunConfig& rc) {
  if (rc.closed_form) return closed_form_eigs(rc.cc, rc.modes);
  SturmLiouvilleProblem prob;
  prob.ell = rc.ell;
  prob.bc = rc.bc;
  prob.p = coefficient_samples(rc, rc.p_expr, rc.p_file, rc.cc.p);
  prob.c = coefficient_samples(rc, rc.c_expr, rc.c_file, rc.cc.c);
  return solve_eigs_fd(prob, rc.modes, rc.mesh_size);
}

ModalWeights make_weights(const RunConfig& rc, const EigenSystem& eigs, double x0) {
  require(eigs.dim == 1, "trace commands need an interval problem (rectangle is eig-only)");
  switch (rc.initial) {
    case RunConfig::InitialKind::Expr:
      return project_initial_data(eigs, Expression::parse(rc.initial_expr).sample(eigs.mesh), x0);
    case RunConfig::InitialKind::File:
      return project_initial_data(eigs, read_tabulated_file(rc.initial_file).sample(eigs.mesh), x0);
    case RunConfig::InitialKind::Dirac:
    default:
      return project_dirac(eigs, x0);
  }
}

// ---------------------------------------------------------------------------
// commands

int cmd_eig(const RunConfig& rc, const fs::path& out) {
  const EigenSystem eigs = make_eigs(rc);
  WeylFit fit;
  const bool have_weyl = eigs.count() >= 20;
  if (have_weyl) {
    fit = weyl_check(eigs, eigs.dim);
    std::printf("weyl: slope %s expected %s (c0 %s, c1 %s) %s\n", format_real(fit.slope).c_str(),
                format_real(fit.expected).c_str(), format_real(fit.c0).c_str(),
                format_real(fit.c1).c_str(), fit.pass ? "pass" : "FAIL");
  } else {
    std::printf("weyl: skipped (needs >= 20 modes, have %zu)\n", eigs.count());
  }
  write_text(out / "eigs.csv", eigs_csv(eigs, have_weyl ? &fit : nullptr));
  write_text(out / "phis.csv", phis_csv(eigs));
  std::printf("eigs: %zu modes, lambda_1 = %s, lambda_%zu = %s\n", eigs.count(),
              format_real(eigs.lambdas.front()).c_str(), eigs.count(),
              format_real(eigs.lambdas.back()).c_str());
  std::printf("wrote %s and %s\n", (out / "eigs.csv").string().c_str(),
              (out / "phis.csv").string().c_str());
  return 0;
}

int cmd_trace(const RunConfig& rc, const fs::path& out, double noise_level, std::uint64_t seed,
              bool is_synth) {
  require(rc.has_model, "config: model.orders/model.weights required for this command");
  const EigenSystem eigs = make_eigs(rc);
  const ModalWeights w = make_weights(rc, eigs, rc.x0);
  const TraceSeries tr = synthesize(rc.model, eigs, w, rc.forward, noise_level, seed);

  const int J = std::min(rc.forward.mode_count, static_cast<int>(eigs.count()));
  const double bound = truncation_bound(eigs, rc.model, J, rc.forward.time_grid.t0, w.rhos);

  std::vector<std::pair<std::string, std::string>> meta;
  meta.emplace_back("model.orders", ConfigValue::real_array(rc.model.orders).render());
  meta.emplace_back("model.weights", ConfigValue::real_array(rc.model.weights).render());
  meta.emplace_back("modes", std::to_string(J));
  meta.emplace_back("truncation", format_real(bound));
  if (is_synth) {
    meta.emplace_back("noise_level", format_real(noise_level));
    meta.emplace_back("seed", std::to_string(seed));
  }
  for (const std::string& warning : tr.warnings) meta.emplace_back("warning", warning);

  write_text(out / "trace.csv", trace_csv(tr, meta));
  std::printf("trace: %zu samples on [%s, %s], %d modes, truncation bound %s\n", tr.times.size(),
              format_real(tr.window_t0).c_str(), format_real(tr.window_t1).c_str(), J,
              format_real(bound).c_str());
  for (const std::string& warning : tr.warnings) std::printf("%s\n", warning.c_str());
  std::printf("wrote %s\n", (out / "trace.csv").string().c_str());
  return 0;
}

int cmd_identify(const RunConfig& rc, const std::string& data, const fs::path& out,
                 bool seed_given, std::uint64_t seed) {
  const TraceSeries tr = read_trace_file(data);
  const EigenSystem eigs = make_eigs(rc);
  const ModalWeights w = make_weights(rc, eigs, tr.x0);
  IdentificationConfig icfg = rc.inverse;
  if (seed_given) icfg.seed = seed;

  const IdentificationResult res = select_order(tr, w, eigs, icfg);
  write_text(out / "result.txt", result_document(res, rc.doc));

  std::printf("n = %d\n", res.n);
  std::printf("orders = %s\n", ConfigValue::real_array(res.orders).render().c_str());
  std::printf("weights = %s\n", ConfigValue::real_array(res.weights).render().c_str());
  std::printf("residual = %s\n", format_real(res.residual).c_str());
  if (!res.warning.empty()) std::printf("warning: %s\n", res.warning.c_str());
  std::printf("wrote %s\n", (out / "result.txt").string().c_str());
  return 0;
}

int cmd_laplace(const RunConfig& rc, const std::string& data, const fs::path& out) {
  TraceSeries tr;
  if (!data.empty()) {
    tr = read_trace_file(data);
  } else {
    require(rc.has_model, "config: model.orders/model.weights required without --data");
    const EigenSystem eigs = make_eigs(rc);
    const ModalWeights w = make_weights(rc, eigs, rc.x0);
    tr = synthesize(rc.model, eigs, w, rc.forward, 0.0, 0);
  }

  std::vector<double> etas = rc.laplace_etas;
  if (etas.empty()) {
    // default window: eta*T stays above the tail model's minimum
    const double lo = rc.inverse.tail.min_eta_t / tr.window_t1;
    const double hi = std::max(2.0, lo * 16.0);
    etas.resize(64);
    const double step = std::log(hi / lo) / 63.0;
    for (int k = 0; k < 64; ++k)
      etas[static_cast<std::size_t>(k)] = lo * std::exp(step * k);
    etas.back() = hi;
  }
  const LaplaceSamples ls = numerical_laplace(tr, etas, rc.inverse.tail);

  std::string csv = "# fracorder-laplace v1\neta,value,bias_bound\n";
  for (std::size_t i = 0; i < ls.etas.size(); ++i)
    csv += format_real(ls.etas[i]) + "," + format_real(ls.values[i]) + "," +
           format_real(ls.bias_bounds[i]) + "\n";
  write_text(out / "laplace.csv", csv);

  double worst_bias = 0.0;
  for (double b : ls.bias_bounds) worst_bias = std::max(worst_bias, b);
  std::printf("laplace: %zu samples, eta in [%s, %s], worst bias bound %s\n", ls.etas.size(),
              format_real(ls.etas.front()).c_str(), format_real(ls.etas.back()).c_str(),
              format_real(worst_bias).c_str());
  std::printf("wrote %s\n", (out / "laplace.csv").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// verify suites

struct Case {
  std::string name;
  bool pass = false;
  std::string detail;
};

double uni(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * ((static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53);
}

FractionalModel random_model(std::mt19937_64& rng, int n) {
  std::vector<double> orders{uni(rng, 0.15, 0.55 - 0.17 * (n - 1))};
  for (int k = 1; k < n; ++k) {
    const double next = orders.back() + 0.2 + uni(rng, 0.0, 0.15);
    if (next > 0.96) break;
    orders.push_back(next);
  }
  std::vector<double> weights;
  for (std::size_t i = 0; i < orders.size(); ++i) weights.push_back(uni(rng, 0.5, 2.0));
  return make_model(std::move(orders), std::move(weights));
}

std::vector<double> geometric_grid(double lo, double hi, int count) {
  std::vector<double> xs(static_cast<std::size_t>(count));
  const double step = std::log(hi / lo) / (count - 1);
  for (int i = 0; i < count; ++i) xs[static_cast<std::size_t>(i)] = lo * std::exp(step * i);
  return xs;
}

std::vector<Case> suite_mlf() {
  std::vector<Case> out;
  {
    // 1 - z E_{(a),1+a}(-z) = E_{a,1}(-z) across the series domain
    double worst = 0.0;
    for (double alpha : {0.3, 0.5, 0.8}) {
      const MLParams shifted{1.0 + alpha, {alpha}};
      for (int i = 0; i < 20; ++i) {
        const double t = 0.05 + (2.0 - 0.05) * i / 19.0;
        for (int j = 0; j < 20; ++j) {
          const double s = 0.01 + (2.0 - 0.01) * j / 19.0;  // s = lambda t^alpha <= 2
          const double lambda = s / std::pow(t, alpha);
          const double z = -lambda * std::pow(t, alpha);
          const double lhs = 1.0 + z * eval_multinomial_ml(shifted, std::span(&z, 1)).value;
          const double rhs = eval_ml2(alpha, 1.0, z).value;
          worst = std::max(worst, std::abs(lhs - rhs));
        }
      }
    }
    out.push_back({"single-term reduction", worst <= 1e-10, "worst gap " + format_real(worst)});
  }
  {
    // E_{(1),1}(-z) = exp(-z)
    const MLParams classical{1.0, {1.0}};
    double worst = 0.0;
    for (int i = 0; i <= 40; ++i) {
      const double z = -2.0 * i / 40.0;
      worst = std::max(
          std::abs(eval_multinomial_ml(classical, std::span(&z, 1)).value - std::exp(z)), worst);
    }
    out.push_back({"classical exponential", worst <= 1e-12, "worst gap " + format_real(worst)});
  }
  {
    // mode responses stay in (0, 1] and decay
    const FractionalModel model = make_model({0.3, 0.7}, {1.0, 1.5});
    const std::vector<double> ts = geometric_grid(1e-3, 100.0, 50);
    bool ok = true;
    double worst_rise = 0.0;
    for (double lambda : {1.0, 10.0, 100.0}) {
      const std::vector<double> ys = eval_mode_grid(lambda, model, ts);
      for (std::size_t i = 0; i < ys.size(); ++i) {
        if (!(ys[i] > 0.0 && ys[i] <= 1.0 + 1e-12)) ok = false;
        if (i > 0) worst_rise = std::max(worst_rise, ys[i] - ys[i - 1]);
      }
    }
    ok = ok && worst_rise <= 1e-10;
    out.push_back({"mode response monotone in (0, 1]", ok,
                   "worst rise " + format_real(worst_rise)});
  }
  return out;
}

std::vector<Case> suite_spectral() {
  std::vector<Case> out;
  for (BoundaryCondition bc : {BoundaryCondition::Dirichlet, BoundaryCondition::Neumann}) {
    ConstantCoefficientSpec spec;
    spec.p = 1.3;
    spec.c = -0.4;
    spec.bc = bc;
    const EigenSystem exact = closed_form_eigs(spec, 16);
    SturmLiouvilleProblem prob;
    prob.p = {1.3};
    prob.c = {-0.4};
    prob.ell = 1.0;
    prob.bc = bc;
    const EigenSystem fd = solve_eigs_fd(prob, 16, 768);
    double worst = 0.0;
    for (std::size_t k = 0; k < 16; ++k)
      worst = std::max(worst, std::abs(fd.lambdas[k] - exact.lambdas[k]) /
                                  std::max(1.0, std::abs(exact.lambdas[k])));
    const char* name = bc == BoundaryCondition::Dirichlet ? "dirichlet closed form"
                                                          : "neumann closed form";
    out.push_back({name, worst <= 1e-6, "worst rel gap " + format_real(worst)});
  }
  {
    ConstantCoefficientSpec spec;  // Dirichlet interval defaults
    const WeylFit fit = weyl_check(closed_form_eigs(spec, 40), 1);
    out.push_back({"weyl slope interval", fit.pass,
                   "slope " + format_real(fit.slope) + " expected 2"});
  }
  {
    ConstantCoefficientSpec spec;
    spec.geometry = ConstantCoefficientSpec::Geometry::Rectangle;
    spec.ell_y = 1.3;
    spec.mesh_size = 64;
    const WeylFit fit = weyl_check(closed_form_eigs(spec, 40), 2);
    out.push_back({"weyl slope rectangle", fit.pass,
                   "slope " + format_real(fit.slope) + " expected 1"});
  }
  return out;
}

std::vector<Case> suite_laplace() {
  std::vector<Case> out;
  std::mt19937_64 rng(7);
  ConstantCoefficientSpec spec;
  spec.bc = BoundaryCondition::Neumann;
  const EigenSystem eigs = closed_form_eigs(spec, 40);
  const ModalWeights w = project_dirac(eigs, 0.0);
  ForwardConfig fcfg;
  fcfg.time_grid.t0 = 1e-2;
  fcfg.time_grid.t_max = 50.0;
  fcfg.time_grid.points = 300;
  fcfg.mode_count = 40;
  fcfg.mode_tail_tol = 0.5;  // gate only; transform comparison shares the mode set
  const std::vector<double> etas = geometric_grid(0.05, 2.0, 24);

  for (int trial = 0; trial < 3; ++trial) {
    const FractionalModel model = random_model(rng, trial % 3 + 1);
    const TraceSeries tr = synthesize(model, eigs, w, fcfg, 0.0, 0);
    const LaplaceSamples ls = numerical_laplace(tr, etas, {});
    double worst_ratio = 0.0;
    for (std::size_t i = 0; i < etas.size(); ++i) {
      const double exact = observation_transform(w, model, etas[i]);
      worst_ratio = std::max(worst_ratio, std::abs(ls.values[i] - exact) / ls.bias_bounds[i]);
    }
    out.push_back({"transform vs quadrature, model " + std::to_string(trial + 1),
                   worst_ratio <= 1.0, "worst |gap|/bias " + format_real(worst_ratio)});
  }
  return out;
}

std::vector<Case> suite_roundtrip() {
  std::vector<Case> out;
  ConstantCoefficientSpec spec;  // Dirichlet interval
  const EigenSystem eigs = closed_form_eigs(spec, 60);
  std::vector<double> a(eigs.mesh.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = eigs.mesh[i] * (1.0 - eigs.mesh[i]);
  const ModalWeights w = project_initial_data(eigs, a, 0.31);

  const FractionalModel truth = make_model({0.4, 0.8}, {1.0, 1.5});
  ForwardConfig fcfg;
  fcfg.time_grid.t0 = 1e-3;
  fcfg.time_grid.t_max = 2000.0;
  fcfg.time_grid.points = 300;
  fcfg.mode_count = 60;
  fcfg.mode_tail_tol = 1e-6;
  const TraceSeries tr = synthesize(truth, eigs, w, fcfg, 0.0, 0);

  IdentificationConfig icfg;
  const IdentificationResult res = select_order(tr, w, eigs, icfg);

  out.push_back({"order count", res.n == 2, "n = " + std::to_string(res.n)});
  double worst_alpha = 1.0, worst_q = 1.0;
  if (res.n == 2) {
    worst_alpha = std::max(std::abs(res.orders[0] - 0.4), std::abs(res.orders[1] - 0.8));
    worst_q = std::max(std::abs(res.weights[0] / 1.0 - 1.0), std::abs(res.weights[1] / 1.5 - 1.0));
  }
  out.push_back({"orders within 1e-3", res.n == 2 && worst_alpha <= 1e-3,
                 "worst |alpha gap| " + format_real(worst_alpha)});
  out.push_back({"weights within 1e-2", res.n == 2 && worst_q <= 1e-2,
                 "worst relative q gap " + format_real(worst_q)});
  return out;
}

std::vector<Case> suite_separation() {
  std::vector<Case> out;
  std::mt19937_64 rng(11);
  ConstantCoefficientSpec spec;  // Dirichlet interval
  const EigenSystem eigs = closed_form_eigs(spec, 30);
  const std::vector<double> s0s = geometric_grid(0.05, 5.0, 12);

  int violations = 0, strict = 0, total = 0;
  for (int pair = 0; pair < 20; ++pair) {
    const SymbolW w1{random_model(rng, pair % 3 + 1)};
    const SymbolW w2{random_model(rng, (pair + 1) % 3 + 1)};
    for (double s0 : s0s) {
      const SeparationReport rep = separation_diagnostic(w1, w2, eigs, s0);
      ++total;
      if (!rep.ordering_consistent) ++violations;
      if (rep.termwise_strict) ++strict;
    }
  }
  out.push_back({"symbol ordering transfers to the series", violations == 0,
                 std::to_string(total) + " comparisons, " + std::to_string(violations) +
                     " violations, " + std::to_string(strict) + " strict"});
  return out;
}

int cmd_verify(const std::string& suite) {
  std::vector<Case> cases;
  if (suite == "mlf-identities") {
    cases = suite_mlf();
  } else if (suite == "spectral-closedform") {
    cases = suite_spectral();
  } else if (suite == "laplace-consistency") {
    cases = suite_laplace();
  } else if (suite == "inverse-roundtrip") {
    cases = suite_roundtrip();
  } else if (suite == "separation") {
    cases = suite_separation();
  } else {
    throw PreconditionError(
        "unknown verify suite '" + suite +
        "' (choose mlf-identities | spectral-closedform | laplace-consistency | "
        "inverse-roundtrip | separation)");
  }
  int fails = 0;
  for (const Case& c : cases) {
    std::printf("[%s] %s: %s\n", c.pass ? "pass" : "FAIL", c.name.c_str(), c.detail.c_str());
    if (!c.pass) ++fails;
  }
  std::printf("suite %s: %zu cases, %d failures\n", suite.c_str(), cases.size(), fails);
  return fails == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forward and inverse multi-term fractional diffusion"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_dir = ".", suite;
  std::uint64_t seed = 0;

  CLI::App* eig = app.add_subcommand("eig", "solve the eigensystem, write the CSV bundle");
  CLI::App* fwd = app.add_subcommand("forward", "forward trace for the configured model");
  CLI::App* synth = app.add_subcommand("synth", "forward trace plus seeded Gaussian noise");
  CLI::App* ident = app.add_subcommand("identify", "recover n, orders, weights from a trace");
  CLI::App* lap = app.add_subcommand("laplace", "numerical Laplace transform of a trace");
  CLI::App* verify = app.add_subcommand("verify", "run a named invariant suite");

  for (CLI::App* cmd : {eig, fwd, synth, ident, lap}) {
    cmd->add_option("--config", config_path, "run configuration file")->required();
    cmd->add_option("--out", out_dir, "output directory (default .)");
  }
  ident->add_option("--data", data_path, "observation trace CSV")->required();
  lap->add_option("--data", data_path, "observation trace CSV (default: simulate from config)");
  synth->add_option("--seed", seed, "override synth.seed");
  ident->add_option("--seed", seed, "override inverse.seed");
  verify->add_option("suite", suite, "mlf-identities | spectral-closedform | laplace-consistency | inverse-roundtrip | separation")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    (void)app.exit(e);  // prints help text
    return 0;
  } catch (const CLI::ParseError& e) {
    error_line(2, "usage", e.what());
    return 2;
  }

  try {
    if (verify->parsed()) return cmd_verify(suite);

    const RunConfig rc = RunConfig::load(config_path);
    const fs::path out(out_dir);
    fs::create_directories(out);

    if (eig->parsed()) return cmd_eig(rc, out);
    if (fwd->parsed()) return cmd_trace(rc, out, 0.0, 0, false);
    if (synth->parsed())
      return cmd_trace(rc, out, rc.noise_level, synth->count("--seed") ? seed : rc.seed, true);
    if (ident->parsed())
      return cmd_identify(rc, data_path, out, ident->count("--seed") != 0, seed);
    if (lap->parsed()) return cmd_laplace(rc, data_path, out);
    error_line(2, "usage", "no command given");
    return 2;
  } catch (const Error& e) {
    const int code = exit_code(e.code());
    error_line(code, to_string(e.code()), e.what());
    return code;
  } catch (const std::exception& e) {
    error_line(3, "internal", e.what());
    return 3;
  }
}
