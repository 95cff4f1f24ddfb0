#pragma once

#include "ergow2/config.hpp"
#include "ergow2/io.hpp"

#include <CLI11.hpp>

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace ergow2 {

namespace cli_detail {

// One CLI instance per output directory.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    path_ = dir / ".ergow2.lock";
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    require(f != nullptr, Err::ConfigError,
            "output directory is locked by another run (" + path_.string() + ")");
    std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path path_;
};

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  require(!out.empty(), Err::ConfigError, "empty numeric list '" + s + "'");
  return out;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string model_kind;
  std::optional<double> theta, sigma, sigma0, amplitude, dt;
  int dim = 0;
  std::vector<double> box_arg;
  long seed = -1;
  long record_stride = 0;

  Config config() const {
    return config_path.empty() ? Config{} : Config::parse_file(config_path);
  }

  SDEModel model(const Config& cfg) const {
    ModelSpec spec;
    spec.kind = !model_kind.empty() ? model_kind : cfg.get_string("model", "kind", "ou");
    auto put = [&](const std::string& key, const std::optional<double>& flag_val, double dflt) {
      spec.num[key] = flag_val ? *flag_val : cfg.get_double("model", key, dflt);
    };
    put("theta", theta, spec.kind == "bounded_sigma" ? 4.0 : 1.0);
    put("sigma", sigma, 1.0);
    put("sigma0", sigma0, 1.0);
    put("amplitude", amplitude, 0.5);
    spec.num["d"] = dim > 0 ? dim : cfg.get_double("model", "d", 1.0);
    if (cfg.has("model", "A")) {
      auto a = cfg.get_array("model", "A", {});
      int d = static_cast<int>(std::llround(std::sqrt(static_cast<double>(a.size()))));
      require(d * d == static_cast<int>(a.size()), Err::ConfigError, "model.A: not a square matrix");
      Mat A(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) A(i, j) = a[static_cast<std::size_t>(i * d + j)];
      spec.A = A;
    }
    return build_model(spec);
  }

  Box box(const Config& cfg, int d) const {
    std::vector<double> b = !box_arg.empty() ? box_arg : cfg.get_array("model", "box", {-5.0, 5.0});
    require(b.size() == 2 && b[0] < b[1], Err::ConfigError, "model.box: expected [lo, hi]");
    return Box::cube(d, b[0], b[1]);
  }

  IntegratorConfig sim(const Config& cfg, double default_dt = 1e-3) const {
    IntegratorConfig c;
    c.dt = dt ? *dt : cfg.get_double("simulate", "dt", default_dt);
    c.seed = seed >= 0 ? static_cast<std::uint64_t>(seed)
                       : static_cast<std::uint64_t>(cfg.get_double("simulate", "seed", 0.0));
    c.record_stride = record_stride > 0
                          ? record_stride
                          : static_cast<long>(cfg.get_double("simulate", "record_stride", 1.0));
    return c;
  }

  std::filesystem::path resolve_out(const Config& cfg) const {
    if (!out_dir.empty()) return out_dir;
    std::string from_cfg = cfg.get_string("output", "dir", "");
    if (!from_cfg.empty()) return from_cfg;
    const char* env = std::getenv("ERGOW2_OUTPUT_ROOT");
    return env != nullptr ? std::filesystem::path(env) : std::filesystem::path("out");
  }
};

inline void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "config file path");
  sub->add_option("--out", args.out_dir, "output directory (or $ERGOW2_OUTPUT_ROOT)");
  sub->add_option("--model", args.model_kind, "model kind: ou|cubic|anisotropic_ou|bounded_sigma");
  sub->add_option("--theta", args.theta, "mean reversion");
  sub->add_option("--sigma", args.sigma, "diffusion scale");
  sub->add_option("--sigma0", args.sigma0, "bounded_sigma base scale");
  sub->add_option("--amplitude", args.amplitude, "bounded_sigma modulation in [0,1)");
  sub->add_option("--d", args.dim, "state dimension");
  sub->add_option("--box", args.box_arg, "certificate box lo hi")->expected(2);
  sub->add_option("--dt", args.dt, "Euler step");
  sub->add_option("--seed", args.seed, "RNG seed");
  sub->add_option("--record-stride", args.record_stride, "store every k-th step");
}

inline int cmd_check(const CommonArgs& args) {
  Config cfg = args.config();
  SDEModel model = args.model(cfg);
  DirLock lock(args.resolve_out(cfg));
  PairSampler sampler = PairSampler::default_for(model, args.sim(cfg).seed);
  sampler.box = args.box(cfg, model.dim);
  ConfluenceReport rep = check_confluence(model, sampler, 10000);

  json j;
  j["model"] = model.name;
  j["confluence"] = to_json(rep);
  if (!rep.violated) {
    Mat grid(41, model.dim);
    for (long i = 0; i < grid.rows(); ++i) {
      for (int k = 0; k < model.dim; ++k) {
        grid(i, k) = sampler.box.lo[k] +
                     (sampler.box.hi[k] - sampler.box.lo[k]) * static_cast<double>(i) / (grid.rows() - 1);
      }
    }
    j["hajek"] = to_json(hajek_constants(model, grid, rep.alpha_hat));
  }
  write_text(args.resolve_out(cfg) / "report.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return rep.violated ? 1 : 0;
}

inline int cmd_simulate(const CommonArgs& args, double horizon, double x0, bool occupation) {
  Config cfg = args.config();
  SDEModel model = args.model(cfg);
  DirLock lock(args.resolve_out(cfg));
  double h = horizon > 0 ? horizon : cfg.get_double("simulate", "horizon", 10.0);
  Trajectory traj = integrate(model, Vec::Constant(model.dim, x0), h, args.sim(cfg));
  write_text(args.resolve_out(cfg) / "trajectory.csv", trajectory_csv(traj));
  std::cout << "wrote trajectory.csv (" << traj.n() << " rows)\n";
  if (occupation) {
    write_text(args.resolve_out(cfg) / "occupation.csv",
               measure_csv(occupation_measure(traj).measure));
    std::cout << "wrote occupation.csv\n";
  }
  return 0;
}

inline int cmd_rates(const CommonArgs& args, const std::string& t_list, long reps,
                     const std::string& w2_name, double reg, bool svg) {
  Config cfg = args.config();
  SDEModel model = args.model(cfg);
  DirLock lock(args.resolve_out(cfg));
  std::vector<double> ts =
      !t_list.empty() ? parse_list(t_list) : cfg.get_array("rates", "t", {100.0, 316.0, 1000.0, 3162.0});
  long r = reps > 0 ? reps : static_cast<long>(cfg.get_double("rates", "reps", 32.0));
  W2Spec spec;
  spec.reg = reg;
  std::string method = !w2_name.empty() ? w2_name : cfg.get_string("rates", "w2", "");
  if (method == "quantile") spec.method = W2Method::Quantile1D;
  if (method == "exact") spec.method = W2Method::ExactLP;
  if (method == "entropic") spec.method = W2Method::Entropic;
  IntegratorConfig sim = args.sim(cfg, 1e-2);

  RateTable table = rate_experiment(model, ts, r, spec, sim);
  RateFitResult fit = fit_rate(table.ts(), table.adjusted());
  auto out = args.resolve_out(cfg);
  write_text(out / "rates.csv", rates_csv(table));
  json jf = to_json(fit);
  jf["ref_floor"] = table.ref_floor;
  jf["replications"] = table.replications;
  jf["w2_adj"] = [&] {  // floor-adjusted values the fit ran on
    std::vector<double> v;
    for (const auto& row : table.rows) v.push_back(row.w2_adj);
    return v;
  }();
  write_text(out / "fit.json", jf.dump(2) + "\n");
  if (svg || cfg.get_bool("output", "svg", false)) {
    std::vector<double> ys;
    for (const auto& row : table.rows) ys.push_back(row.w2_mean);
    write_text(out / "rates.svg", svg_line_plot(ts, ys, "W2(nu_t, mu) vs t"));
  }
  std::cout << "slope=" << fit.slope << " ci=" << fit.slope_ci_halfwidth
            << " floor=" << table.ref_floor << "\n";
  return 0;
}

inline int cmd_aspath(const CommonArgs& args, double horizon, long reps) {
  Config cfg = args.config();
  SDEModel model = args.model(cfg);
  DirLock lock(args.resolve_out(cfg));
  double h = horizon > 0 ? horizon : cfg.get_double("simulate", "horizon", 10000.0);
  IntegratorConfig sim = args.sim(cfg, 1e-2);
  std::vector<double> checkpoints;
  for (double t = 100.0; t <= h * 1.0000001; t *= std::sqrt(10.0)) checkpoints.push_back(t);
  require(checkpoints.size() >= 4, Err::ConfigError, "aspath: horizon too short for 4 checkpoints");

  ASPathTable table = as_path_study(model, h, checkpoints, sim);
  std::vector<std::vector<double>> rows;
  for (const auto& r : table.rows) rows.push_back({r.t, r.w2, r.ratio, r.running_max});
  auto out = args.resolve_out(cfg);
  write_text(out / "aspath.csv", to_csv({"t", "w2", "envelope_ratio", "running_max"}, rows));

  DisplacementTable disp = displacement_decay_check(model, checkpoints, reps, sim, table.a_certified);
  rows.clear();
  for (const auto& r : disp.rows) rows.push_back({r.t, r.mean_over_t, r.se, r.path_ratio, r.running_max});
  write_text(out / "displacement.csv",
             to_csv({"t", "mean_disp_over_t", "stderr", "path_ratio", "running_max"}, rows));
  std::cout << "zeta=" << table.zeta << " max_attained_by_1e3=" << table.max_attained_by(1000.0)
            << " disp_slope=" << disp.fit().slope << "\n";
  return 0;
}

inline int cmd_concentration(const CommonArgs& args, const std::string& kind_name,
                             const std::string& z_name, double t, const std::string& ell_list,
                             long reps) {
  Config cfg = args.config();
  DirLock lock(args.resolve_out(cfg));
  ConcentrationKind kind = kind_name == "polynomial" ? ConcentrationKind::Polynomial
                                                     : ConcentrationKind::Bounded;
  ZSpec z;
  if (z_name == "constant") {
    z.kind = ZKind::Constant;
  } else if (z_name == "sin_of_state") {
    z.kind = ZKind::SinOfState;
    z.model = args.model(cfg);
  } else if (z_name == "state_linear") {
    z.kind = ZKind::StateLinear;
    z.model = args.model(cfg);
  } else {
    throw Error(Err::ConfigError, "unknown z spec '" + z_name + "'");
  }
  ConcentrationReport rep = concentration_check(kind, z, t, PsiSpec{}, parse_list(ell_list), reps,
                                                args.sim(cfg));
  auto out = args.resolve_out(cfg);
  write_text(out / "concentration.json", to_json(rep).dump(2) + "\n");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < rep.ell_grid.size(); ++i) {
    rows.push_back({rep.ell_grid[i], rep.empirical_tail[i], rep.binomial_se[i], rep.bound[i]});
  }
  write_text(out / "concentration.csv", to_csv({"ell", "empirical", "stderr", "bound"}, rows));
  std::cout << "wrote concentration.csv (" << rows.size() << " rows)\n";
  return 0;
}

inline int cmd_averaging(const CommonArgs& args, const std::string& kind_name, double g_pow,
                         double u_pow, double T, long reps) {
  Config cfg = args.config();
  DirLock lock(args.resolve_out(cfg));
  AveragingKind kind = AveragingKind::Cesaro;
  if (kind_name == "kronecker") kind = AveragingKind::Kronecker;
  if (kind_name == "stochastic_kronecker") kind = AveragingKind::StochasticKronecker;
  AveragingOptions opts;
  opts.replications = reps;
  opts.seed = args.sim(cfg).seed;
  auto rows = averaging_lemma_check(kind, PowerFunc{1.0, g_pow}, PowerFunc{1.0, u_pow}, T, opts);
  std::vector<std::vector<double>> out_rows;
  for (const auto& r : rows) out_rows.push_back({r.t, r.value, r.se, r.target});
  write_text(args.resolve_out(cfg) / "averaging.csv",
             to_csv({"t", "value", "stderr", "target"}, out_rows));
  std::cout << "final value=" << rows.back().value << " target=" << rows.back().target << "\n";
  return 0;
}

inline int cmd_selftest(const CommonArgs& args) {
  Config cfg = args.config();
  int failures = 0;
  auto report = [&](const std::string& name, bool ok) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
    if (!ok) ++failures;
  };
  {
    // kernel from the [mollifier] table, default triangle_product eps=0.3
    MollifierKernel kern = MollifierKernel::make(
        mollifier_base_from_name(cfg.get_string("mollifier", "base", "triangle_product")),
        cfg.get_double("mollifier", "eps", 0.3), 1);
    NoiseStream ns(3, 3);
    Mat pts(24, 1);
    for (int i = 0; i < 24; ++i) pts(i, 0) = ns.normal(static_cast<std::uint64_t>(i), 0);
    DiscreteMeasure mu = DiscreteMeasure::equal_weights(pts);
    double self_smooth = w2_1d_quantile(mu, convolve(mu, kern.discretize(16))).value;
    report("smoothing bound W2(mu, mu*rho_eps) <= eps*||zeta||",
           self_smooth <= kern.eps * std::sqrt(kern.zeta_sq()) + 1e-6);
  }
  auto r = theoretical_exponents(1, 2.0);
  report("exponent formulas", std::abs(r.l2_exponent - 1.0 / 14) < 1e-15 &&
                                  std::abs(r.as_exponent - 1.0 / 36) < 1e-15 &&
                                  std::abs(r.exp_l2_exponent - 0.125) < 1e-15);
  {
    NoiseStream ns(1, 2);
    Mat p1(32, 1), p2(32, 1);
    for (int i = 0; i < 32; ++i) {
      p1(i, 0) = ns.normal(static_cast<std::uint64_t>(i), 0);
      p2(i, 0) = ns.normal(static_cast<std::uint64_t>(i), 1) * 1.5 + 0.2;
    }
    auto mu = DiscreteMeasure::equal_weights(p1);
    auto nu = DiscreteMeasure::equal_weights(p2);
    auto q = w2_1d_quantile(mu, nu);
    auto e = w2_exact_discrete(mu, nu, false);
    report("quantile == exact_lp", std::abs(q.value - e.value) <= 1e-9 * std::max(1.0, q.value));
    auto s = w2_entropic(mu, nu, 0.05);
    report("entropic within gap", std::abs(s.value - e.value) <= s.gap + 1e-12);
  }
  {
    auto ou = make_ou(1.0, 1.0);
    IntegratorConfig c;
    c.dt = 1e-3;
    Vec x0(1), y0(1);
    x0 << 1.0;
    y0 << -1.0;
    auto cr = simulate_coupled(ou, x0, y0, 2.0, c);
    double expect = std::pow(1.0 - c.dt, 2000);
    report("synchronous coupling identity", std::abs(cr.ratios.back() - expect) < 1e-12);
  }
  {
    auto rows = averaging_lemma_check(AveragingKind::Kronecker, PowerFunc{1.0, 0.0},
                                      PowerFunc{1.0, -0.5}, 10000.0);
    double target = 2.0 * (std::sqrt(10000.0) - 1.0) / 10000.0;
    report("kronecker closed form", std::abs(rows.back().value - target) < 1e-6);
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace cli_detail

// Exit codes: 0 success, 1 assumption violation or runtime failure, 2 config error.
inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"ergodic SDE simulation and Wasserstein-2 convergence experiments"};
  app.require_subcommand(1);

  using namespace cli_detail;
  CommonArgs args;

  auto* check = app.add_subcommand("check", "verify confluence/Lipschitz/Hajek on a box");
  add_common(check, args);

  auto* simulate = app.add_subcommand("simulate", "integrate one trajectory to CSV");
  add_common(simulate, args);
  double horizon = -1, x0 = 0.0;
  bool occupation = false;
  simulate->add_option("--horizon", horizon, "time horizon");
  simulate->add_option("--x0", x0, "initial state (all coordinates)");
  simulate->add_flag("--occupation", occupation, "also write the occupation measure CSV");

  auto* rates = app.add_subcommand("rates", "W2 rate experiment against the invariant");
  add_common(rates, args);
  std::string t_list, w2_name;
  long reps = 0;
  double reg = 0.05;
  bool svg = false;
  rates->add_option("--t", t_list, "comma-separated checkpoint times");
  rates->add_option("--reps", reps, "replications");
  rates->add_option("--w2", w2_name, "quantile|exact|entropic");
  rates->add_option("--reg", reg, "entropic regularization");
  rates->add_flag("--svg", svg, "write rates.svg");

  auto* aspath = app.add_subcommand("aspath", "single-path a.s. envelope and displacement study");
  add_common(aspath, args);
  double as_horizon = -1;
  long as_reps = 200;
  aspath->add_option("--horizon", as_horizon, "path horizon");
  aspath->add_option("--reps", as_reps, "displacement replications");

  auto* conc = app.add_subcommand("concentration", "martingale concentration tails");
  add_common(conc, args);
  std::string kind_name = "bounded", z_name = "constant", ell_list = "1,2,4";
  double conc_t = 4.0;
  long conc_reps = 10000;
  conc->add_option("--kind", kind_name, "bounded|polynomial");
  conc->add_option("--z", z_name, "constant|sin_of_state|state_linear");
  conc->add_option("--t", conc_t, "martingale horizon");
  conc->add_option("--ell", ell_list, "comma-separated thresholds");
  conc->add_option("--reps", conc_reps, "replications");

  auto* avg = app.add_subcommand("averaging", "Cesaro/Kronecker averaging checks");
  add_common(avg, args);
  std::string avg_kind = "kronecker";
  double g_pow = 0.0, u_pow = -0.5, T = 10000.0;
  long avg_reps = 2000;
  avg->add_option("--kind", avg_kind, "cesaro|kronecker|stochastic_kronecker");
  avg->add_option("--gpow", g_pow, "g(s) = s^p");
  avg->add_option("--upow", u_pow, "u(s) = s^p");
  avg->add_option("--T", T, "horizon");
  avg->add_option("--reps", avg_reps, "replications (stochastic)");

  auto* selftest = app.add_subcommand("selftest", "fast internal consistency checks");
  add_common(selftest, args);

  try {
    app.parse(argc, argv);
    if (check->parsed()) return cmd_check(args);
    if (simulate->parsed()) return cmd_simulate(args, horizon, x0, occupation);
    if (rates->parsed()) return cmd_rates(args, t_list, reps, w2_name, reg, svg);
    if (aspath->parsed()) return cmd_aspath(args, as_horizon, as_reps);
    if (conc->parsed()) return cmd_concentration(args, kind_name, z_name, conc_t, ell_list, conc_reps);
    if (avg->parsed()) return cmd_averaging(args, avg_kind, g_pow, u_pow, T, avg_reps);
    if (selftest->parsed()) return cmd_selftest(args);
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    bool config_class = e.code() == Err::ConfigError || e.code() == Err::UnknownModel ||
                        e.code() == Err::InvalidParameter;
    return config_class ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ergow2
