// sparsity-audit: fit partially linear regressions with many controls,
// audit the sparsity assumption behind lasso-style estimators, sweep
// normalization choices, and run the supporting Monte Carlo experiments.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "spaud/harness.hpp"
#include "spaud/rng.hpp"
#include "spaud/stats.hpp"
#include "spaud/theory.hpp"

namespace fs = std::filesystem;
using namespace spaud;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_tag(const std::string& canonical_config) {
  std::ostringstream os;
  os << std::hex << fnv1a(canonical_config);
  return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw input_error("cannot write output file: " + path.string());
  out << content;
}

struct CommonOpts {
  std::string data_path;
  std::string recipe_path;
  std::string outcome = "y";
  std::string treatment = "d";
  std::string cluster;
  std::string output_dir = ".";
  std::string format = "json";
  double level = 0.05;
  std::uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts* o, bool needs_data) {
  cmd->add_option("--data", o->data_path, "CSV data file (header row)")
      ->required(needs_data);
  cmd->add_option("--recipe", o->recipe_path, "model recipe file")
      ->required(needs_data);
  cmd->add_option("--outcome", o->outcome, "outcome column");
  cmd->add_option("--treatment", o->treatment, "treatment column");
  cmd->add_option("--cluster", o->cluster, "cluster id column");
  cmd->add_option("--out", o->output_dir, "output directory");
  cmd->add_option("--format", o->format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--level", o->level, "test level")
      ->check(CLI::Range(1e-6, 1.0 - 1e-6));
  cmd->add_option("--seed", o->seed, "random seed");
  cmd->add_option("--threads", o->threads, "worker threads (0 = auto)");
}

struct LoadedModel {
  DataTable data;
  Recipe recipe;
  Vector y;
  Vector d;
  std::optional<std::vector<int>> cluster;
};

std::vector<int> cluster_codes(const DataTable& data, const std::string& name) {
  const auto& raw = data.text_column(name);
  std::map<std::string, int> codes;
  std::vector<int> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto it = codes.try_emplace(raw[i], static_cast<int>(codes.size())).first;
    out[i] = it->second;
  }
  return out;
}

LoadedModel load_model(const CommonOpts& o) {
  LoadedModel m{DataTable::read_csv(o.data_path), {}, {}, {}, {}};
  std::ifstream rin(o.recipe_path);
  if (!rin) throw input_error("cannot open recipe file: " + o.recipe_path);
  std::stringstream buf;
  buf << rin.rdbuf();
  m.recipe = parse_recipe(buf.str());
  m.y = m.data.numeric_column(o.outcome);
  m.d = m.data.numeric_column(o.treatment);
  if (!o.cluster.empty()) m.cluster = cluster_codes(m.data, o.cluster);
  return m;
}

std::string canonical(const CommonOpts& o, const std::string& extra) {
  std::ostringstream os;
  os << "data=" << o.data_path << "\nrecipe=" << o.recipe_path
     << "\noutcome=" << o.outcome << "\ntreatment=" << o.treatment
     << "\ncluster=" << o.cluster << "\nlevel=" << o.level
     << "\nseed=" << o.seed << "\n" << extra;
  return os.str();
}

fs::path out_path(const CommonOpts& o, const std::string& stem,
                  const std::string& tag, const std::string& ext) {
  fs::create_directories(o.output_dir);
  return fs::path(o.output_dir) / (stem + "_" + tag + "." + ext);
}

int run_fit(const CommonOpts& o, const std::string& estimator) {
  LoadedModel m = load_model(o);
  DesignMatrix design = resolve_collinearity(build_design(m.recipe, m.data));
  const std::vector<int>* cl = m.cluster ? &*m.cluster : nullptr;

  ProjectionBundle wb = rank_revealing_decompose(design.X);
  OlsFit ols = ols_fwl(m.y, m.d, wb, cl);
  SbeFit sbe = estimator == "double_t"
                   ? double_t_selection(m.y, m.d, design, 2.575, cl)
                   : post_double_selection(m.y, m.d, design, cl);
  EfficiencyReport eff =
      efficiency_report(ols, static_cast<int>(design.rows()), ols.rank_used);

  nlohmann::json j;
  j["n"] = design.rows();
  j["p"] = design.cols();
  j["rank_used"] = ols.rank_used;
  j["ols"] = {{"beta", ols.beta}, {"se", ols.se}, {"clustered", ols.clustered}};
  j["sbe"] = {{"method", estimator},
              {"beta", sbe.beta},
              {"se", sbe.se},
              {"selected", sbe.selected_union.size()},
              {"clustered", sbe.clustered}};
  j["efficiency"] = {{"p_over_n", eff.p_over_n},
                     {"kappa", eff.kappa},
                     {"kappa_is_default", eff.kappa_is_default},
                     {"gain", eff.gain},
                     {"sigma2_dtilde_hat", eff.sigma2_dtilde_hat}};

  const std::string tag = hash_tag(canonical(o, "cmd=fit\nestimator=" + estimator));
  const fs::path path = out_path(o, "fit", tag, "json");
  write_file(path, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n[written] " << path.string() << "\n";
  return 0;
}

int run_test_cmd(const CommonOpts& o, bool with_rf) {
  LoadedModel m = load_model(o);
  DesignMatrix design = resolve_collinearity(build_design(m.recipe, m.data));
  BatteryConfig cfg;
  cfg.level = o.level;
  cfg.include_reduced_form = with_rf;
  cfg.cluster_ids = m.cluster ? &*m.cluster : nullptr;
  BatteryResult res = run_test_battery(m.y, m.d, design, cfg);

  const std::string tag = hash_tag(canonical(o, "cmd=test\nrf=" +
                                                  std::to_string(with_rf)));
  if (o.format == "csv") {
    std::ostringstream csv;
    csv << "test,target,statistic,bias_term,var_term,z,p,clustered,degenerate\n";
    auto row = [&csv](const nlohmann::json& j) {
      csv << j["test"].get<std::string>() << ','
          << j["target"].get<std::string>() << ',' << j["statistic"] << ','
          << j["bias_term"] << ',' << j["var_term"] << ',' << j["z"] << ','
          << j["p"] << ',' << j["clustered"] << ',' << j["degenerate"] << '\n';
    };
    for (const auto& item : nlohmann::json::parse(to_json(res))) row(item);
    const fs::path path = out_path(o, "test", tag, "csv");
    write_file(path, csv.str());
    std::cout << csv.str() << "[written] " << path.string() << "\n";
  } else {
    const std::string json = nlohmann::json::parse(to_json(res)).dump(2) + "\n";
    const fs::path path = out_path(o, "test", tag, "json");
    write_file(path, json);
    std::cout << json << "[written] " << path.string() << "\n";
  }
  return 0;
}

int run_sweep_cmd(const CommonOpts& o, const std::string& kind, int draws,
                  bool with_tests, const std::vector<std::string>& estimators,
                  double offset_lo, double offset_hi, bool svg) {
  LoadedModel m = load_model(o);
  SweepConfig cfg;
  cfg.kind = sweep_kind_from_string(kind);
  cfg.n_draws = draws;
  cfg.seed = o.seed;
  cfg.outcome = o.outcome;
  cfg.treatment = o.treatment;
  cfg.cluster = o.cluster;
  cfg.level = o.level;
  cfg.offset_lo = offset_lo;
  cfg.offset_hi = offset_hi;
  cfg.threads = o.threads;
  cfg.estimators.clear();
  for (const auto& e : estimators) cfg.estimators.push_back(estimator_from_string(e));

  std::ostringstream extra;
  extra << "cmd=sweep\nkind=" << kind << "\ndraws=" << draws
        << "\nwith_tests=" << with_tests << "\noffset=" << offset_lo << ","
        << offset_hi;
  const std::string tag = hash_tag(canonical(o, extra.str()));

  SweepResult res = run_sweep(m.data, m.recipe, cfg);
  write_file(out_path(o, "sweep", tag, "json"), to_json(res) + "\n");
  write_file(out_path(o, "sweep", tag, "csv"), to_csv(res));
  std::cout << to_csv(res);
  if (svg) {
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
      std::vector<double> betas;
      for (const auto& d : res.per_draw)
        if (!d.failed && d.estimator == cfg.estimators[e])
          betas.push_back(d.beta);
      if (betas.empty()) continue;
      const std::string name = to_string(cfg.estimators[e]);
      write_file(out_path(o, "sweep_" + name, tag, "svg"),
                 histogram_svg(betas, 24, name + " estimates across draws"));
    }
  }
  if (with_tests) {
    TestSweepResult tres = sweep_tests(m.data, m.recipe, cfg);
    write_file(out_path(o, "sweep_tests", tag, "json"), to_json(tres) + "\n");
    write_file(out_path(o, "sweep_tests", tag, "csv"), to_csv(tres));
    std::cout << to_csv(tres);
  }
  std::cout << "[written] " << out_path(o, "sweep", tag, "csv").string() << "\n";
  return 0;
}

int run_simulate(const CommonOpts& o, int n, int p, int reps, double sigma_y,
                 double sigma_d, bool with_rf, bool use_data) {
  SimulationDesign design;
  design.n = n;
  design.p = p;
  design.reps = reps;
  design.level = o.level;
  design.seed = o.seed;
  design.sigma_Y = sigma_y;
  design.sigma_D = sigma_d;
  design.include_reduced_form = with_rf;
  design.threads = o.threads;
  if (use_data) {
    LoadedModel m = load_model(o);
    DesignMatrix d = resolve_collinearity(build_design(m.recipe, m.data));
    // strip the intercept; the simulator prepends its own
    design.W = d.X.rightCols(d.X.cols() - 1);
    if (m.cluster) design.cluster_ids = m.cluster;
  }
  NullSizeResult res = simulate_null_size(design);

  std::ostringstream extra;
  extra << "cmd=simulate\nn=" << n << "\np=" << p << "\nreps=" << reps
        << "\nsy=" << sigma_y << "\nsd=" << sigma_d << "\nrf=" << with_rf
        << "\nuse_data=" << use_data;
  const std::string tag = hash_tag(canonical(o, extra.str()));
  write_file(out_path(o, "simulate", tag, "csv"), to_csv(res));
  write_file(out_path(o, "simulate", tag, "json"), to_json(res) + "\n");
  std::cout << to_csv(res) << "[written] "
            << out_path(o, "simulate", tag, "csv").string() << "\n";
  return 0;
}

int run_theory(const CommonOpts& o, const std::string& experiment, int p,
               int trials, double q, int cat_zeros, double lambda,
               bool lambda_log, bool lambda_log2, int n, int reps,
               const std::string& law_name) {
  std::ostringstream csv;
  csv << "experiment,p,parameters,estimate,bound,mc_sd\n";
  csv.precision(12);

  if (experiment == "rotation") {
    RotationRarityResult r = rotation_rarity_experiment(p, trials, o.seed);
    const double sd = std::sqrt(std::max(r.mc_probability *
                                             (1 - r.mc_probability), 1e-300) /
                                trials);
    csv << "rotation," << p << ",s=" << r.s << ";trials=" << trials << ','
        << r.mc_probability << ',' << r.log_prob_upper_bound << ',' << sd
        << '\n';
    for (std::size_t k = 0; k < r.beta_check_x.size(); ++k) {
      csv << "rotation_beta_identity," << p << ",x=" << r.beta_check_x[k]
          << ',' << r.beta_check_mc[k] << ',' << r.beta_check_analytic[k]
          << ',' << r.beta_identity_max_dev_sds << '\n';
    }
  } else if (experiment == "categories") {
    CategoryExperimentResult r =
        bernoulli_category_experiment(p, q, cat_zeros, trials, o.seed);
    csv << "categories_singular," << p << ",q=" << q << ";trials=" << trials
        << ',' << r.singular_rate << ",," << '\n';
    const double sd = std::sqrt(
        std::max(r.sparsity_rate * (1 - r.sparsity_rate), 1e-300) /
        std::max(r.full_rank_draws, 1));
    csv << "categories_sparsity," << p << ",q=" << q << ";K=" << cat_zeros
        << ',' << r.sparsity_rate << ',' << r.theorem_bound << ',' << sd
        << '\n';
  } else if (experiment == "hermite") {
    double lam = lambda;
    if (lambda_log) lam = 1.0 / std::log(double(p));
    if (lambda_log2) lam = 1.0 / std::pow(std::log(double(p)), 2);
    HermiteShift h = hermite_shift_coeffs(p, lam);
    const int j_max = std::max(
        1, static_cast<int>(std::sqrt(double(p)) / std::log(double(p))));
    for (int k = 1; k <= j_max; ++k) {
      csv << "hermite," << p << ",lambda=" << lam << ";k=" << k << ','
          << h.log_coef_sq[k] << ',' << k / 2.0 << ",0\n";
    }
    const int s = default_sparsity_index(p);
    csv << "hermite_tail," << p << ",lambda=" << lam << ";s=" << s << ','
        << hermite_tail_mass(h, s) << ',' << double(s) / p << ",0\n";
  } else if (experiment == "qf") {
    ErrorLaw law = ErrorLaw::gaussian;
    if (law_name == "scaled-t8") law = ErrorLaw::scaled_t8;
    else if (law_name == "heteroskedastic-gaussian") law = ErrorLaw::hetero_gaussian;
    else if (law_name != "gaussian")
      throw input_error("unknown error law '" + law_name + "'");
    QuadraticFormResult r =
        quadratic_form_limits_mc(n, p, reps, law, o.seed, o.threads);
    csv << "qf_lln," << p << ",n=" << n << ";reps=" << reps << ";law="
        << to_string(law) << ',' << r.lln_deviation << ",," << '\n';
    csv << "qf_clt_ks," << p << ",n=" << n << ";reps=" << reps << ";law="
        << to_string(law) << ',' << r.clt_ks_statistic << ",0.05,0\n";
  } else {
    throw input_error("unknown experiment '" + experiment + "'");
  }

  std::ostringstream extra;
  extra << "cmd=theory\nexp=" << experiment << "\np=" << p << "\ntrials="
        << trials << "\nq=" << q << "\nK=" << cat_zeros << "\nlambda="
        << lambda << lambda_log << lambda_log2 << "\nn=" << n
        << "\nreps=" << reps << "\nlaw=" << law_name;
  const std::string tag = hash_tag(canonical(o, extra.str()));
  write_file(out_path(o, "theory_" + experiment, tag, "csv"), csv.str());
  std::cout << csv.str() << "[written] "
            << out_path(o, "theory_" + experiment, tag, "csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparsity-audit: partially linear regression with many "
               "controls, sparsity-based estimators, and audits of the "
               "sparsity assumption"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value file mirroring the flags");
  app.allow_config_extras(CLI::config_extras_mode::error);

  CommonOpts fit_o, test_o, sweep_o, sim_o, theory_o;
  std::string fit_estimator = "post_double_lasso";
  bool test_rf = false;

  std::string sweep_kind = "collinear";
  int sweep_draws = 100;
  bool sweep_with_tests = false;
  bool sweep_svg = false;
  std::vector<std::string> sweep_estimators{"ols", "post_double_lasso"};
  double offset_lo = -1.0, offset_hi = 1.0;

  int sim_n = 400, sim_p = 120, sim_reps = 2000;
  double sim_sy = 1.0, sim_sd = 1.0;
  bool sim_rf = false;

  std::string th_experiment;
  int th_p = 64, th_trials = 10000, th_n = 1000, th_reps = 1000, th_K = 30;
  double th_q = 0.5, th_lambda = 0.0;
  bool th_lambda_log = false, th_lambda_log2 = false;
  std::string th_law = "gaussian";

  auto* fit = app.add_subcommand("fit", "OLS and a sparsity-based estimate");
  add_common(fit, &fit_o, true);
  fit->add_option("--estimator", fit_estimator, "post_double_lasso or double_t")
      ->check(CLI::IsMember({"post_double_lasso", "double_t"}));

  auto* test = app.add_subcommand("test", "run the sparsity test battery");
  add_common(test, &test_o, true);
  test->add_flag("--with-rf", test_rf, "include the reduced-form test");

  auto* sweep = app.add_subcommand("sweep", "refit across normalization draws");
  add_common(sweep, &sweep_o, true);
  sweep->add_option("--kind", sweep_kind, "collinear|powers|category_sums|offset")
      ->check(CLI::IsMember({"collinear", "powers", "category_sums", "offset"}));
  sweep->add_option("--draws", sweep_draws, "number of draws")
      ->check(CLI::PositiveNumber);
  sweep->add_flag("--with-tests", sweep_with_tests,
                  "also run the test battery per draw");
  sweep->add_flag("--svg", sweep_svg, "emit estimate histograms as SVG");
  sweep->add_option("--estimators", sweep_estimators,
                    "subset of ols,post_double_lasso,double_t");
  sweep->add_option("--offset-lo", offset_lo, "offset range lower end");
  sweep->add_option("--offset-hi", offset_hi, "offset range upper end");

  auto* simulate = app.add_subcommand(
      "simulate", "null rejection rates over a fixed control matrix");
  add_common(simulate, &sim_o, false);
  simulate->add_option("--n", sim_n, "rows (synthetic W)");
  simulate->add_option("--p", sim_p, "controls (synthetic W)");
  simulate->add_option("--reps", sim_reps, "simulation draws")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--sigma-y", sim_sy, "outcome error sd");
  simulate->add_option("--sigma-d", sim_sd, "treatment error sd");
  simulate->add_flag("--with-rf", sim_rf, "include the reduced-form test");

  auto* theory = app.add_subcommand("theory", "distributional experiments");
  add_common(theory, &theory_o, false);
  theory->add_option("--experiment", th_experiment,
                     "rotation|categories|hermite|qf")
      ->required()
      ->check(CLI::IsMember({"rotation", "categories", "hermite", "qf"}));
  theory->add_option("--p", th_p, "dimension");
  theory->add_option("--trials", th_trials, "Monte Carlo trials");
  theory->add_option("--q", th_q, "Bernoulli entry probability");
  theory->add_option("--K", th_K, "zero count in the target row");
  theory->add_option("--lambda", th_lambda, "shift for the hermite experiment");
  theory->add_flag("--lambda-log", th_lambda_log, "use lambda = 1/log p");
  theory->add_flag("--lambda-log2", th_lambda_log2, "use lambda = 1/log^2 p");
  theory->add_option("--n", th_n, "rows for the qf experiment");
  theory->add_option("--reps", th_reps, "reps for the qf experiment");
  theory->add_option("--law", th_law,
                     "gaussian|scaled-t8|heteroskedastic-gaussian");

  try {
    app.parse(argc, argv);
    if (*fit) return run_fit(fit_o, fit_estimator);
    if (*test) return run_test_cmd(test_o, test_rf);
    if (*sweep)
      return run_sweep_cmd(sweep_o, sweep_kind, sweep_draws, sweep_with_tests,
                           sweep_estimators, offset_lo, offset_hi, sweep_svg);
    if (*simulate)
      return run_simulate(sim_o, sim_n, sim_p, sim_reps, sim_sy, sim_sd,
                          sim_rf, !sim_o.data_path.empty());
    if (*theory)
      return run_theory(theory_o, th_experiment, th_p, th_trials, th_q, th_K,
                        th_lambda, th_lambda_log, th_lambda_log2, th_n,
                        th_reps, th_law);
    std::cerr << app.help() << "\n";
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // CLI11 prints usage; nonzero on bad flags
  } catch (const input_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
