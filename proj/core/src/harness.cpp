#include "spaud/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spaud/rng.hpp"

namespace spaud {

namespace {

double lower_median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

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

struct SweepInputs {
  Vector y;
  Vector d;
  std::optional<std::vector<int>> cluster;
  DataTable table;   // possibly standardized copy (offset sweeps)
  Recipe recipe;
  DesignMatrix base; // built once for permutation-style kinds
};

SweepInputs prepare_sweep(const DataTable& data, const Recipe& recipe,
                          const SweepConfig& cfg) {
  require_input(!cfg.outcome.empty() && !cfg.treatment.empty(),
                "sweep: outcome and treatment column names are required");
  SweepInputs in{Vector(), Vector(), std::nullopt, data, recipe, {}};
  in.y = data.numeric_column(cfg.outcome);
  in.d = data.numeric_column(cfg.treatment);
  if (!cfg.cluster.empty()) in.cluster = cluster_codes(data, cfg.cluster);

  if (cfg.kind == SweepKind::offset) {
    // standardize the baselines feeding hermite clauses before offset draws
    for (const auto& clause : recipe.clauses) {
      const auto* h = std::get_if<HermiteClause>(&clause);
      if (!h) continue;
      Vector z = in.table.numeric_column(h->name);
      const double mean = z.mean();
      const double sd =
          std::sqrt((z.array() - mean).square().sum() / double(z.size() - 1));
      require_input(sd > 0.0, "offset sweep: constant baseline '" + h->name + "'");
      in.table.set_numeric_column(h->name, (z.array() - mean) / sd);
    }
  }
  in.base = build_design(in.recipe, in.table, {});
  return in;
}

// Design for one draw, plus a human-readable record of the choice.
DesignMatrix draw_design(const SweepInputs& in, const SweepConfig& cfg,
                         int draw, std::string* fingerprint) {
  const std::uint64_t draw_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(draw));
  switch (cfg.kind) {
    case SweepKind::collinear: {
      *fingerprint = "perm_seed=" + std::to_string(draw_seed);
      return random_collinearity_resolution(in.base, draw_seed);
    }
    case SweepKind::powers: {
      static constexpr Centering kOptions[] = {
          Centering::none, Centering::mean, Centering::median,
          Centering::range01, Centering::range11};
      auto rng = make_rng(draw_seed);
      std::uniform_int_distribution<int> pick(0, 4);
      NormalizationChoice choice;
      choice.centering = kOptions[pick(rng)];
      *fingerprint = "center=" + to_string(*choice.centering);
      return resolve_collinearity(build_design(in.recipe, in.table, choice));
    }
    case SweepKind::category_sums: {
      NormalizationChoice choice;
      choice.encoding = CatEncoding::sums;
      choice.sums_seed = draw_seed;
      *fingerprint = "sums_seed=" + std::to_string(draw_seed);
      return resolve_collinearity(build_design(in.recipe, in.table, choice));
    }
    case SweepKind::offset: {
      auto rng = make_rng(draw_seed);
      std::uniform_real_distribution<double> unif(cfg.offset_lo, cfg.offset_hi);
      Recipe modified = in.recipe;
      std::ostringstream fp;
      fp.precision(6);
      fp << "offsets=";
      bool first = true;
      for (auto& clause : modified.clauses) {
        auto* h = std::get_if<HermiteClause>(&clause);
        if (!h) continue;
        h->offset = unif(rng);  // independent draw per hermite clause
        if (!first) fp << ",";
        fp << h->offset;
        first = false;
      }
      require_input(!first, "offset sweep: recipe has no hermite clauses");
      *fingerprint = fp.str();
      return resolve_collinearity(build_design(modified, in.table, {}));
    }
  }
  throw input_error("unknown sweep kind");
}

void fit_one(const SweepInputs& in, const DesignMatrix& design,
             EstimatorKind est, const std::vector<int>* cluster,
             SweepDraw* out) {
  switch (est) {
    case EstimatorKind::ols: {
      OlsFit fit = ols_fwl(in.y, in.d, rank_revealing_decompose(design.X),
                           cluster);
      out->beta = fit.beta;
      out->se = fit.se;
      return;
    }
    case EstimatorKind::post_double_lasso: {
      SbeFit fit = post_double_selection(in.y, in.d, design, cluster);
      out->beta = fit.beta;
      out->se = fit.se;
      return;
    }
    case EstimatorKind::double_t: {
      SbeFit fit = double_t_selection(in.y, in.d, design, 2.575, cluster);
      out->beta = fit.beta;
      out->se = fit.se;
      return;
    }
  }
  throw input_error("unknown estimator");
}

}  // namespace

SweepResult run_sweep(const DataTable& data, const Recipe& recipe,
                      const SweepConfig& cfg) {
  require_input(cfg.n_draws >= 1, "run_sweep: n_draws must be >= 1");
  require_input(!cfg.estimators.empty(), "run_sweep: no estimators chosen");
  const SweepInputs in = prepare_sweep(data, recipe, cfg);
  const std::vector<int>* cluster = in.cluster ? &*in.cluster : nullptr;

  SweepResult res;
  res.kind = cfg.kind;
  const std::size_t n_est = cfg.estimators.size();
  res.per_draw.resize(static_cast<std::size_t>(cfg.n_draws) * n_est);

  parallel_for(static_cast<std::size_t>(cfg.n_draws), cfg.threads,
               [&](std::size_t d) {
    std::string fingerprint;
    DesignMatrix design;
    bool design_ok = true;
    std::string design_err;
    try {
      design = draw_design(in, cfg, static_cast<int>(d), &fingerprint);
    } catch (const std::exception& e) {
      design_ok = false;
      design_err = e.what();
    }
    for (std::size_t e = 0; e < n_est; ++e) {
      SweepDraw& slot = res.per_draw[d * n_est + e];
      slot.draw = static_cast<int>(d);
      slot.fingerprint = fingerprint;
      slot.estimator = cfg.estimators[e];
      if (!design_ok) {
        slot.failed = true;
        slot.error = design_err;
        continue;
      }
      try {
        fit_one(in, design, cfg.estimators[e], cluster, &slot);
      } catch (const std::exception& ex) {
        slot.failed = true;
        slot.error = ex.what();
      }
    }
  });

  for (std::size_t e = 0; e < n_est; ++e) {
    SweepSummary s;
    s.estimator = cfg.estimators[e];
    std::vector<double> betas, ses;
    for (int d = 0; d < cfg.n_draws; ++d) {
      const SweepDraw& slot = res.per_draw[static_cast<std::size_t>(d) * n_est + e];
      if (slot.failed) continue;
      betas.push_back(slot.beta);
      ses.push_back(slot.se);
    }
    s.n_ok = static_cast<int>(betas.size());
    if (s.n_ok > 0) {
      s.beta_min = *std::min_element(betas.begin(), betas.end());
      s.beta_max = *std::max_element(betas.begin(), betas.end());
      s.range = s.beta_max - s.beta_min;
      s.median_se = lower_median(ses);
      s.range_in_se_units = s.median_se > 0.0 ? s.range / s.median_se : 0.0;
    }
    if (s.estimator == EstimatorKind::ols && s.n_ok > 0) {
      const double med_beta = lower_median(betas);
      require_numeric(s.range <= 1e-8 * std::abs(med_beta) + 1e-12,
                      "run_sweep: OLS moved across span-preserving draws "
                      "(range " + std::to_string(s.range) + ")");
    }
    res.summary.push_back(s);
  }
  return res;
}

TestSweepResult sweep_tests(const DataTable& data, const Recipe& recipe,
                            const SweepConfig& cfg) {
  require_input(cfg.n_draws >= 1, "sweep_tests: n_draws must be >= 1");
  const SweepInputs in = prepare_sweep(data, recipe, cfg);
  const std::vector<int>* cluster = in.cluster ? &*in.cluster : nullptr;

  struct DrawOut {
    bool failed = false;
    std::vector<std::pair<std::string, double>> p;  // test -> p-value
  };
  std::vector<DrawOut> outs(static_cast<std::size_t>(cfg.n_draws));

  parallel_for(static_cast<std::size_t>(cfg.n_draws), cfg.threads,
               [&](std::size_t d) {
    DrawOut& out = outs[d];
    try {
      std::string fingerprint;
      DesignMatrix design = draw_design(in, cfg, static_cast<int>(d), &fingerprint);
      BatteryConfig bc;
      bc.level = cfg.level;
      bc.include_reduced_form = cfg.include_reduced_form;
      bc.cluster_ids = cluster;
      BatteryResult battery = run_test_battery(in.y, in.d, design, bc);
      out.p.emplace_back("H", battery.hausman.p_two_sided);
      out.p.emplace_back("OR", battery.outcome.p_one_sided);
      out.p.emplace_back("PR", battery.propensity.p_one_sided);
      if (battery.reduced_form)
        out.p.emplace_back("RF", battery.reduced_form->p_one_sided);
    } catch (const std::exception&) {
      out.failed = true;
    }
  });

  TestSweepResult res;
  res.kind = cfg.kind;
  std::vector<std::string> names{"H", "OR", "PR"};
  if (cfg.include_reduced_form) names.push_back("RF");
  for (const auto& name : names)
    res.per_draw_p.emplace_back(name, std::vector<double>());
  for (const auto& out : outs) {
    if (out.failed) {
      ++res.failed_draws;
      continue;
    }
    for (const auto& [test, p] : out.p) {
      for (auto& [name, values] : res.per_draw_p)
        if (name == test) values.push_back(p);
    }
  }
  for (const auto& [name, values] : res.per_draw_p) {
    TestSweepEntry entry;
    entry.test = name;
    entry.n_ok = static_cast<int>(values.size());
    if (!values.empty()) {
      entry.p_min = *std::min_element(values.begin(), values.end());
      entry.p_max = *std::max_element(values.begin(), values.end());
    }
    res.per_test.push_back(entry);
  }
  return res;
}

NullSizeResult simulate_null_size(const SimulationDesign& design) {
  require_input(design.reps >= 1, "simulate_null_size: reps must be >= 1");
  require_input(design.sigma_Y > 0.0 && design.sigma_D > 0.0,
                "simulate_null_size: error scales must be positive");
  require_input(design.level > 0.0 && design.level < 1.0,
                "simulate_null_size: bad level");

  DesignMatrix w;
  if (design.W) {
    require_input(design.W->rows() > design.W->cols() + 1,
                  "simulate_null_size: provided W must have p < n");
    w.X.resize(design.W->rows(), design.W->cols() + 1);
    w.X.col(0).setOnes();
    w.X.rightCols(design.W->cols()) = *design.W;
  } else {
    require_input(design.p >= 1 && design.p + 1 < design.n,
                  "simulate_null_size: need p + 1 < n");
    auto rng = make_rng(derive_seed(design.seed, 0xfeedULL));
    std::normal_distribution<double> gauss(0.0, 1.0);
    w.X.resize(design.n, design.p + 1);
    w.X.col(0).setOnes();
    for (int i = 0; i < design.n; ++i)
      for (int j = 0; j < design.p; ++j) w.X(i, j + 1) = gauss(rng);
  }
  w.intercept_col = 0;
  w.provenance.resize(static_cast<std::size_t>(w.X.cols()));
  w.provenance[0] = {-1, "intercept"};
  for (Eigen::Index j = 1; j < w.X.cols(); ++j)
    w.provenance[static_cast<std::size_t>(j)] = {0, "w" + std::to_string(j)};

  const int n = static_cast<int>(w.X.rows());
  const ProjectionBundle wb = rank_revealing_decompose(w.X);
  const std::vector<int>* cluster =
      design.cluster_ids ? &*design.cluster_ids : nullptr;

  std::vector<std::string> names{"H", "OR", "PR"};
  if (design.include_reduced_form) names.push_back("RF");
  std::vector<std::vector<double>> pvals(
      names.size(), std::vector<double>(static_cast<std::size_t>(design.reps)));

  parallel_for(static_cast<std::size_t>(design.reps), design.threads,
               [&](std::size_t r) {
    auto rng = make_rng(derive_seed(design.seed, r + 1));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector y(n), d(n);
    for (int i = 0; i < n; ++i) y[i] = design.sigma_Y * gauss(rng);
    for (int i = 0; i < n; ++i) d[i] = design.sigma_D * gauss(rng);
    BatteryConfig bc;
    bc.level = design.level;
    bc.include_reduced_form = design.include_reduced_form;
    bc.cluster_ids = cluster;
    BatteryResult battery = run_test_battery(y, d, w, wb, bc);
    pvals[0][r] = battery.hausman.p_two_sided;
    pvals[1][r] = battery.outcome.p_one_sided;
    pvals[2][r] = battery.propensity.p_one_sided;
    if (battery.reduced_form) pvals[3][r] = battery.reduced_form->p_one_sided;
  });

  NullSizeResult res;
  res.n = n;
  res.p = static_cast<int>(w.X.cols());
  res.reps = design.reps;
  res.level = design.level;
  for (std::size_t t = 0; t < names.size(); ++t) {
    NullSizeEntry entry;
    entry.test = names[t];
    long rejections = 0;
    for (double p : pvals[t])
      if (p <= design.level) ++rejections;
    entry.rejection_rate = double(rejections) / design.reps;
    if (design.reps == 1) {
      entry.mc_sd = 0.0;
      entry.sd_degenerate = true;
    } else {
      entry.mc_sd = std::sqrt(entry.rejection_rate *
                              (1.0 - entry.rejection_rate) / design.reps);
    }
    res.per_test.push_back(entry);
    res.p_values.emplace_back(names[t], pvals[t]);
  }
  return res;
}

FragileInstance make_fragile_categorical_instance(std::uint64_t seed) {
  // Graded categorical confounder plus pure-noise continuous controls.
  // The category effect rises linearly across levels, so the coefficient
  // pattern of the one-hot dummies depends strongly on which level the
  // collinearity resolution turns into the reference. Category sizes must
  // stay near n/k ~ 100: the plug-in loading of an indicator column is
  // inflated by its own signal, so columns thinner than about lambda^2/n
  // observations can never be selected and nothing would move.
  const int n = 1000;
  const int k = 10;
  const int n_noise = 60;
  const double beta_true = 1.0;
  const double confounder_scale = 10.0;
  const double treatment_loading = 1.0;

  auto rng = make_rng(derive_seed(seed, 0xcafeULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> pick_cat(0, k - 1);

  std::vector<int> cat(n);
  Vector g(n), d(n), y(n);
  for (int i = 0; i < n; ++i) {
    cat[i] = pick_cat(rng);
    g[i] = (double(cat[i]) - (k - 1) / 2.0) / double(k - 1);  // graded in [-1/2, 1/2]
  }
  for (int i = 0; i < n; ++i)
    d[i] = treatment_loading * g[i] + 0.5 * gauss(rng);
  for (int i = 0; i < n; ++i)
    y[i] = beta_true * d[i] + confounder_scale * g[i] + gauss(rng);

  std::vector<std::string> names{"y", "d", "grp"};
  std::vector<std::vector<std::string>> cols(3);
  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  for (int i = 0; i < n; ++i) {
    cols[0].push_back(fmt(y[i]));
    cols[1].push_back(fmt(d[i]));
    // zero-padded so lexicographic level order matches the gradient
    std::ostringstream lvl;
    lvl << "c" << (cat[i] < 10 ? "0" : "") << cat[i];
    cols[2].push_back(lvl.str());
  }
  std::ostringstream recipe_text;
  recipe_text << "control grp : categorical encode=onehot ref=auto\n";
  for (int j = 0; j < n_noise; ++j) {
    const std::string name = "x" + std::to_string(j);
    names.push_back(name);
    std::vector<std::string> col;
    col.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) col.push_back(fmt(gauss(rng)));
    cols.push_back(std::move(col));
    recipe_text << "control " << name << " : continuous\n";
  }

  FragileInstance inst{DataTable(std::move(names), std::move(cols)),
                       parse_recipe(recipe_text.str()), "y", "d"};
  return inst;
}

std::string to_string(SweepKind k) {
  switch (k) {
    case SweepKind::collinear: return "collinear";
    case SweepKind::powers: return "powers";
    case SweepKind::category_sums: return "category_sums";
    case SweepKind::offset: return "offset";
  }
  return "?";
}

std::string to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::ols: return "ols";
    case EstimatorKind::post_double_lasso: return "post_double_lasso";
    case EstimatorKind::double_t: return "double_t";
  }
  return "?";
}

SweepKind sweep_kind_from_string(const std::string& s) {
  if (s == "collinear") return SweepKind::collinear;
  if (s == "powers") return SweepKind::powers;
  if (s == "category_sums") return SweepKind::category_sums;
  if (s == "offset") return SweepKind::offset;
  throw input_error("unknown sweep kind '" + s + "'");
}

EstimatorKind estimator_from_string(const std::string& s) {
  if (s == "ols") return EstimatorKind::ols;
  if (s == "post_double_lasso") return EstimatorKind::post_double_lasso;
  if (s == "double_t") return EstimatorKind::double_t;
  throw input_error("unknown estimator '" + s + "'");
}

std::string to_json(const SweepResult& r) {
  nlohmann::json j;
  j["kind"] = to_string(r.kind);
  j["per_draw"] = nlohmann::json::array();
  for (const auto& d : r.per_draw) {
    nlohmann::json e;
    e["draw"] = d.draw;
    e["fingerprint"] = d.fingerprint;
    e["estimator"] = to_string(d.estimator);
    if (d.failed) {
      e["failed"] = true;
      e["error"] = d.error;
    } else {
      e["beta"] = d.beta;
      e["se"] = d.se;
    }
    j["per_draw"].push_back(e);
  }
  j["summary"] = nlohmann::json::array();
  for (const auto& s : r.summary) {
    nlohmann::json e;
    e["estimator"] = to_string(s.estimator);
    e["n_ok"] = s.n_ok;
    e["beta_min"] = s.beta_min;
    e["beta_max"] = s.beta_max;
    e["range"] = s.range;
    e["median_se"] = s.median_se;
    e["range_in_se_units"] = s.range_in_se_units;
    j["summary"].push_back(e);
  }
  return j.dump(2);
}

std::string to_json(const TestSweepResult& r) {
  nlohmann::json j;
  j["kind"] = to_string(r.kind);
  j["failed_draws"] = r.failed_draws;
  j["per_test"] = nlohmann::json::array();
  for (const auto& t : r.per_test) {
    nlohmann::json e;
    e["test"] = t.test;
    e["p_min"] = t.p_min;
    e["p_max"] = t.p_max;
    e["n_ok"] = t.n_ok;
    j["per_test"].push_back(e);
  }
  for (const auto& [name, values] : r.per_draw_p) j["p_values"][name] = values;
  return j.dump(2);
}

std::string to_json(const NullSizeResult& r) {
  nlohmann::json j;
  j["n"] = r.n;
  j["p"] = r.p;
  j["reps"] = r.reps;
  j["level"] = r.level;
  j["per_test"] = nlohmann::json::array();
  for (const auto& t : r.per_test) {
    nlohmann::json e;
    e["test"] = t.test;
    e["rejection_rate"] = t.rejection_rate;
    e["mc_sd"] = t.mc_sd;
    e["sd_degenerate"] = t.sd_degenerate;
    j["per_test"].push_back(e);
  }
  for (const auto& [name, values] : r.p_values) j["p_values"][name] = values;
  return j.dump(2);
}

namespace {

std::string csv_num(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

std::string to_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "kind,estimator,n_ok,beta_min,beta_max,range,median_se,range_in_se_units\n";
  for (const auto& s : r.summary) {
    os << to_string(r.kind) << ',' << to_string(s.estimator) << ',' << s.n_ok
       << ',' << csv_num(s.beta_min) << ',' << csv_num(s.beta_max) << ','
       << csv_num(s.range) << ',' << csv_num(s.median_se) << ','
       << csv_num(s.range_in_se_units) << '\n';
  }
  return os.str();
}

std::string to_csv(const TestSweepResult& r) {
  std::ostringstream os;
  os << "kind,test,n_ok,p_min,p_max\n";
  for (const auto& t : r.per_test) {
    os << to_string(r.kind) << ',' << t.test << ',' << t.n_ok << ','
       << csv_num(t.p_min) << ',' << csv_num(t.p_max) << '\n';
  }
  return os.str();
}

std::string to_csv(const NullSizeResult& r) {
  std::ostringstream os;
  os << "test,rejection_rate,mc_sd,level,n,p,reps\n";
  for (const auto& t : r.per_test) {
    os << t.test << ',' << csv_num(t.rejection_rate) << ',' << csv_num(t.mc_sd)
       << ',' << csv_num(r.level) << ',' << r.n << ',' << r.p << ',' << r.reps
       << '\n';
  }
  return os.str();
}

std::string histogram_svg(const std::vector<double>& values, int bins,
                          const std::string& title) {
  require_input(!values.empty(), "histogram_svg: no values");
  require_input(bins >= 1, "histogram_svg: bins must be >= 1");
  const double lo = *std::min_element(values.begin(), values.end());
  const double hi = *std::max_element(values.begin(), values.end());
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / span * bins);
    b = std::clamp(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  const int max_count = *std::max_element(counts.begin(), counts.end());
  const double width = 640.0, height = 400.0, margin = 48.0;
  const double plot_w = width - 2 * margin, plot_h = height - 2 * margin;

  std::ostringstream os;
  os.precision(8);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  for (int b = 0; b < bins; ++b) {
    const double frac = max_count > 0
        ? double(counts[static_cast<std::size_t>(b)]) / max_count : 0.0;
    const double bar_h = frac * plot_h;
    const double x = margin + plot_w * b / bins;
    const double y = height - margin - bar_h;
    os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\""
       << plot_w / bins * 0.92 << "\" height=\"" << bar_h
       << "\" fill=\"#4878a8\"/>\n";
  }
  os << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
     << width - margin << "\" y2=\"" << height - margin
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << margin << "\" y=\"" << height - margin + 18
     << "\" font-family=\"sans-serif\" font-size=\"11\">" << lo << "</text>\n";
  os << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 18
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
     << hi << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace spaud
