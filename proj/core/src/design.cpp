#include "spaud/design.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "spaud/linalg.hpp"
#include "spaud/rng.hpp"

namespace spaud {

std::string NormalizationChoice::fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << "center=";
  if (centering) {
    os << to_string(*centering);
    if (*centering == Centering::offset) os << ":" << centering_offset;
  } else {
    os << "recipe";
  }
  os << ";encode=";
  if (encoding) {
    os << to_string(*encoding);
    if (*encoding == CatEncoding::onehot) os << ":ref=" << onehot_ref;
    else os << ":seed=" << sums_seed;
  } else {
    os << "recipe";
  }
  os << ";order=";
  if (column_order_seed) os << *column_order_seed;
  else os << "given";
  return os.str();
}

CategoryMap random_category_sums(int k, std::uint64_t seed) {
  require_input(k >= 2, "random_category_sums: k must be >= 2");
  auto rng = make_rng(seed);
  std::bernoulli_distribution coin(0.5);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Matrix a(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) a(i, j) = coin(rng) ? 1.0 : 0.0;
    Eigen::FullPivLU<Matrix> lu(a);
    if (lu.rank() == k) return CategoryMap{k, std::move(a), true};
  }
  throw numerical_error("random_category_sums: no full-rank draw in 1000 tries");
}

CategoryMap onehot_map(int k, int ref_index) {
  require_input(k >= 2, "onehot_map: k must be >= 2");
  require_input(ref_index >= 0 && ref_index < k, "onehot_map: bad ref index");
  Matrix a = Matrix::Zero(k - 1, k);
  int row = 0;
  for (int j = 0; j < k; ++j) {
    if (j == ref_index) continue;
    a(row++, j) = 1.0;
  }
  return CategoryMap{k, std::move(a), false};
}

Vector apply_centering(const Vector& x, Centering c, double offset_lambda) {
  switch (c) {
    case Centering::none:
      return x;
    case Centering::mean:
      return x.array() - x.mean();
    case Centering::median: {
      std::vector<double> sorted(x.data(), x.data() + x.size());
      std::sort(sorted.begin(), sorted.end());
      const double med = sorted[(sorted.size() - 1) / 2];  // lower median
      return x.array() - med;
    }
    case Centering::range01:
    case Centering::range11: {
      const double lo = x.minCoeff(), hi = x.maxCoeff();
      require_input(hi > lo,
                    "range scaling of a constant column (zero range)");
      Vector u = (x.array() - lo) / (hi - lo);
      if (c == Centering::range11) u = 2.0 * u.array() - 1.0;
      return u;
    }
    case Centering::offset:
      require_input(std::isfinite(offset_lambda), "non-finite centering offset");
      return x.array() - offset_lambda;
  }
  throw input_error("apply_centering: unknown centering");
}

Matrix hermite_basis(const Vector& z, int degree, double offset) {
  require_input(degree >= 1, "hermite_basis: degree must be >= 1");
  require_input(std::isfinite(offset), "hermite_basis: non-finite offset");
  const Eigen::Index n = z.size();
  Matrix h(n, degree);
  const Vector x = z.array() - offset;
  Vector prev = Vector::Ones(n);  // H_0
  Vector cur = x;                 // H_1
  h.col(0) = cur;
  for (int j = 1; j < degree; ++j) {
    Vector next =
        (x.array() * cur.array() - std::sqrt(double(j)) * prev.array()) /
        std::sqrt(double(j + 1));
    prev.swap(cur);
    cur = std::move(next);
    h.col(j) = cur;
  }
  return h;
}

namespace {

struct ColumnSink {
  std::vector<Vector> cols;
  std::vector<ColumnInfo> info;
  void push(Vector v, int clause_index, std::string label) {
    cols.push_back(std::move(v));
    info.push_back({clause_index, std::move(label)});
  }
};

void emit_categorical(const ControlClause& c, int idx, const DataTable& table,
                      const NormalizationChoice& choice, ColumnSink& sink) {
  const auto& raw = table.text_column(c.name);
  std::vector<std::string> levels(raw.begin(), raw.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  const int k = static_cast<int>(levels.size());
  require_input(k >= 2, "categorical column '" + c.name +
                            "' has fewer than 2 observed levels");
  std::vector<int> code(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    code[i] = static_cast<int>(
        std::lower_bound(levels.begin(), levels.end(), raw[i]) -
        levels.begin());
  }

  const CatEncoding enc = choice.encoding.value_or(c.encode);
  const Eigen::Index n = static_cast<Eigen::Index>(raw.size());
  if (enc == CatEncoding::sums) {
    // subsets independent across clauses under one choice seed
    const std::uint64_t seed =
        derive_seed(choice.encoding ? choice.sums_seed : 0,
                    static_cast<std::uint64_t>(idx));
    CategoryMap map = random_category_sums(k, seed);
    for (int j = 0; j < k; ++j) {
      Vector col(n);
      for (Eigen::Index i = 0; i < n; ++i) col[i] = map.A(j, code[i]);
      sink.push(std::move(col), idx, c.name + ":sum" + std::to_string(j));
    }
    return;
  }

  const std::string ref = choice.encoding ? choice.onehot_ref : c.ref;
  int ref_index = -1;
  if (ref != "auto") {
    auto it = std::lower_bound(levels.begin(), levels.end(), ref);
    require_input(it != levels.end() && *it == ref,
                  "reference level '" + ref + "' not observed in column '" +
                      c.name + "'");
    ref_index = static_cast<int>(it - levels.begin());
  }
  for (int j = 0; j < k; ++j) {
    if (j == ref_index) continue;  // ref=auto emits all k levels
    Vector col(n);
    for (Eigen::Index i = 0; i < n; ++i) col[i] = code[i] == j ? 1.0 : 0.0;
    sink.push(std::move(col), idx, c.name + "==" + levels[j]);
  }
}

}  // namespace

DesignMatrix build_design(const Recipe& recipe, const DataTable& table,
                          const NormalizationChoice& choice) {
  require_input(table.rows() >= 1, "build_design: empty table");
  const Eigen::Index n = static_cast<Eigen::Index>(table.rows());

  // pass 1: centered base column of every continuous/binary control, so
  // interactions can reference controls declared anywhere in the recipe
  std::map<std::string, Vector> base;
  for (const auto& clause : recipe.clauses) {
    const auto* c = std::get_if<ControlClause>(&clause);
    if (!c || c->kind == ControlKind::categorical) continue;
    Vector x = table.numeric_column(c->name);
    if (c->kind == ControlKind::binary) {
      base[c->name] = std::move(x);  // raw; the intercept absorbs any shift
      continue;
    }
    const Centering center = choice.centering.value_or(c->center);
    const double lambda =
        choice.centering ? choice.centering_offset : c->center_offset;
    base[c->name] = apply_centering(x, center, lambda);
  }

  // pass 2: emit columns in clause order
  ColumnSink sink;
  sink.push(Vector::Ones(n), -1, "intercept");
  for (std::size_t i = 0; i < recipe.clauses.size(); ++i) {
    const int idx = static_cast<int>(i);
    if (const auto* c = std::get_if<ControlClause>(&recipe.clauses[i])) {
      if (c->kind == ControlKind::categorical) {
        emit_categorical(*c, idx, table, choice, sink);
      } else if (c->kind == ControlKind::binary) {
        sink.push(base.at(c->name), idx, c->name);
      } else {
        const Vector& b = base.at(c->name);
        Vector pw = b;
        for (int d = 1; d <= c->powers; ++d) {
          std::string label = c->name;
          if (d > 1) label += "^" + std::to_string(d);
          sink.push(pw, idx, std::move(label));
          if (d < c->powers) pw = pw.array() * b.array();
        }
      }
    } else if (const auto* it = std::get_if<InteractClause>(&recipe.clauses[i])) {
      Vector prod;
      std::string label;
      for (std::size_t j = 0; j < it->names.size(); ++j) {
        auto found = base.find(it->names[j]);
        require_input(found != base.end(),
                      "interact references control '" + it->names[j] +
                          "' with no usable base column");
        if (j == 0) {
          prod = found->second;
          label = it->names[j];
        } else {
          prod = prod.array() * found->second.array();
          label += "*" + it->names[j];
        }
      }
      sink.push(std::move(prod), idx, std::move(label));
    } else if (const auto* h = std::get_if<HermiteClause>(&recipe.clauses[i])) {
      Matrix hb = hermite_basis(table.numeric_column(h->name), h->degree,
                                h->offset);
      for (int j = 0; j < h->degree; ++j)
        sink.push(hb.col(j), idx, h->name + ":H" + std::to_string(j + 1));
    }
  }

  DesignMatrix d;
  d.choice = choice;
  d.intercept_col = 0;
  d.provenance = std::move(sink.info);
  d.X.resize(n, static_cast<Eigen::Index>(sink.cols.size()));
  for (std::size_t j = 0; j < sink.cols.size(); ++j)
    d.X.col(static_cast<Eigen::Index>(j)) = sink.cols[j];
  require_input(all_finite(d.X), "build_design: non-finite design entries");

  if (choice.column_order_seed) {
    auto rng = make_rng(*choice.column_order_seed);
    std::vector<int> perm(static_cast<std::size_t>(d.X.cols()) - 1);
    std::iota(perm.begin(), perm.end(), 1);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix xp(d.X.rows(), d.X.cols());
    std::vector<ColumnInfo> ip(d.provenance.size());
    xp.col(0) = d.X.col(0);
    ip[0] = d.provenance[0];
    for (std::size_t j = 0; j < perm.size(); ++j) {
      xp.col(static_cast<Eigen::Index>(j) + 1) = d.X.col(perm[j]);
      ip[j + 1] = d.provenance[static_cast<std::size_t>(perm[j])];
    }
    d.X = std::move(xp);
    d.provenance = std::move(ip);
  }
  return d;
}

namespace {

DesignMatrix resolve_in_order(const DesignMatrix& d,
                              const std::vector<int>& order,
                              const NormalizationChoice& choice) {
  Matrix xp(d.X.rows(), static_cast<Eigen::Index>(order.size()));
  std::vector<ColumnInfo> ip(order.size());
  for (std::size_t j = 0; j < order.size(); ++j) {
    xp.col(static_cast<Eigen::Index>(j)) = d.X.col(order[j]);
    ip[j] = d.provenance[static_cast<std::size_t>(order[j])];
  }
  ProjectionBundle b = rank_revealing_decompose(xp);
  DesignMatrix out;
  out.X.resize(xp.rows(), static_cast<Eigen::Index>(b.kept.size()));
  out.provenance.resize(b.kept.size());
  for (std::size_t j = 0; j < b.kept.size(); ++j) {
    out.X.col(static_cast<Eigen::Index>(j)) = xp.col(b.kept[j]);
    out.provenance[j] = ip[static_cast<std::size_t>(b.kept[j])];
  }
  out.choice = choice;
  out.intercept_col = 0;
  return out;
}

}  // namespace

DesignMatrix random_collinearity_resolution(const DesignMatrix& d,
                                            std::uint64_t seed) {
  require_input(d.X.cols() >= 1, "random_collinearity_resolution: empty design");
  auto rng = make_rng(seed);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(d.X.cols()));
  for (int j = 0; j < d.X.cols(); ++j)
    if (j != d.intercept_col) order.push_back(j);
  std::shuffle(order.begin(), order.end(), rng);
  order.insert(order.begin(), d.intercept_col);
  NormalizationChoice choice = d.choice;
  choice.column_order_seed = seed;
  return resolve_in_order(d, order, choice);
}

DesignMatrix resolve_collinearity(const DesignMatrix& d) {
  std::vector<int> order(static_cast<std::size_t>(d.X.cols()));
  std::iota(order.begin(), order.end(), 0);
  return resolve_in_order(d, order, d.choice);
}

}  // namespace spaud
