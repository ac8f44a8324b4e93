#include "spaud/recipe.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace spaud {

namespace {

struct Cursor {
  int line;
  int col;
};

[[noreturn]] void fail(const Cursor& at, const std::string& msg) {
  throw input_error("recipe:" + std::to_string(at.line) + ":" +
                    std::to_string(at.col) + ": " + msg);
}

// Whitespace-separated tokens with their 1-based column positions.
std::vector<std::pair<std::string, int>> tokenize(const std::string& line) {
  std::vector<std::pair<std::string, int>> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (std::isspace(static_cast<unsigned char>(line[i]))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    out.emplace_back(line.substr(start, i - start), static_cast<int>(start) + 1);
  }
  return out;
}

double parse_float(const std::string& s, const Cursor& at) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) fail(at, "bad number '" + s + "'");
    return v;
  } catch (const input_error&) {
    throw;
  } catch (...) {
    fail(at, "bad number '" + s + "'");
  }
}

int parse_int(const std::string& s, const Cursor& at) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(at, "bad integer '" + s + "'");
  return v;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

ControlClause parse_control(const std::string& body, int line_no) {
  // body is everything after the "control" keyword; the first ':' splits
  // NAME from kind + options. Later ':' (center=offset:0.3) are untouched.
  Cursor at{line_no, 1};
  std::size_t colon = body.find(':');
  if (colon == std::string::npos) fail(at, "expected ':' after control name");
  ControlClause c;
  c.name = trim(body.substr(0, colon));
  if (c.name.empty()) fail(at, "missing control name");
  if (c.name.find(' ') != std::string::npos)
    fail(at, "control name may not contain spaces");

  auto tokens = tokenize(body.substr(colon + 1));
  if (tokens.empty()) fail(at, "missing control kind");
  const auto& [kind, kind_col] = tokens[0];
  at.col = kind_col;
  if (kind == "continuous")
    c.kind = ControlKind::continuous;
  else if (kind == "binary")
    c.kind = ControlKind::binary;
  else if (kind == "categorical")
    c.kind = ControlKind::categorical;
  else
    fail(at, "unknown control kind '" + kind + "'");

  bool saw_ref = false, saw_encode = false, saw_center = false, saw_powers = false;
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    const auto& [tok, col] = tokens[t];
    at.col = col;
    std::size_t eq = tok.find('=');
    if (eq == std::string::npos) fail(at, "expected option of form key=value");
    const std::string key = tok.substr(0, eq);
    const std::string value = tok.substr(eq + 1);
    if (key == "center") {
      saw_center = true;
      if (value == "none") c.center = Centering::none;
      else if (value == "mean") c.center = Centering::mean;
      else if (value == "median") c.center = Centering::median;
      else if (value == "range01") c.center = Centering::range01;
      else if (value == "range11") c.center = Centering::range11;
      else if (value.rfind("offset:", 0) == 0) {
        c.center = Centering::offset;
        c.center_offset = parse_float(value.substr(7), at);
      } else {
        fail(at, "unknown center option '" + value + "'");
      }
    } else if (key == "powers") {
      saw_powers = true;
      c.powers = parse_int(value, at);
      if (c.powers < 1) fail(at, "powers must be >= 1");
    } else if (key == "ref") {
      saw_ref = true;
      if (value.empty()) fail(at, "empty ref");
      c.ref = value;
    } else if (key == "encode") {
      saw_encode = true;
      if (value == "onehot") c.encode = CatEncoding::onehot;
      else if (value == "sums") c.encode = CatEncoding::sums;
      else fail(at, "unknown encode option '" + value + "'");
    } else {
      fail(at, "unknown option '" + key + "'");
    }
  }
  at.col = 1;
  if (c.kind == ControlKind::categorical) {
    if (saw_center || saw_powers)
      fail(at, "center=/powers= are not valid for categorical controls");
    if (saw_ref && c.encode == CatEncoding::sums)
      fail(at, "ref= is only valid with encode=onehot");
  } else {
    if (saw_ref || saw_encode)
      fail(at, "ref=/encode= are only valid for categorical controls");
  }
  return c;
}

InteractClause parse_interact(const std::string& body, int line_no) {
  Cursor at{line_no, 1};
  InteractClause c;
  std::stringstream ss(body);
  std::string part;
  while (std::getline(ss, part, '*')) {
    part = trim(part);
    if (part.empty()) fail(at, "empty name in interact");
    if (part.find(' ') != std::string::npos)
      fail(at, "interact names may not contain spaces");
    c.names.push_back(part);
  }
  if (c.names.size() < 2) fail(at, "interact needs at least two names");
  return c;
}

HermiteClause parse_hermite(const std::string& body, int line_no) {
  Cursor at{line_no, 1};
  auto tokens = tokenize(body);
  if (tokens.empty()) fail(at, "missing hermite name");
  HermiteClause c;
  c.name = tokens[0].first;
  bool saw_degree = false;
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    const auto& [tok, col] = tokens[t];
    at.col = col;
    std::size_t eq = tok.find('=');
    if (eq == std::string::npos) fail(at, "expected option of form key=value");
    const std::string key = tok.substr(0, eq);
    const std::string value = tok.substr(eq + 1);
    if (key == "degree") {
      c.degree = parse_int(value, at);
      if (c.degree < 1) fail(at, "degree must be >= 1");
      saw_degree = true;
    } else if (key == "offset") {
      c.offset = parse_float(value, at);
    } else {
      fail(at, "unknown option '" + key + "'");
    }
  }
  if (!saw_degree) fail(at, "hermite clause requires degree=");
  return c;
}

}  // namespace

Recipe parse_recipe(const std::string& text) {
  Recipe r;
  std::set<std::string> declared;  // control + hermite names
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    raw = trim(raw);
    if (raw.empty()) continue;

    std::size_t sp = raw.find_first_of(" \t");
    const std::string keyword = raw.substr(0, sp);
    const std::string body = sp == std::string::npos ? "" : trim(raw.substr(sp));
    Cursor at{line_no, 1};

    if (keyword == "control") {
      ControlClause c = parse_control(body, line_no);
      if (!declared.insert(c.name).second)
        fail(at, "duplicate name '" + c.name + "'");
      r.clauses.emplace_back(std::move(c));
    } else if (keyword == "interact") {
      r.clauses.emplace_back(parse_interact(body, line_no));
    } else if (keyword == "hermite") {
      HermiteClause c = parse_hermite(body, line_no);
      if (!declared.insert(c.name).second)
        fail(at, "duplicate name '" + c.name + "'");
      r.clauses.emplace_back(std::move(c));
    } else {
      fail(at, "unknown clause '" + keyword + "'");
    }
  }

  // interact references must resolve to continuous/binary control clauses
  for (const auto& clause : r.clauses) {
    const auto* it = std::get_if<InteractClause>(&clause);
    if (!it) continue;
    for (const auto& name : it->names) {
      bool ok = false;
      for (const auto& other : r.clauses) {
        const auto* ctrl = std::get_if<ControlClause>(&other);
        if (ctrl && ctrl->name == name) {
          if (ctrl->kind == ControlKind::categorical)
            throw input_error("recipe: interact with categorical control '" +
                              name + "' is not supported");
          ok = true;
          break;
        }
      }
      if (!ok)
        throw input_error("recipe: interact references undeclared control '" +
                          name + "'");
    }
  }
  return r;
}

std::string to_string(Centering c) {
  switch (c) {
    case Centering::none: return "none";
    case Centering::mean: return "mean";
    case Centering::median: return "median";
    case Centering::range01: return "range01";
    case Centering::range11: return "range11";
    case Centering::offset: return "offset";
  }
  return "?";
}

std::string to_string(CatEncoding e) {
  return e == CatEncoding::onehot ? "onehot" : "sums";
}

namespace {

std::string format_float(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Unparser {
  std::ostringstream out;
  void operator()(const ControlClause& c) {
    out << "control " << c.name << " : ";
    switch (c.kind) {
      case ControlKind::continuous: out << "continuous"; break;
      case ControlKind::binary: out << "binary"; break;
      case ControlKind::categorical: out << "categorical"; break;
    }
    if (c.kind == ControlKind::categorical) {
      out << " encode=" << to_string(c.encode);
      if (c.encode == CatEncoding::onehot) out << " ref=" << c.ref;
    } else {
      if (c.center == Centering::offset)
        out << " center=offset:" << format_float(c.center_offset);
      else if (c.center != Centering::none)
        out << " center=" << to_string(c.center);
      if (c.powers != 1) out << " powers=" << c.powers;
    }
    out << '\n';
  }
  void operator()(const InteractClause& c) {
    out << "interact ";
    for (std::size_t i = 0; i < c.names.size(); ++i) {
      if (i) out << " * ";
      out << c.names[i];
    }
    out << '\n';
  }
  void operator()(const HermiteClause& c) {
    out << "hermite " << c.name << " degree=" << c.degree;
    if (c.offset != 0.0) out << " offset=" << format_float(c.offset);
    out << '\n';
  }
};

}  // namespace

std::string unparse(const Recipe& r) {
  Unparser u;
  for (const auto& clause : r.clauses) std::visit(u, clause);
  return u.out.str();
}

}  // namespace spaud
