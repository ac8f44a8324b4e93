#pragma once

#include <string>
#include <variant>
#include <vector>

#include "spaud/common.hpp"

namespace spaud {

enum class ControlKind { continuous, binary, categorical };

enum class Centering { none, mean, median, range01, range11, offset };

enum class CatEncoding { onehot, sums };

/// "control NAME : kind option*"
struct ControlClause {
  std::string name;
  ControlKind kind = ControlKind::continuous;
  Centering center = Centering::none;
  double center_offset = 0.0;  // lambda for Centering::offset
  int powers = 1;
  CatEncoding encode = CatEncoding::onehot;
  std::string ref = "auto";  // reference level, or "auto" = emit all levels

  bool operator==(const ControlClause&) const = default;
};

/// "interact NAME (* NAME)+": elementwise product of the centered base
/// columns of the named continuous/binary controls.
struct InteractClause {
  std::vector<std::string> names;
  bool operator==(const InteractClause&) const = default;
};

/// "hermite NAME degree=INT [offset=FLOAT]": orthonormal-Hermite expansion
/// of the named raw column, shifted by -offset.
struct HermiteClause {
  std::string name;
  int degree = 1;
  double offset = 0.0;
  bool operator==(const HermiteClause&) const = default;
};

using RecipeClause = std::variant<ControlClause, InteractClause, HermiteClause>;

struct Recipe {
  std::vector<RecipeClause> clauses;
  bool operator==(const Recipe&) const = default;
};

/// Parse the line-oriented recipe language ('#' comments). Errors carry
/// line and column positions.
Recipe parse_recipe(const std::string& text);

/// Canonical text form; parse_recipe(unparse(r)) == r.
std::string unparse(const Recipe& r);

std::string to_string(Centering c);
std::string to_string(CatEncoding e);

}  // namespace spaud
