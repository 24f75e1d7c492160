#include "drcrt/formula.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include <fmt/format.h>

#include "drcrt/error.hpp"

namespace drcrt {

std::string_view to_string(Role role) { return role == Role::Outcome ? "outcome" : "censoring"; }

namespace {

std::string strip_spaces(const std::string& s) {
  std::string out;
  for (char ch : s)
    if (!std::isspace(static_cast<unsigned char>(ch))) out.push_back(ch);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  int depth = 0;
  for (char ch : s) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (ch == sep && depth == 0) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  return parts;
}

bool is_identifier(const std::string& s) {
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) return false;
  for (char ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '.') return false;
  return true;
}

Factor parse_factor(const std::string& text, const std::string& whole) {
  Factor f;
  std::string body = text;
  const auto slash = text.rfind('/');
  if (slash != std::string::npos && text.find(')', slash) == std::string::npos) {
    const std::string num = text.substr(slash + 1);
    char* end = nullptr;
    f.divisor = std::strtod(num.c_str(), &end);
    if (num.empty() || end != num.c_str() + num.size() || f.divisor == 0.0)
      fail(ErrorKind::UnknownTerm, fmt::format("bad divisor in term '{}'", whole));
    body = text.substr(0, slash);
  }
  if (body == "N") {
    f.kind = Factor::Kind::ClusterSize;
  } else if (body == "log(N)") {
    f.kind = Factor::Kind::LogClusterSize;
  } else if (body.rfind("mean(", 0) == 0 && body.back() == ')') {
    f.kind = Factor::Kind::ClusterMean;
    f.column = body.substr(5, body.size() - 6);
    if (!is_identifier(f.column)) fail(ErrorKind::UnknownTerm, fmt::format("bad column in term '{}'", whole));
  } else if (is_identifier(body)) {
    f.kind = Factor::Kind::Column;
    f.column = body;
  } else {
    fail(ErrorKind::UnknownTerm, fmt::format("cannot parse term '{}'", whole));
  }
  return f;
}

}  // namespace

ModelFormula ModelFormula::parse(const std::string& rhs, Role role) {
  const std::string s = strip_spaces(rhs);
  std::vector<Term> terms;
  if (s.empty() || s == "1") return ModelFormula(role, terms);
  for (const auto& part : split(s, '+')) {
    if (part.empty()) fail(ErrorKind::UnknownTerm, fmt::format("empty term in formula '{}'", rhs));
    Term t;
    t.label = part;
    for (const auto& piece : split(part, '*')) {
      if (piece.empty()) fail(ErrorKind::UnknownTerm, fmt::format("empty factor in term '{}'", part));
      t.factors.push_back(parse_factor(piece, part));
    }
    terms.push_back(std::move(t));
  }
  return ModelFormula(role, std::move(terms));
}

std::string ModelFormula::to_string() const {
  if (terms_.empty()) return "1";
  std::string out;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    if (k) out += " + ";
    out += terms_[k].label;
  }
  return out;
}

void check_resolvable(const SurvivalDataset& ds, const ModelFormula& formula) {
  for (const auto& term : formula.terms()) {
    for (const auto& f : term.factors) {
      if (f.kind != Factor::Kind::Column && f.kind != Factor::Kind::ClusterMean) continue;
      if (!ds.find_column(f.column))
        fail(ErrorKind::UnknownTerm, fmt::format("term '{}' references unknown column '{}'", term.label, f.column));
    }
  }
}

namespace {

struct ResolvedFactor {
  Factor::Kind kind;
  ColumnRef ref{ColumnLevel::Subject, 0};
  double scale = 1.0;
};

// Cluster means of subject columns, computed once per (column) when needed.
std::vector<double> cluster_means(const SurvivalDataset& ds, const ColumnRef& ref) {
  std::vector<double> means(ds.num_clusters(), 0.0);
  for (std::size_t i = 0; i < ds.num_clusters(); ++i) {
    const auto& c = ds.cluster(i);
    double sum = 0.0;
    for (std::size_t s = c.first; s < c.first + c.size; ++s) sum += ds.column_value(ref, s);
    means[i] = sum / static_cast<double>(c.size);
  }
  return means;
}

}  // namespace

DesignMatrix build_design(const SurvivalDataset& ds, const ModelFormula& formula,
                          std::span<const std::size_t> subjects) {
  check_resolvable(ds, formula);
  const std::size_t p = formula.size();
  DesignMatrix x(static_cast<Eigen::Index>(subjects.size()), static_cast<Eigen::Index>(p));

  std::vector<std::vector<ResolvedFactor>> resolved(p);
  std::vector<std::vector<std::vector<double>>> means(p);
  for (std::size_t k = 0; k < p; ++k) {
    const auto& term = formula.terms()[k];
    means[k].resize(term.factors.size());
    for (std::size_t f = 0; f < term.factors.size(); ++f) {
      const auto& factor = term.factors[f];
      ResolvedFactor r{factor.kind};
      r.scale = 1.0 / factor.divisor;
      if (factor.kind == Factor::Kind::Column || factor.kind == Factor::Kind::ClusterMean)
        r.ref = *ds.find_column(factor.column);
      if (factor.kind == Factor::Kind::ClusterMean) means[k][f] = cluster_means(ds, r.ref);
      resolved[k].push_back(r);
    }
  }

  for (std::size_t row = 0; row < subjects.size(); ++row) {
    const std::size_t s = subjects[row];
    const std::size_t cl = ds.cluster_of(s);
    const double n = static_cast<double>(ds.cluster(cl).size);
    for (std::size_t k = 0; k < p; ++k) {
      double v = 1.0;
      for (std::size_t f = 0; f < resolved[k].size(); ++f) {
        const auto& r = resolved[k][f];
        double a = 0.0;
        switch (r.kind) {
          case Factor::Kind::Column: a = ds.column_value(r.ref, s); break;
          case Factor::Kind::ClusterSize: a = n; break;
          case Factor::Kind::LogClusterSize: a = std::log(n); break;
          case Factor::Kind::ClusterMean: a = means[k][f][cl]; break;
        }
        v *= a * r.scale;
      }
      x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return x;
}

DesignMatrix build_design(const SurvivalDataset& ds, const ModelFormula& formula) {
  std::vector<std::size_t> all(ds.num_subjects());
  for (std::size_t s = 0; s < all.size(); ++s) all[s] = s;
  return build_design(ds, formula, all);
}

}  // namespace drcrt
