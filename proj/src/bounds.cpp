#include "shiftlab/bounds.hpp"

#include <cmath>
#include <sstream>

#include "shiftlab/error.hpp"
#include "shiftlab/exact.hpp"
#include "shiftlab/parallel.hpp"

namespace shiftlab {

std::string to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::UpperPopulation: return "upper-population";
    case BoundKind::LowerPopulation: return "lower-population";
    case BoundKind::UpperEmpirical: return "upper-empirical";
    case BoundKind::LowerEmpirical: return "lower-empirical";
  }
  return "unknown";
}

double BoundReport::term(const std::string& name) const {
  for (const auto& [key, value] : terms) {
    if (key == name) return value;
  }
  throw ValidationError("bound report has no term '" + name + "'");
}

double BoundReport::recompute() const {
  switch (kind) {
    case BoundKind::UpperPopulation:
      return term("eps_tr") + term("m_cov") + term("m_cpt_min");
    case BoundKind::LowerPopulation:
      return term("m_cpt_max") - term("m_cov") - term("eps_tr");
    case BoundKind::UpperEmpirical:
      return term("eps_tr") + term("m_cov") + term("m_cpt_min") + term("rad_loss_pair_tr") +
             term("rad_loss_pair_te") + term("rad_loss_composed_tr") + term("residual");
    case BoundKind::LowerEmpirical:
      return term("m_cpt_max") - term("m_cov") - term("eps_tr") - term("rad_loss_pair_tr") -
             term("rad_loss_pair_te") - term("rad_loss_composed_tr") - term("residual");
  }
  return 0.0;
}

std::string BoundReport::inequality() const {
  std::ostringstream out;
  out.precision(6);
  switch (kind) {
    case BoundKind::UpperPopulation:
      out << "eps_te(h) <= eps_tr + m_cov + m_cpt_min";
      break;
    case BoundKind::LowerPopulation:
      out << "eps_te(h) >= m_cpt_max - m_cov - eps_tr";
      break;
    case BoundKind::UpperEmpirical:
      out << "eps_te(h) <= eps_tr_hat + m_cov_hat + m_cpt_min + rad_loss_pair_tr + "
             "rad_loss_pair_te + rad_loss_composed_tr + residual (probability >= 1 - delta)";
      break;
    case BoundKind::LowerEmpirical:
      out << "eps_te(h) >= m_cpt_max - m_cov_hat - eps_tr_hat - rad_loss_pair_tr - "
             "rad_loss_pair_te - rad_loss_composed_tr - residual (probability >= 1 - delta)";
      break;
  }
  out << " = " << bound_value;
  return out.str();
}

nlohmann::json to_json(const BoundReport& report) {
  nlohmann::json terms = nlohmann::json::object();
  for (const auto& [key, value] : report.terms) terms[key] = value;
  nlohmann::json out = {
      {"kind", to_string(report.kind)},
      {"bound_value", report.bound_value},
      {"terms", terms},
      {"inequality", report.inequality()},
  };
  if (report.holds_for) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& h : *report.holds_for) {
      rows.push_back({{"hypothesis", h.hypothesis}, {"eps_te", h.eps_te}, {"satisfied", h.satisfied}});
    }
    out["holds_for"] = rows;
  }
  return out;
}

namespace {

void require_nonnegative(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw ValidationError(std::string(name) + " must be a finite value >= 0, got " + std::to_string(v));
  }
}

void check_empirical(const EmpiricalTerms& t) {
  if (!(t.delta > 0.0 && t.delta < 1.0)) {
    throw ValidationError("delta must lie in (0, 1), got " + std::to_string(t.delta));
  }
  if (!(t.bound_M > 0.0) || !std::isfinite(t.bound_M)) throw ValidationError("M must be positive");
  if (t.n_tr == 0 || t.n_te == 0) throw ValidationError("sample sizes must be >= 1");
  require_nonnegative(t.eps_tr_hat, "eps_tr_hat");
  require_nonnegative(t.m_cov_hat, "m_cov_hat");
  require_nonnegative(t.m_cpt, "m_cpt");
  require_nonnegative(t.rad_loss_pair_tr, "rad_loss_pair_tr");
  require_nonnegative(t.rad_loss_pair_te, "rad_loss_pair_te");
  require_nonnegative(t.rad_loss_composed_tr, "rad_loss_composed_tr");
}

BoundReport empirical_report(BoundKind kind, const EmpiricalTerms& t, const char* cpt_name) {
  check_empirical(t);
  BoundReport r;
  r.kind = kind;
  r.terms = {
      {"eps_tr", t.eps_tr_hat},
      {"m_cov", t.m_cov_hat},
      {cpt_name, t.m_cpt},
      {"rad_loss_pair_tr", t.rad_loss_pair_tr},
      {"rad_loss_pair_te", t.rad_loss_pair_te},
      {"rad_loss_composed_tr", t.rad_loss_composed_tr},
      {"residual", empirical_residual(t.n_tr, t.n_te, t.bound_M, t.delta)},
      {"delta", t.delta},
      {"n_tr", static_cast<double>(t.n_tr)},
      {"n_te", static_cast<double>(t.n_te)},
      {"M", t.bound_M},
  };
  r.bound_value = r.recompute();
  return r;
}

}  // namespace

BoundReport population_upper_bound(double eps_tr, double m_cov, double m_cpt_min) {
  require_nonnegative(eps_tr, "eps_tr");
  require_nonnegative(m_cov, "m_cov");
  require_nonnegative(m_cpt_min, "m_cpt_min");
  BoundReport r;
  r.kind = BoundKind::UpperPopulation;
  r.terms = {{"eps_tr", eps_tr}, {"m_cov", m_cov}, {"m_cpt_min", m_cpt_min}};
  r.bound_value = r.recompute();
  return r;
}

BoundReport population_lower_bound(double eps_tr, double m_cov, double m_cpt_max) {
  require_nonnegative(eps_tr, "eps_tr");
  require_nonnegative(m_cov, "m_cov");
  require_nonnegative(m_cpt_max, "m_cpt_max");
  BoundReport r;
  r.kind = BoundKind::LowerPopulation;
  r.terms = {{"eps_tr", eps_tr}, {"m_cov", m_cov}, {"m_cpt_max", m_cpt_max}};
  r.bound_value = r.recompute();
  return r;
}

double empirical_residual(std::size_t n_tr, std::size_t n_te, double bound_M, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ValidationError("delta must lie in (0, 1), got " + std::to_string(delta));
  }
  if (!(bound_M > 0.0)) throw ValidationError("M must be positive");
  if (n_tr == 0 || n_te == 0) throw ValidationError("sample sizes must be >= 1");
  const double log_term = std::log(6.0 / delta);
  const double per_tr = 3.0 * bound_M * std::sqrt(log_term / (2.0 * static_cast<double>(n_tr)));
  const double per_te = 3.0 * bound_M * std::sqrt(log_term / (2.0 * static_cast<double>(n_te)));
  // Training sample: loss-composed deviation and the D_tr vs D_tr_hat discrepancy.
  return 2.0 * per_tr + per_te;
}

BoundReport empirical_upper_bound(const EmpiricalTerms& terms) {
  return empirical_report(BoundKind::UpperEmpirical, terms, "m_cpt_min");
}

BoundReport empirical_lower_bound(const EmpiricalTerms& terms) {
  return empirical_report(BoundKind::LowerEmpirical, terms, "m_cpt_max");
}

nlohmann::json to_json(const BoundVerification& v) {
  nlohmann::json violations = nlohmann::json::array();
  for (const auto& x : v.violations) {
    violations.push_back({{"hypothesis", x.hypothesis},
                          {"kind", to_string(x.kind)},
                          {"eps_te", x.eps_te},
                          {"bound_value", x.bound_value}});
  }
  nlohmann::json per_h = nlohmann::json::array();
  for (std::size_t i = 0; i < v.upper.size(); ++i) {
    per_h.push_back({{"hypothesis", i},
                     {"eps_tr", v.upper[i].term("eps_tr")},
                     {"eps_te", v.upper[i].holds_for->front().eps_te},
                     {"upper", v.upper[i].bound_value},
                     {"lower", v.lower[i].bound_value}});
  }
  return {
      {"m_cov", v.m_cov},
      {"m_cpt_min", v.m_cpt_min},
      {"m_cpt_max", v.m_cpt_max},
      {"hypotheses_checked", v.upper.size()},
      {"violations", violations},
      {"per_hypothesis", per_h},
      {"warnings", v.warnings},
  };
}

BoundVerification verify_bounds_bruteforce(const DiscreteDomainPair& pair,
                                           const EnumerableClass& hypotheses,
                                           const LossFunction& loss, double slack) {
  if (!loss.is_symmetric() || !loss.obeys_triangle()) {
    throw ValidationError("verify_bounds_bruteforce: the loss must be declared symmetric and obey "
                          "the triangle inequality");
  }
  if (hypotheses.support_size() != pair.size()) {
    throw ValidationError("verify_bounds_bruteforce: hypotheses are defined on " +
                          std::to_string(hypotheses.support_size()) + " points, the pair has " +
                          std::to_string(pair.size()));
  }

  BoundVerification out;
  auto round = [&](const Labeling& f, const char* name) {
    Labeling rounded;
    bool changed = false;
    for (const auto& d : f) {
      rounded.push_back(LabelDistribution::one_hot(d.argmax(), d.size()));
      changed = changed || !(rounded.back() == d);
    }
    if (changed) {
      out.warnings.push_back(std::string(name) + " is stochastic; rounded to its argmax labels");
    }
    if (!find_member(hypotheses, rounded)) {
      throw ValidationError(std::string("verify_bounds_bruteforce: ") + name +
                            " is not a member of the hypothesis class");
    }
    return rounded;
  };
  const Labeling f_tr = round(pair.f_tr(), "f_tr");
  const Labeling f_te = round(pair.f_te(), "f_te");

  out.m_cov = exact_discrepancy(pair, hypotheses, loss);
  const double cpt_tr = expected_loss(pair.p_tr(), f_tr, f_te, loss);
  const double cpt_te = expected_loss(pair.p_te(), f_tr, f_te, loss);
  out.m_cpt_min = std::min(cpt_tr, cpt_te);
  out.m_cpt_max = std::max(cpt_tr, cpt_te);

  const std::size_t n = hypotheses.size();
  out.upper.resize(n);
  out.lower.resize(n);
  // Each hypothesis writes its own slot; violations are collected in index
  // order afterwards, so the result does not depend on the worker count.
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& h = hypotheses.members[i];
      const double eps_tr = expected_loss(pair.p_tr(), h, f_tr, loss);
      const double eps_te = expected_loss(pair.p_te(), h, f_te, loss);

      auto upper = population_upper_bound(eps_tr, out.m_cov, out.m_cpt_min);
      upper.holds_for = std::vector<HoldsFor>{{i, eps_te, eps_te <= upper.bound_value + slack}};
      auto lower = population_lower_bound(eps_tr, out.m_cov, out.m_cpt_max);
      lower.holds_for = std::vector<HoldsFor>{{i, eps_te, eps_te >= lower.bound_value - slack}};
      out.upper[i] = std::move(upper);
      out.lower[i] = std::move(lower);
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    const auto& up = out.upper[i].holds_for->front();
    if (!up.satisfied) out.violations.push_back({i, BoundKind::UpperPopulation, up.eps_te, out.upper[i].bound_value});
    const auto& lo = out.lower[i].holds_for->front();
    if (!lo.satisfied) out.violations.push_back({i, BoundKind::LowerPopulation, lo.eps_te, out.lower[i].bound_value});
  }
  return out;
}

}  // namespace shiftlab
