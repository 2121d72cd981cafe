#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "shiftlab/distributions.hpp"
#include "shiftlab/hypothesis.hpp"

namespace shiftlab {

enum class BoundKind { UpperPopulation, LowerPopulation, UpperEmpirical, LowerEmpirical };

std::string to_string(BoundKind kind);

struct HoldsFor {
  std::size_t hypothesis = 0;
  double eps_te = 0.0;
  bool satisfied = false;
};

/// A bound on eps_te(h) together with the terms it was assembled from.
struct BoundReport {
  BoundKind kind = BoundKind::UpperPopulation;
  double bound_value = 0.0;
  /// Insertion-ordered (name, value). Names: eps_tr, m_cov, m_cpt_min or
  /// m_cpt_max, and for empirical kinds rad_loss_pair_tr, rad_loss_pair_te,
  /// rad_loss_composed_tr, residual, delta, n_tr, n_te, M.
  std::vector<std::pair<std::string, double>> terms;
  std::optional<std::vector<HoldsFor>> holds_for;

  double term(const std::string& name) const;
  /// bound_value rebuilt from terms according to kind.
  double recompute() const;
  /// e.g. "eps_te(h) <= eps_tr + m_cov + m_cpt_min = 0.6".
  std::string inequality() const;
};

nlohmann::json to_json(const BoundReport& report);

/// eps_tr + m_cov + m_cpt_min
BoundReport population_upper_bound(double eps_tr, double m_cov, double m_cpt_min);
/// m_cpt_max - m_cov - eps_tr, unclipped.
BoundReport population_lower_bound(double eps_tr, double m_cov, double m_cpt_max);

struct EmpiricalTerms {
  double eps_tr_hat = 0.0;
  double m_cov_hat = 0.0;
  double m_cpt = 0.0;  // m_cpt_min for the upper bound, m_cpt_max for the lower
  double rad_loss_pair_tr = 0.0;
  double rad_loss_pair_te = 0.0;
  double rad_loss_composed_tr = 0.0;
  std::size_t n_tr = 1;
  std::size_t n_te = 1;
  double bound_M = 1.0;
  double delta = 0.05;
};

/// Finite-sample residual with explicit constants: three events at
/// confidence delta/3 each contribute 3M sqrt(log(6/delta) / (2n)); two of
/// them are on the training sample.
double empirical_residual(std::size_t n_tr, std::size_t n_te, double bound_M, double delta);

BoundReport empirical_upper_bound(const EmpiricalTerms& terms);
BoundReport empirical_lower_bound(const EmpiricalTerms& terms);

struct BoundViolation {
  std::size_t hypothesis = 0;
  BoundKind kind = BoundKind::UpperPopulation;
  double eps_te = 0.0;
  double bound_value = 0.0;
};

struct BoundVerification {
  double m_cov = 0.0;
  double m_cpt_min = 0.0;
  double m_cpt_max = 0.0;
  std::vector<BoundReport> upper;  // one per hypothesis, holds_for set
  std::vector<BoundReport> lower;
  std::vector<BoundViolation> violations;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const BoundVerification& verification);

/// Checks both population bounds for every h in H by exact evaluation.
/// Stochastic f_tr / f_te are rounded to their argmax labels (with a warning).
/// Throws ValidationError when the loss does not declare symmetry and the
/// triangle inequality, or when a rounded labeling function is not in H.
BoundVerification verify_bounds_bruteforce(const DiscreteDomainPair& pair,
                                           const EnumerableClass& hypotheses,
                                           const LossFunction& loss, double slack = 1e-9);

}  // namespace shiftlab
