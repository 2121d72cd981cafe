#include "shiftlab/exact.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "shiftlab/error.hpp"
#include "shiftlab/parallel.hpp"

namespace shiftlab {

std::string to_string(MethodTag tag) { return tag == MethodTag::Exact ? "exact" : "estimated"; }

nlohmann::json to_json(const ShiftReport& report) {
  return {
      {"m_cov", report.m_cov},
      {"m_cpt_min", report.m_cpt_min},
      {"m_cpt_max", report.m_cpt_max},
      {"method_tag", to_string(report.method_tag)},
      {"metadata",
       {{"loss", report.loss_kind}, {"M", report.bound_M}, {"hypothesis_class", report.hypothesis_class}}},
  };
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("l1_distance: mass vectors differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total;
}

double l1_distance(const DiscreteDomainPair& pair) { return l1_distance(pair.p_tr(), pair.p_te()); }

double exact_discrepancy(std::span<const double> d1, std::span<const double> d2,
                         const EnumerableClass& hypotheses, const LossFunction& loss,
                         const DiscrepancyOptions& options) {
  if (d1.size() != d2.size()) throw ValidationError("exact_discrepancy: mass vectors differ in length");
  const std::size_t n = hypotheses.size();
  if (n == 0) throw ValidationError("exact_discrepancy: hypothesis class is empty");
  for (const auto& h : hypotheses.members) {
    if (h.size() != d1.size()) {
      throw ValidationError("exact_discrepancy: a hypothesis is defined on " +
                            std::to_string(h.size()) + " points, support has " +
                            std::to_string(d1.size()));
    }
  }
  const auto pairs = static_cast<long double>(n) * static_cast<long double>(n);
  if (pairs > static_cast<long double>(options.max_pair_evaluations)) {
    throw CapExceededError("exact_discrepancy: " + std::to_string(n) + "^2 hypothesis pairs exceed the cap of " +
                           std::to_string(options.max_pair_evaluations));
  }

  // Each chunk writes its own maximum; max is order independent, so the
  // result does not depend on the worker count.
  std::vector<double> best(n, 0.0);
  parallel_for(
      n,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          double local = 0.0;
          const auto& h1 = hypotheses.members[i];
          for (const auto& h2 : hypotheses.members) {
            const double gap =
                std::abs(expected_loss(d1, h1, h2, loss) - expected_loss(d2, h1, h2, loss));
            local = std::max(local, gap);
          }
          best[i] = local;
        }
      },
      options.workers);
  return *std::max_element(best.begin(), best.end());
}

double exact_discrepancy(const DiscreteDomainPair& pair, const EnumerableClass& hypotheses,
                         const LossFunction& loss, const DiscrepancyOptions& options) {
  return exact_discrepancy(pair.p_tr(), pair.p_te(), hypotheses, loss, options);
}

double prop1_discrepancy(const DiscreteDomainPair& pair, double bound_M) {
  if (!(bound_M > 0.0) || !std::isfinite(bound_M)) {
    throw ValidationError("prop1_discrepancy: M must be positive");
  }
  return 0.5 * bound_M * l1_distance(pair);
}

ConceptShift exact_concept_shift(const DiscreteDomainPair& pair, const LossFunction& loss) {
  return {expected_loss(pair.p_tr(), pair.f_tr(), pair.f_te(), loss),
          expected_loss(pair.p_te(), pair.f_tr(), pair.f_te(), loss)};
}

ShiftReport exact_shift_report(const DiscreteDomainPair& pair, const EnumerableClass& hypotheses,
                               const LossFunction& loss) {
  const auto cpt = exact_concept_shift(pair, loss);
  ShiftReport r;
  r.m_cov = exact_discrepancy(pair, hypotheses, loss);
  r.m_cpt_min = cpt.min();
  r.m_cpt_max = cpt.max();
  r.method_tag = MethodTag::Exact;
  r.loss_kind = loss.name();
  r.bound_M = loss.bound();
  r.hypothesis_class = hypotheses.description;
  return r;
}

std::vector<Subset> power_set(std::size_t m) {
  if (m >= 30) throw CapExceededError("power_set: support of " + std::to_string(m) + " points is too large");
  std::vector<Subset> out;
  out.reserve(std::size_t{1} << m);
  for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
    Subset s;
    for (std::size_t x = 0; x < m; ++x) {
      if (mask & (std::size_t{1} << x)) s.push_back(x);
    }
    out.push_back(std::move(s));
  }
  return out;
}

DaDistance da_distance_exact(const DiscreteDomainPair& pair, std::span<const Subset> collection) {
  if (collection.empty()) throw ValidationError("da_distance_exact: collection of subsets is empty");
  const std::size_t m = pair.size();
  std::set<std::vector<std::size_t>> normalized;
  DaDistance out;
  double best_signed = -1.0;  // max over a of p_tr(a) - p_te(a)
  for (std::size_t k = 0; k < collection.size(); ++k) {
    std::vector<std::size_t> s(collection[k].begin(), collection[k].end());
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    double tr = 0.0, te = 0.0;
    for (std::size_t x : s) {
      if (x >= m) {
        throw ValidationError("da_distance_exact: subset " + std::to_string(k) + " references point " +
                              std::to_string(x) + " outside the support of size " + std::to_string(m));
      }
      tr += pair.p_tr()[x];
      te += pair.p_te()[x];
    }
    out.distance = std::max(out.distance, std::abs(tr - te));
    best_signed = std::max(best_signed, tr - te);
    normalized.insert(std::move(s));
  }

  out.complement_closed = true;
  for (const auto& s : normalized) {
    std::vector<std::size_t> complement;
    for (std::size_t x = 0, j = 0; x < m; ++x) {
      if (j < s.size() && s[j] == x) {
        ++j;
      } else {
        complement.push_back(x);
      }
    }
    if (!normalized.contains(complement)) {
      out.complement_closed = false;
      break;
    }
  }
  if (out.complement_closed) {
    // Classifier "source iff x in a": balanced accuracy (p_tr(a) + 1 - p_te(a)) / 2.
    const double best_accuracy = 0.5 * (best_signed + 1.0);
    out.classification_form = 2.0 * best_accuracy - 1.0;
  }
  return out;
}

Eigen::MatrixXd joint_table(std::span<const double> mass, const Labeling& labeling) {
  if (labeling.size() != mass.size()) throw ValidationError("joint_table: labeling and mass differ in length");
  if (labeling.empty()) throw ValidationError("joint_table: empty support");
  const auto k = static_cast<Eigen::Index>(labeling.front().size());
  Eigen::MatrixXd joint(static_cast<Eigen::Index>(mass.size()), k);
  for (std::size_t x = 0; x < mass.size(); ++x) {
    if (static_cast<Eigen::Index>(labeling[x].size()) != k) {
      throw ValidationError("joint_table: labelings range over different label sets");
    }
    for (Eigen::Index y = 0; y < k; ++y) {
      joint(static_cast<Eigen::Index>(x), y) = mass[x] * labeling[x][static_cast<std::size_t>(y)];
    }
  }
  return joint;
}

namespace {

void check_joint(const Eigen::MatrixXd& joint, const char* name) {
  if (joint.size() == 0) throw ValidationError(std::string(name) + " is empty");
  double total = 0.0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i) {
    for (Eigen::Index j = 0; j < joint.cols(); ++j) {
      const double v = joint(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        std::ostringstream msg;
        msg << name << "(" << i << ", " << j << ") = " << v << " is not a valid mass";
        throw ValidationError(msg.str());
      }
      total += v;
    }
  }
  if (std::abs(total - 1.0) > kNormalizationTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << name << " sums to " << total << ", expected 1";
    throw ValidationError(msg.str());
  }
}

// p log(p / q) with 0 log(0 / q) = 0.
double kl_term(double p, double q) { return p > 0.0 ? p * std::log(p / q) : 0.0; }

}  // namespace

KlDecomposition kl_decomposition(const Eigen::MatrixXd& joint_tr, const Eigen::MatrixXd& joint_te) {
  if (joint_tr.rows() != joint_te.rows() || joint_tr.cols() != joint_te.cols()) {
    throw ValidationError("kl_decomposition: joint tables have different shapes");
  }
  check_joint(joint_tr, "joint_tr");
  check_joint(joint_te, "joint_te");
  const Eigen::MatrixXd tr = joint_tr / joint_tr.sum();
  const Eigen::MatrixXd te = joint_te / joint_te.sum();

  for (Eigen::Index x = 0; x < tr.rows(); ++x) {
    for (Eigen::Index y = 0; y < tr.cols(); ++y) {
      if (tr(x, y) > 0.0 && te(x, y) <= 0.0) {
        throw InfiniteDivergenceError("KL divergence is infinite: joint_te(" + std::to_string(x) + ", " +
                                      std::to_string(y) + ") = 0 where joint_tr > 0");
      }
    }
  }

  KlDecomposition out;
  const Eigen::VectorXd px_tr = tr.rowwise().sum();
  const Eigen::VectorXd px_te = te.rowwise().sum();
  for (Eigen::Index x = 0; x < tr.rows(); ++x) {
    out.covariate_kl += kl_term(px_tr[x], px_te[x]);
    if (px_tr[x] <= 0.0) continue;
    double conditional = 0.0;
    for (Eigen::Index y = 0; y < tr.cols(); ++y) {
      out.total_kl += kl_term(tr(x, y), te(x, y));
      conditional += kl_term(tr(x, y) / px_tr[x], te(x, y) / px_te[x]);
    }
    out.concept_kl += px_tr[x] * conditional;
  }
  // Rounding can leave tiny negative values for identical inputs.
  out.concept_kl = std::max(0.0, out.concept_kl);
  out.covariate_kl = std::max(0.0, out.covariate_kl);
  out.total_kl = std::max(0.0, out.total_kl);

  if (std::abs(out.concept_kl + out.covariate_kl - out.total_kl) > 1e-9) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "kl_decomposition: components " << out.concept_kl << " + " << out.covariate_kl
        << " do not sum to total " << out.total_kl;
    throw ComputationError(msg.str());
  }
  return out;
}

}  // namespace shiftlab
