#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "shiftlab/distributions.hpp"
#include "shiftlab/hypothesis.hpp"

namespace shiftlab {

enum class MethodTag { Exact, Estimated };

std::string to_string(MethodTag tag);

/// Covariate / concept shift metrics for one domain pair.
struct ShiftReport {
  double m_cov = 0.0;
  double m_cpt_min = 0.0;
  double m_cpt_max = 0.0;
  MethodTag method_tag = MethodTag::Exact;
  std::string loss_kind;
  double bound_M = 1.0;
  std::string hypothesis_class;
};

nlohmann::json to_json(const ShiftReport& report);

double l1_distance(std::span<const double> a, std::span<const double> b);
double l1_distance(const DiscreteDomainPair& pair);

struct DiscrepancyOptions {
  std::uint64_t max_pair_evaluations = 100'000'000;
  unsigned workers = 0;  // 0: worker_count()
};

/// max over ordered (h1, h2) in H x H of |L_d1(h1,h2) - L_d2(h1,h2)|.
double exact_discrepancy(std::span<const double> d1, std::span<const double> d2,
                         const EnumerableClass& hypotheses, const LossFunction& loss,
                         const DiscrepancyOptions& options = {});
double exact_discrepancy(const DiscreteDomainPair& pair, const EnumerableClass& hypotheses,
                         const LossFunction& loss, const DiscrepancyOptions& options = {});

/// Closed form for the class of all labelings: (M/2) * l1(p_tr, p_te).
double prop1_discrepancy(const DiscreteDomainPair& pair, double bound_M);

struct ConceptShift {
  double loss_tr = 0.0;  // L_tr(f_tr, f_te)
  double loss_te = 0.0;  // L_te(f_tr, f_te)
  double min() const { return loss_tr < loss_te ? loss_tr : loss_te; }
  double max() const { return loss_tr < loss_te ? loss_te : loss_tr; }
};

ConceptShift exact_concept_shift(const DiscreteDomainPair& pair, const LossFunction& loss);

/// m_cov by brute force over `hypotheses`, concept terms from the pair's labelings.
ShiftReport exact_shift_report(const DiscreteDomainPair& pair, const EnumerableClass& hypotheses,
                               const LossFunction& loss);

using Subset = std::vector<std::size_t>;

/// All 2^m subsets of {0, ..., m-1}, ordered by bitmask.
std::vector<Subset> power_set(std::size_t m);

struct DaDistance {
  double distance = 0.0;
  bool complement_closed = false;
  /// 2 * (best balanced domain-classification accuracy) - 1; set only when
  /// the collection is closed under complement.
  std::optional<double> classification_form;
};

DaDistance da_distance_exact(const DiscreteDomainPair& pair, std::span<const Subset> collection);

struct KlDecomposition {
  double concept_kl = 0.0;
  double covariate_kl = 0.0;
  double total_kl = 0.0;
};

/// Natural-log KL(joint_tr || joint_te) split into the conditional (concept)
/// and marginal (covariate) parts. Rows index X, columns index Y.
KlDecomposition kl_decomposition(const Eigen::MatrixXd& joint_tr, const Eigen::MatrixXd& joint_te);

/// joint(x, y) = mass[x] * labeling[x][y].
Eigen::MatrixXd joint_table(std::span<const double> mass, const Labeling& labeling);

}  // namespace shiftlab
