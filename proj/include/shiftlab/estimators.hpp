#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "json.hpp"
#include "shiftlab/distributions.hpp"
#include "shiftlab/hypothesis.hpp"

namespace shiftlab {

// ---------------------------------------------------------------------------
// Adversarial discrepancy (covariate shift)
// ---------------------------------------------------------------------------

struct AdversarialOptions {
  /// Split each sample 50/50 into ascent and evaluation halves. When false the
  /// objectives are evaluated on the same data the pair was trained on.
  bool held_out = true;
  /// Loss used to score the trained pair; its bound() is the clip ceiling.
  LossFunction loss = LossFunction::zero_one();
};

struct DiscrepancyEstimate {
  double estimate = 0.0;
  double objective_tr_minus_te = 0.0;  // pair trained to ascend L_tr - L_te
  double objective_te_minus_tr = 0.0;  // pair trained to ascend L_te - L_tr
};

/// Trains (h1, h2) jointly twice, once per sign of L_tr(h1,h2) - L_te(h1,h2),
/// and returns the larger absolute objective, clipped to [0, M].
///
/// Gradient ascent runs on the smooth disagreement 1 - <h1(x), h2(x)>, which
/// coincides with the 0-1 loss on one-hot outputs; scoring uses options.loss.
DiscrepancyEstimate estimate_discrepancy_adversarial(const SampleSet& source,
                                                     const SampleSet& target,
                                                     const FamilyDescriptor& family,
                                                     const TrainConfig& cfg,
                                                     const AdversarialOptions& options = {});

// ---------------------------------------------------------------------------
// Fitted-labeling concept shift
// ---------------------------------------------------------------------------

struct ConceptShiftEstimate {
  double disagreement_tr = 0.0;  // mean over S_tr of loss(f_tr_hat(x), f_te_hat(x))
  double disagreement_te = 0.0;  // same over S_te
  double min = 0.0;
  double max = 0.0;
};

ConceptShiftEstimate estimate_concept_shift(const SampleSet& source, const SampleSet& target,
                                            const FamilyDescriptor& family,
                                            const TrainConfig& cfg, const LossFunction& loss);

// ---------------------------------------------------------------------------
// Empirical Rademacher complexity
// ---------------------------------------------------------------------------

struct RademacherEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t draws = 0;
  std::size_t sample_size = 0;
  /// All 2^n sign patterns were enumerated; value is the exact expectation.
  bool exact = false;
  /// The inner sup was approximated by ascent, so value under-estimates.
  bool lower_bound_approximation = false;
};

nlohmann::json to_json(const RademacherEstimate& estimate);

/// Explicit finite class: values[g][i] = g(x_i) on the sample.
struct FunctionTable {
  std::vector<std::vector<double>> values;
};

/// x -> loss(h(x), h'(x)) for all ordered (h, h') in H.
FunctionTable loss_pair_table(const EnumerableClass& hypotheses,
                              std::span<const std::size_t> sample_points, const LossFunction& loss);
/// (x, y) -> loss(h(x), one_hot(y)) for h in H.
FunctionTable loss_composed_table(const EnumerableClass& hypotheses,
                                  std::span<const std::size_t> sample_points,
                                  std::span<const std::size_t> sample_labels,
                                  const LossFunction& loss);

enum class ParametricClassKind { LossPair, LossComposed };

/// L_H or loss o H for a trainable family, zero-one scored (bound M).
struct ParametricLossClass {
  ParametricClassKind kind = ParametricClassKind::LossComposed;
  FamilyDescriptor family;
  double bound_M = 1.0;
  std::size_t restarts = 8;
  std::size_t ascent_steps = 60;
  double ascent_rate = 0.5;
};

using RademacherClass = std::variant<FunctionTable, ParametricLossClass>;

struct RademacherOptions {
  /// Enumerate every sign pattern when n <= this (explicit classes only).
  std::size_t exact_max_n = 20;
  unsigned workers = 0;
};

/// (2/n) * E_sigma sup_g |sum_i sigma_i g(x_i)|, Monte Carlo over `draws`
/// sign vectors (per-draw substreams of `seed`) or exact enumeration.
RademacherEstimate empirical_rademacher(const RademacherClass& cls, const SampleSet& sample,
                                        std::size_t draws, std::uint64_t seed,
                                        const RademacherOptions& options = {});

/// Table-only overload; the sample size is the table's column count.
RademacherEstimate empirical_rademacher(const FunctionTable& table, std::size_t draws,
                                        std::uint64_t seed, const RademacherOptions& options = {});

// ---------------------------------------------------------------------------
// Domain-classifier d_A
// ---------------------------------------------------------------------------

struct DomainClassifierResult {
  double da = 0.0;
  double balanced_accuracy = 0.0;
};

/// Trains a source-vs-target classifier on balanced halves and returns
/// max(0, 2 * held-out balanced accuracy - 1).
DomainClassifierResult domain_classifier(const SampleSet& source, const SampleSet& target,
                                         const FamilyDescriptor& family, const TrainConfig& cfg);

double domain_classifier_da(const SampleSet& source, const SampleSet& target,
                            const FamilyDescriptor& family, const TrainConfig& cfg);

}  // namespace shiftlab
