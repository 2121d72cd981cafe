#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace shiftlab {

/// Inputs whose masses sum to 1 within this tolerance are accepted and
/// silently renormalized.
inline constexpr double kNormalizationTolerance = 1e-9;

/// Probability masses over a finite label set {0, ..., size()-1}.
class LabelDistribution {
 public:
  explicit LabelDistribution(std::vector<double> probs);

  static LabelDistribution one_hot(std::size_t label, std::size_t label_count);
  static LabelDistribution uniform(std::size_t label_count);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  /// Most probable label; ties go to the lowest index.
  std::size_t argmax() const noexcept;

  bool operator==(const LabelDistribution&) const = default;

 private:
  std::vector<double> probs_;
};

/// A (possibly stochastic) labeling of a finite support: one distribution per point.
using Labeling = std::vector<LabelDistribution>;

/// Checks a probability mass vector (finite, nonnegative, sums to 1 within
/// kNormalizationTolerance) and returns it renormalized. `what` names the
/// vector in error messages.
std::vector<double> normalized_mass(std::vector<double> mass, std::string_view what);

enum class LossKind { ZeroOne, TotalVariation, CustomTable };

std::string to_string(LossKind kind);

/// Bounded loss over pairs of label distributions, with range [0, bound()].
///
/// zero-one compares argmax labels (lowest index wins ties) and returns
/// bound() on disagreement. total-variation returns bound() * TV(p, q).
/// custom-table looks up table[argmax p][argmax q].
class LossFunction {
 public:
  static LossFunction zero_one(double bound = 1.0);
  static LossFunction total_variation(double bound = 1.0);

  /// Declared symmetry/triangle flags are verified on 1,000 random label
  /// triples (exhaustively when the table has at most 10 labels); a declared
  /// property that fails the check is a ValidationError.
  static LossFunction custom_table(std::vector<std::vector<double>> table, double bound,
                                   bool symmetric, bool triangle);

  /// "zero-one" or "total-variation".
  static LossFunction parse(std::string_view name, double bound = 1.0);

  LossKind kind() const noexcept { return kind_; }
  double bound() const noexcept { return bound_; }
  bool is_symmetric() const noexcept { return symmetric_; }
  bool obeys_triangle() const noexcept { return triangle_; }
  std::string name() const { return to_string(kind_); }

  double operator()(const LabelDistribution& p, const LabelDistribution& q) const;

 private:
  LossFunction(LossKind kind, double bound, bool symmetric, bool triangle)
      : kind_(kind), bound_(bound), symmetric_(symmetric), triangle_(triangle) {}

  LossKind kind_;
  double bound_;
  bool symmetric_;
  bool triangle_;
  std::vector<std::vector<double>> table_;
};

double loss_eval(const LossFunction& loss, const LabelDistribution& p, const LabelDistribution& q);

/// Sum over points x of mass[x] * loss(h1[x], h2[x]).
double expected_loss(std::span<const double> mass, const Labeling& h1, const Labeling& h2,
                     const LossFunction& loss);

/// Either a deterministic label index or a full probability vector.
using LabelSpec = std::variant<std::size_t, std::vector<double>>;

struct DomainPairSpec {
  std::vector<std::string> points;
  std::vector<double> p_tr;
  std::vector<double> p_te;
  std::vector<LabelSpec> f_tr;
  std::vector<LabelSpec> f_te;
  std::size_t label_count = 0;
};

/// A finite input space with training/test masses and labeling functions.
class DiscreteDomainPair {
 public:
  std::size_t size() const noexcept { return points_.size(); }
  std::size_t label_count() const noexcept { return label_count_; }
  const std::vector<std::string>& points() const noexcept { return points_; }
  std::span<const double> p_tr() const noexcept { return p_tr_; }
  std::span<const double> p_te() const noexcept { return p_te_; }
  const Labeling& f_tr() const noexcept { return f_tr_; }
  const Labeling& f_te() const noexcept { return f_te_; }

 private:
  friend DiscreteDomainPair make_discrete_domain_pair(const DomainPairSpec& spec);

  std::vector<std::string> points_;
  std::vector<double> p_tr_;
  std::vector<double> p_te_;
  Labeling f_tr_;
  Labeling f_te_;
  std::size_t label_count_ = 0;
};

DiscreteDomainPair make_discrete_domain_pair(const DomainPairSpec& spec);

/// {"points": [...], "p_tr": [...], "p_te": [...], "f_tr": [...], "f_te": [...],
///  "label_count": k}. Labeling entries are label indices or probability arrays.
DiscreteDomainPair pair_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const DiscreteDomainPair& pair);
DiscreteDomainPair load_pair(const std::filesystem::path& path);

}  // namespace shiftlab
