#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "shiftlab/distributions.hpp"

namespace shiftlab {

class Rng;

/// Finite list of labelings over a discrete support of support_size() points.
struct EnumerableClass {
  std::vector<Labeling> members;
  std::string description;

  std::size_t size() const noexcept { return members.size(); }
  std::size_t support_size() const noexcept {
    return members.empty() ? 0 : members.front().size();
  }
};

inline constexpr std::uint64_t kDefaultLabelingCap = 1'000'000;

/// All label_count^support_size deterministic labelings, lexicographic in
/// (h(x0), h(x1), ...). Throws CapExceededError above `cap`.
EnumerableClass enumerate_all_labelings(std::size_t support_size, std::size_t label_count,
                                        std::uint64_t cap = kDefaultLabelingCap);

/// Index of `labeling` among `cls.members`, if present.
std::optional<std::size_t> find_member(const EnumerableClass& cls, const Labeling& labeling);

struct SampleRecord {
  std::string id;
  std::string domain;
  std::size_t label = 0;
  std::vector<double> feature;
};

/// Labeled (feature, category, domain) records sharing one feature dimension.
class SampleSet {
 public:
  SampleSet(std::vector<SampleRecord> records, std::size_t label_count);

  std::size_t size() const noexcept { return records_.size(); }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t label_count() const noexcept { return label_count_; }
  const std::vector<SampleRecord>& records() const noexcept { return records_; }
  const SampleRecord& operator[](std::size_t i) const { return records_[i]; }

  /// Sorted distinct domain tags.
  std::vector<std::string> domains() const;

  SampleSet subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<SampleRecord> records_;
  std::size_t dimension_ = 0;
  std::size_t label_count_ = 0;
};

/// CSV with header id,domain,label,f0..f{d-1}. label_count defaults to max label + 1.
SampleSet load_samples_csv(const std::filesystem::path& path,
                           std::optional<std::size_t> label_count = std::nullopt);
/// One {"id":..,"domain":..,"label":..,"feature":[..]} object per line.
SampleSet load_samples_jsonl(const std::filesystem::path& path,
                             std::optional<std::size_t> label_count = std::nullopt);
/// Dispatches on extension (.jsonl / .json -> JSONL, otherwise CSV).
SampleSet load_samples(const std::filesystem::path& path,
                       std::optional<std::size_t> label_count = std::nullopt);

enum class ModelKind { Linear, OneHiddenLayer };

struct FamilyDescriptor {
  ModelKind kind = ModelKind::Linear;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::size_t label_count = 0;

  /// "linear" or "mlp:<width>".
  static FamilyDescriptor parse(std::string_view text, std::size_t input_dim,
                                std::size_t label_count);
  std::string name() const;
  void validate() const;
  std::size_t parameter_count() const;
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;

  /// lr 0.1, batch 64, 20 epochs: the settings used for the metric estimates.
  static TrainConfig metric_preset(std::uint64_t seed = 0);
  void validate() const;
};

enum class Objective { Category, Domain };

/// Softmax classifier: multinomial-linear or one tanh hidden layer.
///
/// Parameters live in one flat vector. Linear layout: W (k x d, row-major), b (k).
/// One-hidden-layer layout: W1 (h x d), b1 (h), W2 (k x h), b2 (k).
class Model {
 public:
  Model(FamilyDescriptor family, std::vector<double> params);

  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Model initialize(const FamilyDescriptor& family, Rng& rng);

  const FamilyDescriptor& family() const noexcept { return family_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  Eigen::VectorXd logits(std::span<const double> x) const;
  Eigen::VectorXd probabilities(std::span<const double> x) const;

  /// grad += d(objective)/d(params), given d(objective)/d(logits) at x.
  void backward(std::span<const double> x, const Eigen::VectorXd& dlogits,
                std::span<double> grad) const;

  double cross_entropy(std::span<const double> x, std::size_t label) const;
  /// grad += d cross_entropy / d params.
  void cross_entropy_gradient(std::span<const double> x, std::size_t label,
                              std::span<double> grad) const;

 private:
  void check_input(std::span<const double> x) const;

  FamilyDescriptor family_;
  std::vector<double> params_;
};

/// Mini-batch SGD on mean cross-entropy (+ weight_decay/2 * |theta|^2).
/// Deterministic given cfg.seed. Throws DivergenceError on a non-finite loss.
Model train_classifier(const SampleSet& data, const FamilyDescriptor& family,
                       const TrainConfig& cfg, Objective objective = Objective::Category);

LabelDistribution predict(const Model& model, std::span<const double> feature);

/// Target index for each record under the given objective. Domain targets
/// index into data.domains().
std::vector<std::size_t> training_targets(const SampleSet& data, Objective objective);

nlohmann::json to_json(const Model& model);
Model model_from_json(const nlohmann::json& doc);

}  // namespace shiftlab
