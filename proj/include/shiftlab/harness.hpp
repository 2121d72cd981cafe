#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace shiftlab {

// ---------------------------------------------------------------------------
// Accuracy metrics
// ---------------------------------------------------------------------------

enum class AccuracyUnit { Fraction, Percent };

struct AccuracyTable {
  std::vector<std::string> domains;
  std::vector<double> acc;
  std::vector<std::size_t> sizes;
  AccuracyUnit unit = AccuracyUnit::Percent;

  void validate() const;
};

struct DgMetrics {
  double average = 0.0;
  double overall = 0.0;
  double std = 0.0;             // divisor K - 1
  double std_population = 0.0;  // divisor K
};

nlohmann::json to_json(const DgMetrics& metrics);

/// Throws ValidationError on an empty table or K == 1.
DgMetrics dg_metrics(const AccuracyTable& table);

/// CSV with header domain,accuracy[,size]. Missing sizes default to 1.
AccuracyTable load_accuracy_table(const std::filesystem::path& path, AccuracyUnit unit);

// ---------------------------------------------------------------------------
// Split protocols
// ---------------------------------------------------------------------------

struct ManifestRow {
  std::string id;
  std::string category;
  std::string domain;
};

class Manifest {
 public:
  explicit Manifest(std::vector<ManifestRow> rows);

  const std::vector<ManifestRow>& rows() const noexcept { return rows_; }
  const std::vector<std::string>& categories() const noexcept { return categories_; }
  const std::vector<std::string>& domains() const noexcept { return domains_; }
  /// Sorted domains that occur in `category`.
  std::vector<std::string> domains_of(const std::string& category) const;

 private:
  std::vector<ManifestRow> rows_;
  std::vector<std::string> categories_;
  std::vector<std::string> domains_;
};

/// CSV with header id,category,domain.
Manifest load_manifest(const std::filesystem::path& path);

enum class SplitMode { Classic, FlexibleRandom, FlexibleCompositional };
enum class Role { DominantTrain, MinorTrain, Test, Unused };

std::string to_string(SplitMode mode);
std::string to_string(Role role);

struct SplitCaps {
  std::optional<std::size_t> per_dominant;  // unset: take every row
  std::optional<std::size_t> per_minor = 50;
  std::optional<std::size_t> per_test = 50;
};

struct FlexibleParams {
  // random mode
  std::size_t dominant = 2;
  std::size_t minor = 12;
  std::size_t test = 6;
  // compositional mode
  std::size_t exclusive = 4;
  std::size_t majority = 2;
  std::size_t minority = 12;
  std::size_t compositional_test = 4;

  SplitCaps caps;
};

struct SplitSpec {
  SplitMode mode = SplitMode::Classic;
  /// category -> domain -> role
  std::map<std::string, std::map<std::string, Role>> assignment;
  /// Compositional mode only.
  std::vector<std::string> exclusive_domains;
  SplitCaps caps;
  std::uint64_t seed = 0;
};

struct RowAssignment {
  std::string id;
  Role role = Role::Unused;
};

struct Split {
  SplitSpec spec;
  std::vector<RowAssignment> rows;  // manifest order
  std::vector<std::string> warnings;
};

/// Train-domain rows become dominant-train, test-domain rows test.
Split make_classic_split(const Manifest& manifest, const std::vector<std::string>& train_domains,
                         const std::vector<std::string>& test_domains);

Split make_flexible_split(const Manifest& manifest, SplitMode mode, const FlexibleParams& params,
                          std::uint64_t seed);

/// One {"id":..,"role":..} line per non-unused row, manifest order.
std::string to_jsonl(const Split& split);
nlohmann::json to_json(const SplitSpec& spec);

/// Throws std::logic_error if the split breaks partition, count or
/// compositional-exclusion constraints.
void check_split_integrity(const Manifest& manifest, const Split& split,
                           const FlexibleParams& params);

// ---------------------------------------------------------------------------
// Seed / epoch variance
// ---------------------------------------------------------------------------

/// Accuracies indexed by (seed, epoch, domain). Optional per-domain counts
/// weight the overall accuracy; optional source-validation accuracies enable
/// the selection gap.
class RunLog {
 public:
  struct Entry {
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    std::string domain;
    double accuracy = 0.0;
    std::optional<double> count;
    bool validation = false;  // source-domain validation accuracy
  };

  RunLog(std::string method, std::vector<Entry> entries);

  const std::string& method() const noexcept { return method_; }
  const std::vector<std::uint64_t>& seeds() const noexcept { return seeds_; }
  const std::vector<std::size_t>& epochs() const noexcept { return epochs_; }
  bool has_validation() const noexcept { return has_validation_; }

  /// Size-weighted mean test accuracy at (seed, epoch).
  double overall(std::uint64_t seed, std::size_t epoch) const;
  /// Size-weighted mean validation accuracy at (seed, epoch).
  double validation_overall(std::uint64_t seed, std::size_t epoch) const;

 private:
  std::string method_;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::size_t> epochs_;
  bool has_validation_ = false;
  std::map<std::pair<std::uint64_t, std::size_t>, std::pair<double, double>> test_;  // sum w*a, sum w
  std::map<std::pair<std::uint64_t, std::size_t>, std::pair<double, double>> val_;
};

/// CSV with header method,seed,epoch,domain,accuracy and optional columns
/// count and split (test|val). One method per file.
RunLog load_run_log(const std::filesystem::path& path);

struct VarianceReport {
  double epoch_std = 0.0;
  double seed_std = 0.0;
  std::optional<double> gap;
};

nlohmann::json to_json(const VarianceReport& report);

VarianceReport variance_report(const RunLog& log, std::size_t last_epochs = 10);

}  // namespace shiftlab
