#include "shiftlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "csv.hpp"
#include "shiftlab/error.hpp"
#include "shiftlab/random.hpp"

namespace shiftlab {

using detail::blank_line;
using detail::parse_double;
using detail::parse_index;
using detail::split_csv;

namespace {

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::ifstream open_csv(const std::filesystem::path& path, std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  header = split_csv(line);
  return in;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name,
                   const std::filesystem::path& path) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ValidationError(path.string() + ":1: missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::optional<std::size_t> optional_column(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

// ---------------------------------------------------------------------------
// Accuracy metrics

void AccuracyTable::validate() const {
  if (acc.empty()) throw ValidationError("accuracy table is empty");
  if (domains.size() != acc.size() || sizes.size() != acc.size()) {
    throw ValidationError("accuracy table columns differ in length");
  }
  const double top = unit == AccuracyUnit::Percent ? 100.0 : 1.0;
  for (std::size_t k = 0; k < acc.size(); ++k) {
    if (!std::isfinite(acc[k]) || acc[k] < 0.0 || acc[k] > top) {
      throw ValidationError("accuracy of domain '" + domains[k] + "' is " + std::to_string(acc[k]) +
                            ", outside [0, " + std::to_string(top) + "]");
    }
    if (sizes[k] == 0) throw ValidationError("size of domain '" + domains[k] + "' must be positive");
  }
}

nlohmann::json to_json(const DgMetrics& m) {
  return {{"average", m.average}, {"overall", m.overall}, {"std", m.std}, {"std_population", m.std_population}};
}

DgMetrics dg_metrics(const AccuracyTable& table) {
  table.validate();
  const std::size_t k = table.acc.size();
  if (k == 1) throw ValidationError("std is undefined for a single domain (K = 1)");
  DgMetrics m;
  double weighted = 0.0, total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    m.average += table.acc[i];
    weighted += static_cast<double>(table.sizes[i]) * table.acc[i];
    total += static_cast<double>(table.sizes[i]);
  }
  m.average /= static_cast<double>(k);
  m.overall = weighted / total;
  double ss = 0.0;
  for (double a : table.acc) ss += (a - m.average) * (a - m.average);
  m.std = std::sqrt(ss / static_cast<double>(k - 1));
  m.std_population = std::sqrt(ss / static_cast<double>(k));
  return m;
}

AccuracyTable load_accuracy_table(const std::filesystem::path& path, AccuracyUnit unit) {
  std::vector<std::string> header;
  auto in = open_csv(path, header);
  const auto c_domain = column(header, "domain", path);
  const auto c_acc = column(header, "accuracy", path);
  const auto c_size = optional_column(header, "size");
  AccuracyTable table;
  table.unit = unit;
  std::string line;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (blank_line(line)) continue;
    const auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw ValidationError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(cells.size()));
    }
    table.domains.push_back(cells[c_domain]);
    table.acc.push_back(parse_double(cells[c_acc], where + " (accuracy)"));
    table.sizes.push_back(c_size ? parse_index(cells[*c_size], where + " (size)") : 1);
  }
  try {
    table.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return table;
}

// ---------------------------------------------------------------------------
// Manifest

Manifest::Manifest(std::vector<ManifestRow> rows) : rows_(std::move(rows)) {
  if (rows_.empty()) throw ValidationError("manifest is empty");
  std::set<std::string> ids, categories, domains;
  for (const auto& r : rows_) {
    if (r.id.empty() || r.category.empty() || r.domain.empty()) {
      throw ValidationError("manifest row '" + r.id + "' has an empty field");
    }
    if (!ids.insert(r.id).second) throw ValidationError("duplicate manifest id '" + r.id + "'");
    categories.insert(r.category);
    domains.insert(r.domain);
  }
  categories_.assign(categories.begin(), categories.end());
  domains_.assign(domains.begin(), domains.end());
}

std::vector<std::string> Manifest::domains_of(const std::string& category) const {
  std::set<std::string> out;
  for (const auto& r : rows_) {
    if (r.category == category) out.insert(r.domain);
  }
  return {out.begin(), out.end()};
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::vector<std::string> header;
  auto in = open_csv(path, header);
  const auto c_id = column(header, "id", path);
  const auto c_cat = column(header, "category", path);
  const auto c_dom = column(header, "domain", path);
  std::vector<ManifestRow> rows;
  std::string line;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (blank_line(line)) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    rows.push_back({cells[c_id], cells[c_cat], cells[c_dom]});
  }
  try {
    return Manifest(std::move(rows));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Splits

std::string to_string(SplitMode mode) {
  switch (mode) {
    case SplitMode::Classic: return "classic";
    case SplitMode::FlexibleRandom: return "flexible-random";
    case SplitMode::FlexibleCompositional: return "flexible-compositional";
  }
  return "unknown";
}

std::string to_string(Role role) {
  switch (role) {
    case Role::DominantTrain: return "dominant-train";
    case Role::MinorTrain: return "minor-train";
    case Role::Test: return "test";
    case Role::Unused: return "unused";
  }
  return "unknown";
}

namespace {

std::optional<std::size_t> cap_for(const SplitCaps& caps, Role role) {
  switch (role) {
    case Role::DominantTrain: return caps.per_dominant;
    case Role::MinorTrain: return caps.per_minor;
    case Role::Test: return caps.per_test;
    case Role::Unused: return 0;
  }
  return 0;
}

// Assigns rows from spec.assignment, sampling each (category, domain) cell
// down to its cap with a cell-specific substream.
Split materialize(const Manifest& manifest, SplitSpec spec) {
  Split split;
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < manifest.rows().size(); ++i) {
    const auto& r = manifest.rows()[i];
    cells[{r.category, r.domain}].push_back(i);
  }
  split.rows.resize(manifest.rows().size());
  for (std::size_t i = 0; i < manifest.rows().size(); ++i) split.rows[i].id = manifest.rows()[i].id;

  for (auto& [key, members] : cells) {
    const auto& [category, domain] = key;
    Role role = Role::Unused;
    if (const auto c = spec.assignment.find(category); c != spec.assignment.end()) {
      if (const auto d = c->second.find(domain); d != c->second.end()) role = d->second;
    }
    if (role == Role::Unused) continue;
    const auto cap = cap_for(spec.caps, role);
    if (cap && members.size() > *cap) {
      Rng rng = Rng::substream(spec.seed, "cap:" + category + "/" + domain);
      rng.shuffle(std::span<std::size_t>(members));
      members.resize(*cap);
    } else if (cap && members.size() < *cap) {
      split.warnings.push_back("category '" + category + "', domain '" + domain + "' has " +
                               std::to_string(members.size()) + " rows, fewer than the cap of " +
                               std::to_string(*cap) + "; taking all");
    }
    for (std::size_t i : members) split.rows[i].role = role;
  }
  split.spec = std::move(spec);
  return split;
}

void require_known(const Manifest& manifest, const std::vector<std::string>& domains, const char* which) {
  if (domains.empty()) throw ValidationError(std::string(which) + " domain list is empty");
  for (const auto& d : domains) {
    if (!std::binary_search(manifest.domains().begin(), manifest.domains().end(), d)) {
      throw ValidationError(std::string("unknown ") + which + " domain '" + d + "'");
    }
  }
}

}  // namespace

Split make_classic_split(const Manifest& manifest, const std::vector<std::string>& train_domains,
                         const std::vector<std::string>& test_domains) {
  require_known(manifest, train_domains, "train");
  require_known(manifest, test_domains, "test");
  const std::set<std::string> train(train_domains.begin(), train_domains.end());
  for (const auto& d : test_domains) {
    if (train.contains(d)) throw ValidationError("domain '" + d + "' is in both the train and test lists");
  }
  const std::set<std::string> test(test_domains.begin(), test_domains.end());

  SplitSpec spec;
  spec.mode = SplitMode::Classic;
  spec.caps = {std::nullopt, std::nullopt, std::nullopt};
  for (const auto& category : manifest.categories()) {
    auto& roles = spec.assignment[category];
    for (const auto& domain : manifest.domains()) {
      roles[domain] = train.contains(domain) ? Role::DominantTrain
                      : test.contains(domain) ? Role::Test
                                              : Role::Unused;
    }
  }
  return materialize(manifest, std::move(spec));
}

Split make_flexible_split(const Manifest& manifest, SplitMode mode, const FlexibleParams& params,
                          std::uint64_t seed) {
  if (mode == SplitMode::Classic) throw ValidationError("make_flexible_split: mode must be random or compositional");
  SplitSpec spec;
  spec.mode = mode;
  spec.caps = params.caps;
  spec.seed = seed;

  std::set<std::string> exclusive;
  if (mode == SplitMode::FlexibleCompositional) {
    if (params.majority > params.exclusive) {
      throw ValidationError("majority count exceeds the number of exclusive domains");
    }
    std::vector<std::string> pool = manifest.domains();
    if (pool.size() < params.exclusive) {
      throw ValidationError("manifest has " + std::to_string(pool.size()) + " domains, fewer than the " +
                            std::to_string(params.exclusive) + " exclusive domains requested");
    }
    Rng rng = Rng::substream(seed, "exclusive");
    rng.shuffle(std::span<std::string>(pool));
    pool.resize(params.exclusive);
    std::sort(pool.begin(), pool.end());
    spec.exclusive_domains = pool;
    exclusive.insert(pool.begin(), pool.end());
  }

  const auto& categories = manifest.categories();
  for (std::size_t ci = 0; ci < categories.size(); ++ci) {
    const auto& category = categories[ci];
    const auto domains = manifest.domains_of(category);
    auto& roles = spec.assignment[category];
    for (const auto& d : domains) roles[d] = Role::Unused;
    Rng rng = Rng::substream(seed, "category", ci);

    auto assign = [&](std::vector<std::string> pool, std::initializer_list<std::pair<std::size_t, Role>> plan) {
      std::size_t needed = 0;
      for (const auto& [count, role] : plan) needed += count;
      if (pool.size() < needed) {
        throw ValidationError("category '" + category + "' has " + std::to_string(pool.size()) +
                              " eligible domains, " + std::to_string(needed) + " are required");
      }
      rng.shuffle(std::span<std::string>(pool));
      std::size_t pos = 0;
      for (const auto& [count, role] : plan) {
        for (std::size_t j = 0; j < count; ++j) roles[pool[pos++]] = role;
      }
    };

    if (mode == SplitMode::FlexibleRandom) {
      assign(domains, {{params.dominant, Role::DominantTrain},
                       {params.minor, Role::MinorTrain},
                       {params.test, Role::Test}});
    } else {
      std::vector<std::string> own_exclusive, sharing;
      for (const auto& d : domains) (exclusive.contains(d) ? own_exclusive : sharing).push_back(d);
      assign(own_exclusive, {{params.majority, Role::DominantTrain}});
      assign(sharing, {{params.minority, Role::MinorTrain}, {params.compositional_test, Role::Test}});
    }
  }
  return materialize(manifest, std::move(spec));
}

std::string to_jsonl(const Split& split) {
  std::string out;
  for (const auto& r : split.rows) {
    if (r.role == Role::Unused) continue;
    out += nlohmann::json{{"id", r.id}, {"role", to_string(r.role)}}.dump();
    out += '\n';
  }
  return out;
}

nlohmann::json to_json(const SplitSpec& spec) {
  nlohmann::json assignment = nlohmann::json::object();
  for (const auto& [category, roles] : spec.assignment) {
    nlohmann::json by_role = nlohmann::json::object();
    for (const auto& [domain, role] : roles) {
      if (role != Role::Unused) by_role[to_string(role)].push_back(domain);
    }
    assignment[category] = by_role;
  }
  auto cap = [](const std::optional<std::size_t>& c) { return c ? nlohmann::json(*c) : nlohmann::json(); };
  return {
      {"mode", to_string(spec.mode)},
      {"seed", spec.seed},
      {"caps", {{"per_dominant", cap(spec.caps.per_dominant)},
                {"per_minor", cap(spec.caps.per_minor)},
                {"per_test", cap(spec.caps.per_test)}}},
      {"exclusive_domains", spec.exclusive_domains},
      {"assignment", assignment},
  };
}

void check_split_integrity(const Manifest& manifest, const Split& split, const FlexibleParams& params) {
  auto fail = [](const std::string& what) { throw std::logic_error("split integrity: " + what); };
  const auto& rows = manifest.rows();
  if (split.rows.size() != rows.size()) fail("row count differs from the manifest");

  std::map<std::pair<std::string, std::string>, std::size_t> available, used;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (split.rows[i].id != rows[i].id) fail("row " + std::to_string(i) + " is out of manifest order");
    const auto& roles = split.spec.assignment.at(rows[i].category);
    const auto it = roles.find(rows[i].domain);
    const Role domain_role = it == roles.end() ? Role::Unused : it->second;
    if (split.rows[i].role != Role::Unused && split.rows[i].role != domain_role) {
      fail("row '" + rows[i].id + "' has a role its domain was not assigned");
    }
    ++available[{rows[i].category, rows[i].domain}];
    if (split.rows[i].role != Role::Unused) ++used[{rows[i].category, rows[i].domain}];
  }

  const std::set<std::string> exclusive(split.spec.exclusive_domains.begin(), split.spec.exclusive_domains.end());
  for (const auto& [category, roles] : split.spec.assignment) {
    std::size_t counts[4] = {0, 0, 0, 0};
    for (const auto& [domain, role] : roles) {
      ++counts[static_cast<int>(role)];
      const auto key = std::make_pair(category, domain);
      const std::size_t have = available.contains(key) ? available.at(key) : 0;
      const std::size_t took = used.contains(key) ? used.at(key) : 0;
      const auto cap = cap_for(split.spec.caps, role);
      const std::size_t expect = role == Role::Unused ? 0 : cap ? std::min(*cap, have) : have;
      if (took != expect) {
        fail("category '" + category + "', domain '" + domain + "' uses " + std::to_string(took) +
             " rows, expected " + std::to_string(expect));
      }
      if (split.spec.mode == SplitMode::FlexibleCompositional) {
        if (role == Role::Test && exclusive.contains(domain)) {
          fail("exclusive domain '" + domain + "' is a test domain of '" + category + "'");
        }
        if (role == Role::DominantTrain && !exclusive.contains(domain)) {
          fail("dominant domain '" + domain + "' of '" + category + "' is not exclusive");
        }
        if (role == Role::MinorTrain && exclusive.contains(domain)) {
          fail("exclusive domain '" + domain + "' is a minor domain of '" + category + "'");
        }
      }
    }
    const auto dominant = counts[static_cast<int>(Role::DominantTrain)];
    const auto minor = counts[static_cast<int>(Role::MinorTrain)];
    const auto test = counts[static_cast<int>(Role::Test)];
    if (split.spec.mode == SplitMode::FlexibleRandom &&
        (dominant != params.dominant || minor != params.minor || test != params.test)) {
      fail("category '" + category + "' has role counts " + std::to_string(dominant) + "/" +
           std::to_string(minor) + "/" + std::to_string(test));
    }
    if (split.spec.mode == SplitMode::FlexibleCompositional &&
        (dominant != params.majority || minor != params.minority || test != params.compositional_test)) {
      fail("category '" + category + "' has role counts " + std::to_string(dominant) + "/" +
           std::to_string(minor) + "/" + std::to_string(test));
    }
    if (split.spec.mode == SplitMode::Classic && minor != 0) fail("classic split has minor domains");
  }
  if (split.spec.mode == SplitMode::FlexibleCompositional && exclusive.size() != params.exclusive) {
    fail("expected " + std::to_string(params.exclusive) + " exclusive domains, found " +
         std::to_string(exclusive.size()));
  }
}

// ---------------------------------------------------------------------------
// Run logs and variance

RunLog::RunLog(std::string method, std::vector<Entry> entries) : method_(std::move(method)) {
  if (entries.empty()) throw ValidationError("run log is empty");
  std::set<std::uint64_t> seeds;
  std::set<std::size_t> epochs;
  std::set<std::string> test_domains, val_domains;
  std::set<std::tuple<std::uint64_t, std::size_t, std::string, bool>> seen;
  for (const auto& e : entries) {
    if (!std::isfinite(e.accuracy)) throw ValidationError("run log accuracy is not finite");
    if (e.count && !(*e.count > 0.0)) throw ValidationError("run log count must be positive");
    if (!seen.insert({e.seed, e.epoch, e.domain, e.validation}).second) {
      throw ValidationError("run log has two entries for seed " + std::to_string(e.seed) + ", epoch " +
                            std::to_string(e.epoch) + ", domain '" + e.domain + "'");
    }
    seeds.insert(e.seed);
    epochs.insert(e.epoch);
    (e.validation ? val_domains : test_domains).insert(e.domain);
    auto& cell = (e.validation ? val_ : test_)[{e.seed, e.epoch}];
    const double w = e.count.value_or(1.0);
    cell.first += w * e.accuracy;
    cell.second += w;
  }
  seeds_.assign(seeds.begin(), seeds.end());
  epochs_.assign(epochs.begin(), epochs.end());
  has_validation_ = !val_domains.empty();
  const std::size_t cells = seeds_.size() * epochs_.size();
  if (seen.size() != cells * (test_domains.size() + val_domains.size())) {
    throw ValidationError("run log does not cover every (seed, epoch, domain) combination");
  }
}

double RunLog::overall(std::uint64_t seed, std::size_t epoch) const {
  const auto it = test_.find({seed, epoch});
  if (it == test_.end()) {
    throw ValidationError("run log has no test entries for seed " + std::to_string(seed) + ", epoch " +
                          std::to_string(epoch));
  }
  return it->second.first / it->second.second;
}

double RunLog::validation_overall(std::uint64_t seed, std::size_t epoch) const {
  const auto it = val_.find({seed, epoch});
  if (it == val_.end()) {
    throw ValidationError("run log has no validation entries for seed " + std::to_string(seed) + ", epoch " +
                          std::to_string(epoch));
  }
  return it->second.first / it->second.second;
}

RunLog load_run_log(const std::filesystem::path& path) {
  std::vector<std::string> header;
  auto in = open_csv(path, header);
  const auto c_method = column(header, "method", path);
  const auto c_seed = column(header, "seed", path);
  const auto c_epoch = column(header, "epoch", path);
  const auto c_domain = column(header, "domain", path);
  const auto c_acc = column(header, "accuracy", path);
  const auto c_count = optional_column(header, "count");
  const auto c_split = optional_column(header, "split");

  std::string method;
  std::vector<RunLog::Entry> entries;
  std::string line;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (blank_line(line)) continue;
    const auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw ValidationError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(cells.size()));
    }
    if (method.empty()) method = cells[c_method];
    if (cells[c_method] != method) {
      throw ValidationError(where + ": method '" + cells[c_method] + "' differs from '" + method +
                            "'; one method per log");
    }
    RunLog::Entry e;
    e.seed = parse_index(cells[c_seed], where + " (seed)");
    e.epoch = parse_index(cells[c_epoch], where + " (epoch)");
    e.domain = cells[c_domain];
    e.accuracy = parse_double(cells[c_acc], where + " (accuracy)");
    if (c_count && !cells[*c_count].empty()) e.count = parse_double(cells[*c_count], where + " (count)");
    if (c_split) {
      const auto& s = cells[*c_split];
      if (s == "val") {
        e.validation = true;
      } else if (s != "test" && !s.empty()) {
        throw ValidationError(where + " (split): '" + s + "' is neither 'test' nor 'val'");
      }
    }
    entries.push_back(std::move(e));
  }
  try {
    return RunLog(method, std::move(entries));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const VarianceReport& r) {
  nlohmann::json out = {{"epoch_std", r.epoch_std}, {"seed_std", r.seed_std}};
  if (r.gap) out["gap"] = *r.gap;
  return out;
}

VarianceReport variance_report(const RunLog& log, std::size_t last_epochs) {
  if (log.seeds().size() < 2) {
    throw ValidationError("variance report needs at least 2 seeds, log has " + std::to_string(log.seeds().size()));
  }
  if (last_epochs == 0 || log.epochs().size() < last_epochs) {
    throw ValidationError("variance report needs " + std::to_string(last_epochs) + " epochs, log has " +
                          std::to_string(log.epochs().size()));
  }
  const std::vector<std::size_t> window(log.epochs().end() - static_cast<std::ptrdiff_t>(last_epochs),
                                        log.epochs().end());
  const std::size_t final_epoch = window.back();

  VarianceReport r;
  std::vector<double> finals, gaps;
  for (auto seed : log.seeds()) {
    std::vector<double> acc;
    for (auto epoch : window) acc.push_back(log.overall(seed, epoch));
    r.epoch_std += sample_std(acc);
    finals.push_back(log.overall(seed, final_epoch));
    if (log.has_validation()) {
      // Oracle selection picks the epoch with the best test accuracy; source
      // selection picks the best validation epoch. Ties go to the earlier epoch.
      std::size_t oracle = 0, source = 0;
      for (std::size_t j = 1; j < window.size(); ++j) {
        if (acc[j] > acc[oracle]) oracle = j;
        if (log.validation_overall(seed, window[j]) > log.validation_overall(seed, window[source])) source = j;
      }
      gaps.push_back(acc[oracle] - acc[source]);
    }
  }
  r.epoch_std /= static_cast<double>(log.seeds().size());
  r.seed_std = sample_std(finals);
  if (!gaps.empty()) r.gap = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
  return r;
}

}  // namespace shiftlab
