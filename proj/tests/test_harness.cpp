#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "oracles.hpp"
#include "shiftlab/error.hpp"
#include "shiftlab/harness.hpp"

using namespace shiftlab;
using oracle::write_temp;

namespace {

AccuracyTable table(std::vector<double> acc, std::vector<std::size_t> sizes = {}) {
  AccuracyTable t;
  for (std::size_t k = 0; k < acc.size(); ++k) t.domains.push_back("d" + std::to_string(k));
  if (sizes.empty()) sizes.assign(acc.size(), 1);
  t.acc = std::move(acc);
  t.sizes = std::move(sizes);
  return t;
}

Manifest ten_domain_manifest() {
  const std::vector<std::string> domains{"grass", "water", "rock",   "autumn", "indoor",
                                         "dim",   "sand",  "winter", "outdoor", "dark"};
  std::vector<ManifestRow> rows;
  for (const std::string cat : {"dog", "car", "bird"}) {
    for (const auto& d : domains) {
      for (int i = 0; i < 3; ++i) rows.push_back({cat + "/" + d + "/" + std::to_string(i), cat, d});
    }
  }
  return Manifest(std::move(rows));
}

std::vector<RunLog::Entry> grid(const std::vector<std::uint64_t>& seeds, std::size_t epochs,
                                const std::function<double(std::uint64_t, std::size_t)>& acc) {
  std::vector<RunLog::Entry> out;
  for (auto s : seeds) {
    for (std::size_t e = 1; e <= epochs; ++e) out.push_back({s, e, "test", acc(s, e), std::nullopt, false});
  }
  return out;
}

}  // namespace

TEST_CASE("dg metrics on a reference accuracy row") {
  const auto m = dg_metrics(table({80.95, 79.96, 73.30, 76.27}));
  CHECK(std::abs(m.average - 77.62) <= 0.005);
  CHECK(std::abs(m.std_population - 3.05) <= 0.01);
  CHECK(m.std == doctest::Approx(3.514).epsilon(1e-3));
  CHECK(m.overall == doctest::Approx(m.average));
}

TEST_CASE("dg metrics examples and guards") {
  const auto flat = dg_metrics(table({70, 70, 70}, {5, 10, 200}));
  CHECK(flat.average == doctest::Approx(70));
  CHECK(flat.overall == doctest::Approx(70));
  CHECK(flat.std == 0.0);
  CHECK(dg_metrics(table({80, 70, 60}, {100, 100, 200})).overall == doctest::Approx(67.5));
  CHECK_THROWS_AS(dg_metrics(table({70})), ValidationError);
  CHECK_THROWS_AS(dg_metrics(table({})), ValidationError);
  CHECK_THROWS_AS(dg_metrics(table({70, 120})), ValidationError);
  auto frac = table({0.7, 0.8});
  frac.unit = AccuracyUnit::Fraction;
  CHECK(dg_metrics(frac).average == doctest::Approx(0.75));
  frac.acc = {70, 80};
  CHECK_THROWS_AS(dg_metrics(frac), ValidationError);
  CHECK_THROWS_AS(dg_metrics(table({70, 80}, {1, 0})), ValidationError);
}

TEST_CASE("dg metrics invariants") {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 2 + rng.below(8);
    std::vector<double> acc(k);
    for (auto& a : acc) a = rng.uniform(0, 100);
    const std::size_t n = 1 + rng.below(50);
    const auto equal = dg_metrics(table(acc, std::vector<std::size_t>(k, n)));
    CHECK(equal.average == doctest::Approx(equal.overall).epsilon(1e-12));

    std::vector<std::size_t> sizes(k);
    for (auto& s : sizes) s = 2 + rng.below(100);
    const auto whole = dg_metrics(table(acc, sizes));
    auto acc2 = acc;
    auto sizes2 = sizes;
    const std::size_t j = rng.below(k);
    const std::size_t part = 1 + rng.below(sizes[j] - 1);
    sizes2[j] -= part;
    acc2.push_back(acc[j]);
    sizes2.push_back(part);
    CHECK(dg_metrics(table(acc2, sizes2)).overall == doctest::Approx(whole.overall).epsilon(1e-12));
    CHECK(whole.std_population == doctest::Approx(whole.std * std::sqrt((k - 1.0) / k)).epsilon(1e-12));
  }
}

TEST_CASE("accuracy table loader") {
  const auto path = write_temp("acc.csv", "domain,accuracy,size\na,80,100\nb,70,100\nc,60,200\n");
  const auto t = load_accuracy_table(path, AccuracyUnit::Percent);
  CHECK(dg_metrics(t).overall == doctest::Approx(67.5));
  const auto bare = write_temp("acc_bare.csv", "domain,accuracy\na,80\nb,70\n");
  CHECK(load_accuracy_table(bare, AccuracyUnit::Percent).sizes == std::vector<std::size_t>{1, 1});
  const auto bad = write_temp("acc_bad.csv", "domain,accuracy\na,80\nb,seventy\n");
  try {
    load_accuracy_table(bad, AccuracyUnit::Percent);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  CHECK_THROWS_AS(load_accuracy_table("/nonexistent/acc.csv", AccuracyUnit::Percent), ValidationError);
}

TEST_CASE("classic split") {
  const auto m = ten_domain_manifest();
  const auto s = make_classic_split(m, {"grass", "water", "rock", "autumn", "indoor", "dim"},
                                    {"sand", "winter", "outdoor"});
  std::map<std::string, std::set<std::string>> by_role;
  for (std::size_t i = 0; i < m.rows().size(); ++i) by_role[to_string(s.rows[i].role)].insert(m.rows()[i].domain);
  CHECK(by_role["dominant-train"].size() == 6);
  CHECK(by_role["test"] == std::set<std::string>{"outdoor", "sand", "winter"});
  CHECK(by_role["unused"] == std::set<std::string>{"dark"});
  CHECK(s.warnings.empty());
  CHECK_NOTHROW(check_split_integrity(m, s, FlexibleParams{}));
  const auto jsonl = to_jsonl(s);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 3 * 9 * 3);
  CHECK(jsonl.find("dark") == std::string::npos);

  const auto full = make_classic_split(m, {"grass", "water", "rock", "autumn", "indoor", "dim"},
                                       {"sand", "winter", "outdoor", "dark"});
  const auto full_jsonl = to_jsonl(full);
  CHECK(std::count(full_jsonl.begin(), full_jsonl.end(), '\n') == 3 * 10 * 3);

  CHECK_THROWS_AS(make_classic_split(m, m.domains(), {}), ValidationError);
  CHECK_THROWS_AS(make_classic_split(m, {"grass", "sand"}, {"sand"}), ValidationError);
  CHECK_THROWS_AS(make_classic_split(m, {"grass"}, {"lava"}), ValidationError);
}

TEST_CASE("random flexible split counts") {
  const auto m = oracle::synthetic_manifest(6, 20, 80);
  const FlexibleParams params;
  const auto s = make_flexible_split(m, SplitMode::FlexibleRandom, params, 3);
  CHECK_NOTHROW(check_split_integrity(m, s, params));
  for (const auto& [category, roles] : s.spec.assignment) {
    std::map<Role, int> count;
    for (const auto& [domain, role] : roles) ++count[role];
    CHECK(count[Role::DominantTrain] == 2);
    CHECK(count[Role::MinorTrain] == 12);
    CHECK(count[Role::Test] == 6);
  }
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>> cells;  // (have, used)
  for (std::size_t i = 0; i < m.rows().size(); ++i) {
    auto& c = cells[{m.rows()[i].category, m.rows()[i].domain}];
    ++c.first;
    if (s.rows[i].role != Role::Unused) ++c.second;
  }
  bool capped = false;
  for (const auto& [key, c] : cells) {
    const Role role = s.spec.assignment.at(key.first).at(key.second);
    if (role == Role::DominantTrain) CHECK(c.second == c.first);
    if (role != Role::DominantTrain) CHECK(c.second == std::min<std::size_t>(c.first, 50));
    capped |= role != Role::DominantTrain && c.first > 50;
  }
  CHECK(capped);
  CHECK_FALSE(s.warnings.empty());

  FlexibleParams greedy;
  greedy.minor = 17;
  CHECK_THROWS_AS(make_flexible_split(m, SplitMode::FlexibleRandom, greedy, 3), ValidationError);
  CHECK_THROWS_AS(make_flexible_split(m, SplitMode::Classic, params, 3), ValidationError);
}

TEST_CASE("compositional split keeps exclusive domains out of test") {
  const auto m = oracle::synthetic_manifest(8, 20, 60);
  const FlexibleParams params;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = make_flexible_split(m, SplitMode::FlexibleCompositional, params, seed);
    CHECK_NOTHROW(check_split_integrity(m, s, params));
    REQUIRE(s.spec.exclusive_domains.size() == 4);
    const std::set<std::string> exclusive(s.spec.exclusive_domains.begin(), s.spec.exclusive_domains.end());
    for (const auto& [category, roles] : s.spec.assignment) {
      for (const auto& [domain, role] : roles) {
        if (role == Role::Test) CHECK_FALSE(exclusive.contains(domain));
        if (role == Role::DominantTrain) CHECK(exclusive.contains(domain));
      }
    }
  }
}

TEST_CASE("split determinism and integrity failures") {
  const auto m = oracle::synthetic_manifest(5, 20, 70);
  for (auto mode : {SplitMode::FlexibleRandom, SplitMode::FlexibleCompositional}) {
    const auto a = make_flexible_split(m, mode, FlexibleParams{}, 11);
    const auto b = make_flexible_split(m, mode, FlexibleParams{}, 11);
    const auto c = make_flexible_split(m, mode, FlexibleParams{}, 12);
    CHECK(to_jsonl(a) == to_jsonl(b));
    CHECK(to_json(a.spec).dump() == to_json(b.spec).dump());
    CHECK(to_jsonl(a) != to_jsonl(c));
  }
  auto s = make_flexible_split(m, SplitMode::FlexibleCompositional, FlexibleParams{}, 1);
  auto broken = s;
  const auto& cat = broken.spec.assignment.begin()->first;
  broken.spec.assignment[cat][broken.spec.exclusive_domains.front()] = Role::Test;
  CHECK_THROWS_AS(check_split_integrity(m, broken, FlexibleParams{}), std::logic_error);
  broken = s;
  for (auto& r : broken.rows) {
    if (r.role == Role::Unused) {
      r.role = Role::Test;
      break;
    }
  }
  CHECK_THROWS_AS(check_split_integrity(m, broken, FlexibleParams{}), std::logic_error);
}

TEST_CASE("manifest loader") {
  const auto ok = write_temp("manifest.csv", "id,category,domain\na,dog,grass\nb,dog,sand\nc,cat,grass\n");
  const auto m = load_manifest(ok);
  CHECK(m.rows().size() == 3);
  CHECK(m.domains() == std::vector<std::string>{"grass", "sand"});
  CHECK(m.domains_of("cat") == std::vector<std::string>{"grass"});
  const auto dup = write_temp("manifest_dup.csv", "id,category,domain\na,dog,grass\na,dog,sand\n");
  CHECK_THROWS_AS(load_manifest(dup), ValidationError);
  const auto missing = write_temp("manifest_missing.csv", "id,category\na,dog\n");
  CHECK_THROWS_AS(load_manifest(missing), ValidationError);
}

TEST_CASE("variance report examples") {
  const RunLog flat("m", grid({0, 1, 2}, 12, [](auto, auto) { return 70.0; }));
  const auto r = variance_report(flat);
  CHECK(r.epoch_std == 0.0);
  CHECK(r.seed_std == 0.0);
  CHECK_FALSE(r.gap.has_value());

  Rng rng(4);
  std::vector<double> jitter(10);
  for (auto& j : jitter) j = rng.normal();
  double mean = 0.0, ss = 0.0;
  for (double j : jitter) mean += j / 10;
  for (double j : jitter) ss += (j - mean) * (j - mean);
  for (auto& j : jitter) j = 0.5 * (j - mean) / std::sqrt(ss / 9);
  const RunLog jittery("m", grid({0, 1, 2}, 10, [&](auto, std::size_t e) { return 70.0 + jitter[e - 1]; }));
  const auto j = variance_report(jittery);
  CHECK(j.epoch_std == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(j.seed_std == 0.0);

  const RunLog two("m", grid({0, 1}, 10, [](std::uint64_t s, auto) { return s == 0 ? 70.0 : 72.0; }));
  CHECK(variance_report(two).seed_std == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("variance window, weighting and gap") {
  std::vector<RunLog::Entry> entries;
  for (std::uint64_t s : {0, 1}) {
    for (std::size_t e = 1; e <= 4; ++e) {
      // Epoch 1 is outside a 3-epoch window and would dominate the std.
      const double base = e == 1 ? 0.0 : 70.0 + static_cast<double>(e);
      entries.push_back({s, e, "a", base, 3.0, false});
      entries.push_back({s, e, "b", base + 4.0, 1.0, false});
      // Validation peaks at epoch 2; test peaks at epoch 4.
      entries.push_back({s, e, "val", e == 2 ? 90.0 : 80.0, std::nullopt, true});
    }
  }
  const RunLog log("m", entries);
  CHECK(log.overall(0, 2) == doctest::Approx(73.0));
  const auto r = variance_report(log, 3);
  CHECK(r.epoch_std == doctest::Approx(1.0));
  REQUIRE(r.gap.has_value());
  CHECK(*r.gap == doctest::Approx(2.0));
  CHECK(to_json(r).contains("gap"));

  CHECK_THROWS_AS(variance_report(log, 5), ValidationError);
  CHECK_THROWS_AS(variance_report(RunLog("m", grid({0}, 12, [](auto, auto) { return 1.0; }))), ValidationError);
  entries.pop_back();
  CHECK_THROWS_AS(RunLog("m", entries), ValidationError);
}

TEST_CASE("run log loader") {
  std::string text = "method,seed,epoch,domain,accuracy,split\n";
  for (int s = 0; s < 2; ++s) {
    for (int e = 1; e <= 3; ++e) {
      text += "erm," + std::to_string(s) + "," + std::to_string(e) + ",d," + std::to_string(70 + s * 2) + ",test\n";
    }
  }
  const auto log = load_run_log(write_temp("log.csv", text));
  CHECK(log.seeds().size() == 2);
  CHECK(variance_report(log, 3).seed_std == doctest::Approx(std::sqrt(2.0)));
  const auto mixed = write_temp("log_mixed.csv", text + "other,0,4,d,70,test\n");
  CHECK_THROWS_AS(load_run_log(mixed), ValidationError);
  const auto bad = write_temp("log_bad.csv", text + "erm,0,4,d,70,train\n");
  CHECK_THROWS_AS(load_run_log(bad), ValidationError);
}
