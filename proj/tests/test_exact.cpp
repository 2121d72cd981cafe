#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "shiftlab/error.hpp"
#include "shiftlab/exact.hpp"

using namespace shiftlab;

namespace {

DiscreteDomainPair two_point() {
  oracle::FuzzPair f;
  f.m = 2;
  f.k = 2;
  f.p_tr = {0.5, 0.5};
  f.p_te = {0.9, 0.1};
  f.f_tr = {0, 0};
  f.f_te = {0, 1};
  return oracle::to_pair(f);
}

DiscreteDomainPair with_masses(std::vector<double> p, std::vector<double> q) {
  oracle::FuzzPair f;
  f.m = p.size();
  f.k = 2;
  f.p_tr = std::move(p);
  f.p_te = std::move(q);
  f.f_tr.assign(f.m, 0);
  f.f_te.assign(f.m, 0);
  return oracle::to_pair(f);
}

}  // namespace

TEST_CASE("l1 and prop1 examples") {
  const auto pair = two_point();
  CHECK(l1_distance(pair) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(l1_distance(with_masses({0.3, 0.7}, {0.3, 0.7})) == 0.0);
  CHECK(l1_distance(with_masses({1.0, 0.0}, {0.0, 1.0})) == 2.0);
  CHECK(prop1_discrepancy(pair, 1.0) == doctest::Approx(0.4));
  CHECK(prop1_discrepancy(pair, 2.0) == doctest::Approx(0.8));
  CHECK_THROWS_AS(prop1_discrepancy(pair, 0.0), ValidationError);
}

TEST_CASE("exact discrepancy examples") {
  const auto pair = two_point();
  const auto zo = LossFunction::zero_one();
  const auto h = enumerate_all_labelings(2, 2);
  CHECK(std::abs(exact_discrepancy(pair, h, zo) - 0.4) < 1e-12);
  CHECK(exact_discrepancy(with_masses({0.2, 0.8}, {0.2, 0.8}), h, zo) == 0.0);
  EnumerableClass single{{h.members[2]}, "one function"};
  CHECK(exact_discrepancy(pair, single, zo) == 0.0);
  DiscrepancyOptions tight;
  tight.max_pair_evaluations = 10;
  CHECK_THROWS_AS(exact_discrepancy(pair, h, zo, tight), CapExceededError);
}

TEST_CASE("exact discrepancy matches the independent oracle and prop1") {
  Rng rng(2024);
  const auto zo = LossFunction::zero_one();
  for (int t = 0; t < 300; ++t) {
    const auto f = oracle::random_pair(rng);
    const auto pair = oracle::to_pair(f);
    const auto h = enumerate_all_labelings(f.m, f.k);
    const double exact = exact_discrepancy(pair, h, zo);
    CHECK(std::abs(exact - oracle::zero_one_discrepancy(f.p_tr, f.p_te, f.k)) <= 1e-12);
    CHECK(std::abs(exact - prop1_discrepancy(pair, 1.0)) <= 1e-9);
  }
}

TEST_CASE("discrepancy is a pseudo-metric") {
  Rng rng(7);
  const auto tv = LossFunction::total_variation();
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 1 + rng.below(3), k = 2 + rng.below(2);
    const auto h = enumerate_all_labelings(m, k);
    const auto a = oracle::random_mass(rng, m), b = oracle::random_mass(rng, m), c = oracle::random_mass(rng, m);
    const double ab = exact_discrepancy(a, b, h, tv), ba = exact_discrepancy(b, a, h, tv);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(exact_discrepancy(a, a, h, tv) == 0.0);
    CHECK(exact_discrepancy(a, c, h, tv) <= ab + exact_discrepancy(b, c, h, tv) + 1e-9);
    CHECK(ab <= tv.bound());
  }
}

TEST_CASE("discrepancy does not depend on the worker count") {
  Rng rng(8);
  const auto f = oracle::random_pair(rng, 4, 3);
  const auto pair = oracle::to_pair(f);
  const auto h = enumerate_all_labelings(f.m, f.k);
  DiscrepancyOptions one, many;
  one.workers = 1;
  many.workers = 7;
  CHECK(exact_discrepancy(pair, h, LossFunction::zero_one(), one) ==
        exact_discrepancy(pair, h, LossFunction::zero_one(), many));
}

TEST_CASE("concept shift examples and properties") {
  const auto zo = LossFunction::zero_one();
  const auto c = exact_concept_shift(two_point(), zo);
  CHECK(c.min() == doctest::Approx(0.1));
  CHECK(c.max() == doctest::Approx(0.5));

  oracle::FuzzPair same;
  same.m = 2;
  same.k = 2;
  same.p_tr = {0.5, 0.5};
  same.p_te = {0.9, 0.1};
  same.f_tr = same.f_te = {1, 0};
  const auto none = exact_concept_shift(oracle::to_pair(same), zo);
  CHECK(none.min() == 0.0);
  CHECK(none.max() == 0.0);

  oracle::FuzzPair zero_mass = same;
  zero_mass.p_tr = {1.0, 0.0};
  zero_mass.p_te = {1.0, 0.0};
  zero_mass.f_te = {1, 1};
  const auto z = exact_concept_shift(oracle::to_pair(zero_mass), zo);
  CHECK(z.max() == 0.0);

  Rng rng(13);
  for (int t = 0; t < 200; ++t) {
    auto f = oracle::random_pair(rng);
    const auto cs = exact_concept_shift(oracle::to_pair(f), zo);
    CHECK(cs.min() <= cs.max());
    CHECK(cs.loss_tr == doctest::Approx(oracle::disagreement_mass(f.p_tr, f.f_tr, f.f_te)));
    CHECK(cs.loss_te == doctest::Approx(oracle::disagreement_mass(f.p_te, f.f_tr, f.f_te)));
    f.p_te = f.p_tr;
    const auto eq = exact_concept_shift(oracle::to_pair(f), zo);
    CHECK(eq.min() == eq.max());
  }
}

TEST_CASE("shift report json fields") {
  const auto pair = two_point();
  const auto r = exact_shift_report(pair, enumerate_all_labelings(2, 2), LossFunction::zero_one());
  const auto j = to_json(r);
  CHECK(j.at("m_cov").get<double>() == doctest::Approx(0.4));
  CHECK(j.at("m_cpt_min").get<double>() == doctest::Approx(0.1));
  CHECK(j.at("m_cpt_max").get<double>() == doctest::Approx(0.5));
  CHECK(j.at("method_tag") == "exact");
  CHECK(j.at("metadata").at("loss") == "zero-one");
}

TEST_CASE("d_A distance examples") {
  const auto subsets = power_set(2);
  CHECK(subsets.size() == 4);
  const auto d = da_distance_exact(two_point(), subsets);
  CHECK(d.distance == doctest::Approx(0.4));
  CHECK(d.complement_closed);
  CHECK(*d.classification_form == doctest::Approx(0.4));
  CHECK(da_distance_exact(with_masses({0.4, 0.6}, {0.4, 0.6}), subsets).distance == 0.0);
  CHECK(da_distance_exact(with_masses({1.0, 0.0}, {0.0, 1.0}), subsets).distance == 1.0);
  const std::vector<Subset> partial{{0}};
  CHECK_FALSE(da_distance_exact(two_point(), partial).complement_closed);
  const std::vector<Subset> outside{{5}};
  CHECK_THROWS_AS(da_distance_exact(two_point(), outside), ValidationError);
}

TEST_CASE("d_A over binary-labeling events equals half the l1 distance") {
  Rng rng(21);
  for (int t = 0; t < 200; ++t) {
    const auto f = oracle::random_pair(rng);
    const auto pair = oracle::to_pair(f);
    // Events {x : h(x) = 1} for every binary h, built from integer codes.
    std::vector<Subset> events;
    for (std::size_t code = 0; code < (std::size_t{1} << f.m); ++code) {
      Subset s;
      for (std::size_t x = 0; x < f.m; ++x) {
        if (oracle::digit(code, x, f.m, 2) == 1) s.push_back(x);
      }
      events.push_back(s);
    }
    const auto d = da_distance_exact(pair, events);
    CHECK(std::abs(d.distance - l1_distance(pair) / 2) <= 1e-12);
    CHECK(std::abs(*d.classification_form - d.distance) <= 1e-12);
  }
}

TEST_CASE("kl decomposition examples") {
  Eigen::MatrixXd tr(2, 2), te(2, 2);
  tr << 0.4, 0.1, 0.1, 0.4;
  te << 0.25, 0.25, 0.25, 0.25;
  const auto d = kl_decomposition(tr, te);
  const auto o = oracle::kl_direct({{0.4, 0.1}, {0.1, 0.4}}, {{0.25, 0.25}, {0.25, 0.25}});
  CHECK(std::abs(d.total_kl - o.total) <= 1e-12);
  CHECK(std::abs(d.concept_kl - o.conditional) <= 1e-12);
  CHECK(std::abs(d.covariate_kl - o.covariate) <= 1e-12);
  CHECK(d.covariate_kl == doctest::Approx(0.0));

  const auto same = kl_decomposition(tr, tr);
  CHECK(same.total_kl == 0.0);
  CHECK(same.concept_kl == 0.0);

  // Shifted marginal, identical conditionals.
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 0.6 * 0.3, 0.6 * 0.7, 0.4 * 0.5, 0.4 * 0.5;
  b << 0.2 * 0.3, 0.2 * 0.7, 0.8 * 0.5, 0.8 * 0.5;
  const auto shifted = kl_decomposition(a, b);
  CHECK(std::abs(shifted.concept_kl) <= 1e-12);
  CHECK(shifted.covariate_kl > 0.0);

  Eigen::MatrixXd hole = te;
  hole(0, 0) = 0.0;
  hole(0, 1) = 0.5;
  CHECK_THROWS_AS(kl_decomposition(tr, hole), InfiniteDivergenceError);
  Eigen::MatrixXd unnormalized = tr * 1.1;
  CHECK_THROWS_AS(kl_decomposition(unnormalized, te), ValidationError);
}

TEST_CASE("kl components are nonnegative and sum to the total") {
  Rng rng(31);
  for (int t = 0; t < 300; ++t) {
    const std::size_t m = 1 + rng.below(5), k = 2 + rng.below(3);
    const auto wa = oracle::random_mass(rng, m * k, false), wb = oracle::random_mass(rng, m * k, false);
    Eigen::MatrixXd a(m, k), b(m, k);
    for (std::size_t i = 0; i < m * k; ++i) {
      a(i / k, i % k) = wa[i];
      b(i / k, i % k) = wb[i];
    }
    const auto d = kl_decomposition(a, b);
    CHECK(d.concept_kl >= 0.0);
    CHECK(d.covariate_kl >= 0.0);
    CHECK(std::abs(d.concept_kl + d.covariate_kl - d.total_kl) <= 1e-9);
  }
}

TEST_CASE("joint table from a pair") {
  const auto pair = two_point();
  const auto j = joint_table(pair.p_te(), pair.f_te());
  CHECK(j(0, 0) == doctest::Approx(0.9));
  CHECK(j(1, 1) == doctest::Approx(0.1));
  CHECK(j(1, 0) == 0.0);
}
