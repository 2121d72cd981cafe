#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "shiftlab/error.hpp"
#include "shiftlab/hypothesis.hpp"

using namespace shiftlab;

using oracle::write_temp;

TEST_CASE("labeling enumeration counts and order") {
  CHECK(enumerate_all_labelings(2, 2).size() == 4);
  CHECK(enumerate_all_labelings(3, 2).size() == 8);
  CHECK_THROWS_AS(enumerate_all_labelings(30, 10), CapExceededError);
  const auto h = enumerate_all_labelings(3, 3);
  for (std::size_t code = 0; code < h.size(); ++code) {
    for (std::size_t x = 0; x < 3; ++x) CHECK(h.members[code][x].argmax() == oracle::digit(code, x, 3, 3));
  }
  CHECK(find_member(h, h.members[17]) == 17);
}

TEST_CASE("sample csv and jsonl loaders") {
  const auto csv = write_temp("s.csv", "id,domain,label,f0,f1\na,src,0,1.0,2.0\nb,src,2,0.5,-1\n");
  const auto s = load_samples(csv);
  CHECK(s.size() == 2);
  CHECK(s.dimension() == 2);
  CHECK(s.label_count() == 3);
  CHECK(s[1].feature[1] == -1.0);

  const auto jsonl = write_temp("s.jsonl",
                                "{\"id\":\"a\",\"domain\":\"d\",\"label\":1,\"feature\":[1,2,3]}\n"
                                "{\"id\":\"b\",\"domain\":\"e\",\"label\":0,\"feature\":[0,0,1]}\n");
  const auto j = load_samples(jsonl);
  CHECK(j.dimension() == 3);
  CHECK(j.domains() == std::vector<std::string>{"d", "e"});

  const auto bad = write_temp("bad.csv", "id,domain,label,f0\na,src,0,1.0\nb,src,x,2\n");
  try {
    load_samples(bad);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  const auto ragged = write_temp("ragged.csv", "id,domain,label,f0,f1\na,src,0,1.0\n");
  CHECK_THROWS_AS(load_samples(ragged), ValidationError);
  CHECK_THROWS_AS(load_samples("/nonexistent/samples.csv"), ValidationError);
}

TEST_CASE("family descriptors") {
  const auto lin = FamilyDescriptor::parse("linear", 3, 2);
  CHECK(lin.parameter_count() == 8);
  const auto mlp = FamilyDescriptor::parse("mlp:4", 3, 2);
  CHECK(mlp.parameter_count() == 4 * 3 + 4 + 2 * 4 + 2);
  CHECK(mlp.name() == "mlp:4");
  CHECK_THROWS_AS(FamilyDescriptor::parse("mlp:0", 3, 2), ValidationError);
  CHECK_THROWS_AS(FamilyDescriptor::parse("resnet", 3, 2), ValidationError);
}

TEST_CASE("zero-weight linear model predicts uniform") {
  const auto fam = FamilyDescriptor::parse("linear", 2, 4);
  const Model model(fam, std::vector<double>(fam.parameter_count(), 0.0));
  const auto p = predict(model, std::vector<double>{3.0, -1.0});
  for (std::size_t c = 0; c < 4; ++c) CHECK(p[c] == doctest::Approx(0.25));
  CHECK_THROWS_AS(predict(model, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(99);
  for (const char* name : {"linear", "mlp:5"}) {
    for (int t = 0; t < 20; ++t) {
      const auto fam = FamilyDescriptor::parse(name, 3, 3);
      Model model = Model::initialize(fam, rng);
      std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
      const std::size_t y = rng.below(3);
      std::vector<double> analytic(fam.parameter_count(), 0.0);
      model.cross_entropy_gradient(x, y, analytic);
      const std::vector<double> theta(model.parameters().begin(), model.parameters().end());
      const auto numeric = oracle::numeric_gradient(
          [&](const std::vector<double>& th) { return oracle::cross_entropy_by_hand(fam, th, x, y); }, theta);
      for (std::size_t j = 0; j < theta.size(); ++j) CHECK(oracle::relative_error(analytic[j], numeric[j]) < 1e-4);
      CHECK(model.cross_entropy(x, y) == doctest::Approx(oracle::cross_entropy_by_hand(fam, theta, x, y)));
    }
  }
}

TEST_CASE("training fits separable data and is deterministic") {
  const auto a = oracle::gaussian_cluster(-2.0, 0.0, 0.5, 200, 1, "d");
  const auto b = oracle::gaussian_cluster(2.0, 0.0, 0.5, 200, 2, "d");
  std::vector<SampleRecord> records = a.records();
  records.insert(records.end(), b.records().begin(), b.records().end());
  const SampleSet data(records, 2);
  const auto fam = FamilyDescriptor::parse("linear", 2, 2);
  const auto cfg = TrainConfig::metric_preset(4);
  const Model m1 = train_classifier(data, fam, cfg);
  const Model m2 = train_classifier(data, fam, cfg);
  CHECK(std::equal(m1.parameters().begin(), m1.parameters().end(), m2.parameters().begin()));
  std::size_t correct = 0;
  for (const auto& r : data.records()) correct += predict(m1, r.feature).argmax() == r.label;
  CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >= 0.99);
}

TEST_CASE("single record is memorized") {
  const SampleSet one({{"only", "d", 1, {0.3, -0.7}}}, 3);
  const auto fam = FamilyDescriptor::parse("mlp:4", 2, 3);
  const Model m = train_classifier(one, fam, TrainConfig::metric_preset(0));
  CHECK(predict(m, one[0].feature).argmax() == 1);
}

TEST_CASE("domain objective indexes sorted domains") {
  const SampleSet data({{"a", "zeta", 0, {1.0}}, {"b", "alpha", 0, {2.0}}}, 1);
  CHECK(training_targets(data, Objective::Domain) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("divergence names the epoch") {
  std::vector<SampleRecord> records;
  for (int i = 0; i < 8; ++i) records.push_back({std::to_string(i), "d", std::size_t(i % 2), {1e300 * (i + 1)}});
  const SampleSet data(records, 2);
  TrainConfig cfg;
  cfg.learning_rate = 1e10;
  try {
    train_classifier(data, FamilyDescriptor::parse("linear", 1, 2), cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() == 1);
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("model json round trip") {
  Rng rng(1);
  const Model m = Model::initialize(FamilyDescriptor::parse("mlp:3", 2, 2), rng);
  const Model back = model_from_json(to_json(m));
  CHECK(std::equal(m.parameters().begin(), m.parameters().end(), back.parameters().begin()));
  auto doc = to_json(m);
  doc["version"] = 7;
  CHECK_THROWS_AS(model_from_json(doc), ValidationError);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = TrainConfig::metric_preset(3);
  CHECK(cfg.learning_rate == 0.1);
  CHECK(cfg.batch_size == 64);
  CHECK(cfg.epochs == 20);
}
