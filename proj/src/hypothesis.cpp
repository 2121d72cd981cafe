#include "shiftlab/hypothesis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "shiftlab/error.hpp"
#include "shiftlab/random.hpp"

namespace shiftlab {

EnumerableClass enumerate_all_labelings(std::size_t support_size, std::size_t label_count,
                                        std::uint64_t cap) {
  if (support_size == 0) throw ValidationError("support_size must be positive");
  if (label_count == 0) throw ValidationError("label_count must be positive");
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < support_size; ++i) {
    if (count > cap / label_count) {
      throw CapExceededError(std::to_string(label_count) + "^" + std::to_string(support_size) +
                             " labelings exceed the cap of " + std::to_string(cap));
    }
    count *= label_count;
  }

  std::vector<LabelDistribution> basis;
  for (std::size_t y = 0; y < label_count; ++y) basis.push_back(LabelDistribution::one_hot(y, label_count));

  EnumerableClass cls;
  cls.description = "all " + std::to_string(count) + " deterministic labelings of " +
                    std::to_string(support_size) + " points into " + std::to_string(label_count) +
                    " labels";
  cls.members.reserve(count);
  std::vector<std::size_t> digits(support_size, 0);
  for (std::uint64_t c = 0; c < count; ++c) {
    Labeling h;
    h.reserve(support_size);
    for (std::size_t d : digits) h.push_back(basis[d]);
    cls.members.push_back(std::move(h));
    // Increment with the last point as least significant digit.
    for (std::size_t pos = support_size; pos-- > 0;) {
      if (++digits[pos] < label_count) break;
      digits[pos] = 0;
    }
  }
  return cls;
}

std::optional<std::size_t> find_member(const EnumerableClass& cls, const Labeling& labeling) {
  for (std::size_t i = 0; i < cls.members.size(); ++i) {
    if (cls.members[i] == labeling) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

SampleSet::SampleSet(std::vector<SampleRecord> records, std::size_t label_count)
    : records_(std::move(records)), label_count_(label_count) {
  if (records_.empty()) throw ValidationError("sample set is empty");
  if (label_count_ == 0) throw ValidationError("label_count must be positive");
  dimension_ = records_.front().feature.size();
  if (dimension_ == 0) throw ValidationError("feature vectors must be nonempty");
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.feature.size() != dimension_) {
      throw ValidationError("record " + std::to_string(i) + " ('" + r.id + "') has dimension " +
                            std::to_string(r.feature.size()) + ", expected " +
                            std::to_string(dimension_));
    }
    if (r.label >= label_count_) {
      throw ValidationError("record " + std::to_string(i) + " ('" + r.id + "') has label " +
                            std::to_string(r.label) + " >= label_count " +
                            std::to_string(label_count_));
    }
    for (double v : r.feature) {
      if (!std::isfinite(v)) {
        throw ValidationError("record " + std::to_string(i) + " ('" + r.id +
                              "') has a non-finite feature");
      }
    }
  }
}

std::vector<std::string> SampleSet::domains() const {
  std::set<std::string> tags;
  for (const auto& r : records_) tags.insert(r.domain);
  return {tags.begin(), tags.end()};
}

SampleSet SampleSet::subset(std::span<const std::size_t> indices) const {
  std::vector<SampleRecord> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(records_.at(i));
  return SampleSet(std::move(out), label_count_);
}

namespace {

using detail::parse_double;
using detail::parse_index;
using detail::split_csv;

std::size_t infer_label_count(const std::vector<SampleRecord>& records,
                              std::optional<std::size_t> label_count) {
  if (label_count) return *label_count;
  std::size_t max_label = 0;
  for (const auto& r : records) max_label = std::max(max_label, r.label);
  return max_label + 1;
}

}  // namespace

SampleSet load_samples_csv(const std::filesystem::path& path, std::optional<std::size_t> label_count) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open sample file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "domain" || header[2] != "label") {
    throw ValidationError(path.string() + ":1: header must be id,domain,label,f0,...");
  }
  for (std::size_t j = 3; j < header.size(); ++j) {
    if (header[j] != "f" + std::to_string(j - 3)) {
      throw ValidationError(path.string() + ":1: column " + std::to_string(j + 1) + " is '" +
                            header[j] + "', expected 'f" + std::to_string(j - 3) + "'");
    }
  }
  std::vector<SampleRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw ValidationError(where + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(cells.size()));
    }
    SampleRecord r;
    r.id = cells[0];
    r.domain = cells[1];
    r.label = parse_index(cells[2], where + " (label)");
    for (std::size_t j = 3; j < cells.size(); ++j) {
      r.feature.push_back(parse_double(cells[j], where + " (" + header[j] + ")"));
    }
    records.push_back(std::move(r));
  }
  const auto k = infer_label_count(records, label_count);
  try {
    return SampleSet(std::move(records), k);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

SampleSet load_samples_jsonl(const std::filesystem::path& path,
                             std::optional<std::size_t> label_count) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open sample file: " + path.string());
  std::vector<SampleRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
      SampleRecord r;
      const auto& id = doc.at("id");
      r.id = id.is_string() ? id.get<std::string>() : id.dump();
      const auto& dom = doc.at("domain");
      r.domain = dom.is_string() ? dom.get<std::string>() : dom.dump();
      const long long label = doc.at("label").get<long long>();
      if (label < 0) throw ValidationError("field 'label' is negative");
      r.label = static_cast<std::size_t>(label);
      r.feature = doc.at("feature").get<std::vector<double>>();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  const auto k = infer_label_count(records, label_count);
  try {
    return SampleSet(std::move(records), k);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

SampleSet load_samples(const std::filesystem::path& path, std::optional<std::size_t> label_count) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return load_samples_jsonl(path, label_count);
  return load_samples_csv(path, label_count);
}

// ---------------------------------------------------------------------------

FamilyDescriptor FamilyDescriptor::parse(std::string_view text, std::size_t input_dim,
                                         std::size_t label_count) {
  FamilyDescriptor f;
  f.input_dim = input_dim;
  f.label_count = label_count;
  if (text == "linear") {
    f.kind = ModelKind::Linear;
  } else if (text.starts_with("mlp:")) {
    f.kind = ModelKind::OneHiddenLayer;
    const std::string width(text.substr(4));
    f.hidden = parse_index(width, "family '" + std::string(text) + "'");
  } else {
    throw ValidationError("unknown family '" + std::string(text) + "' (expected linear or mlp:<width>)");
  }
  f.validate();
  return f;
}

std::string FamilyDescriptor::name() const {
  return kind == ModelKind::Linear ? "linear" : "mlp:" + std::to_string(hidden);
}

void FamilyDescriptor::validate() const {
  if (input_dim == 0) throw ValidationError("family input dimension must be positive");
  if (label_count < 2) throw ValidationError("family needs at least 2 output labels");
  if (kind == ModelKind::OneHiddenLayer && hidden == 0) {
    throw ValidationError("one-hidden-layer family needs hidden width >= 1");
  }
}

std::size_t FamilyDescriptor::parameter_count() const {
  if (kind == ModelKind::Linear) return label_count * input_dim + label_count;
  return hidden * input_dim + hidden + label_count * hidden + label_count;
}

TrainConfig TrainConfig::metric_preset(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  return cfg;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be positive");
  }
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (epochs == 0) throw ValidationError("epochs must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ValidationError("weight_decay must be nonnegative");
  }
}

// ---------------------------------------------------------------------------

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMajor>;
using Mat = Eigen::Map<RowMajor>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using Vec = Eigen::Map<Eigen::VectorXd>;

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const double peak = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - peak).exp();
  return e / e.sum();
}

}  // namespace

Model::Model(FamilyDescriptor family, std::vector<double> params)
    : family_(family), params_(std::move(params)) {
  family_.validate();
  if (params_.size() != family_.parameter_count()) {
    throw ValidationError("model of family " + family_.name() + " needs " +
                          std::to_string(family_.parameter_count()) + " parameters, got " +
                          std::to_string(params_.size()));
  }
}

Model Model::initialize(const FamilyDescriptor& family, Rng& rng) {
  family.validate();
  std::vector<double> params(family.parameter_count());
  auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
    const double r = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) params[offset + i] = rng.uniform(-r, r);
  };
  const std::size_t d = family.input_dim, k = family.label_count;
  if (family.kind == ModelKind::Linear) {
    fill(0, k * d + k, d);
  } else {
    const std::size_t h = family.hidden;
    fill(0, h * d + h, d);
    fill(h * d + h, k * h + k, h);
  }
  return Model(family, std::move(params));
}

void Model::check_input(std::span<const double> x) const {
  if (x.size() != family_.input_dim) {
    throw ValidationError("feature has dimension " + std::to_string(x.size()) + ", model expects " +
                          std::to_string(family_.input_dim));
  }
}

Eigen::VectorXd Model::logits(std::span<const double> x) const {
  check_input(x);
  const auto d = static_cast<Eigen::Index>(family_.input_dim);
  const auto k = static_cast<Eigen::Index>(family_.label_count);
  const ConstVec in(x.data(), d);
  const double* p = params_.data();
  if (family_.kind == ModelKind::Linear) {
    const ConstMat w(p, k, d);
    const ConstVec b(p + k * d, k);
    return w * in + b;
  }
  const auto h = static_cast<Eigen::Index>(family_.hidden);
  const ConstMat w1(p, h, d);
  const ConstVec b1(p + h * d, h);
  const ConstMat w2(p + h * d + h, k, h);
  const ConstVec b2(p + h * d + h + k * h, k);
  const Eigen::VectorXd hidden = (w1 * in + b1).array().tanh().matrix();
  return w2 * hidden + b2;
}

Eigen::VectorXd Model::probabilities(std::span<const double> x) const { return softmax(logits(x)); }

void Model::backward(std::span<const double> x, const Eigen::VectorXd& dlogits,
                     std::span<double> grad) const {
  check_input(x);
  if (grad.size() != params_.size()) throw ValidationError("gradient buffer has wrong size");
  const auto d = static_cast<Eigen::Index>(family_.input_dim);
  const auto k = static_cast<Eigen::Index>(family_.label_count);
  const ConstVec in(x.data(), d);
  double* g = grad.data();
  if (family_.kind == ModelKind::Linear) {
    Mat gw(g, k, d);
    Vec gb(g + k * d, k);
    gw.noalias() += dlogits * in.transpose();
    gb += dlogits;
    return;
  }
  const auto h = static_cast<Eigen::Index>(family_.hidden);
  const double* p = params_.data();
  const ConstMat w1(p, h, d);
  const ConstVec b1(p + h * d, h);
  const ConstMat w2(p + h * d + h, k, h);
  const Eigen::VectorXd hidden = (w1 * in + b1).array().tanh().matrix();

  Mat gw1(g, h, d);
  Vec gb1(g + h * d, h);
  Mat gw2(g + h * d + h, k, h);
  Vec gb2(g + h * d + h + k * h, k);
  gw2.noalias() += dlogits * hidden.transpose();
  gb2 += dlogits;
  const Eigen::VectorXd dpre =
      ((w2.transpose() * dlogits).array() * (1.0 - hidden.array().square())).matrix();
  gw1.noalias() += dpre * in.transpose();
  gb1 += dpre;
}

double Model::cross_entropy(std::span<const double> x, std::size_t label) const {
  const Eigen::VectorXd z = logits(x);
  const double peak = z.maxCoeff();
  const double lse = peak + std::log((z.array() - peak).exp().sum());
  return lse - z[static_cast<Eigen::Index>(label)];
}

void Model::cross_entropy_gradient(std::span<const double> x, std::size_t label,
                                   std::span<double> grad) const {
  Eigen::VectorXd dz = probabilities(x);
  dz[static_cast<Eigen::Index>(label)] -= 1.0;
  backward(x, dz, grad);
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> training_targets(const SampleSet& data, Objective objective) {
  std::vector<std::size_t> targets(data.size());
  if (objective == Objective::Category) {
    for (std::size_t i = 0; i < data.size(); ++i) targets[i] = data[i].label;
    return targets;
  }
  const auto domains = data.domains();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto it = std::lower_bound(domains.begin(), domains.end(), data[i].domain);
    targets[i] = static_cast<std::size_t>(it - domains.begin());
  }
  return targets;
}

Model train_classifier(const SampleSet& data, const FamilyDescriptor& family,
                       const TrainConfig& cfg, Objective objective) {
  cfg.validate();
  family.validate();
  if (family.input_dim != data.dimension()) {
    throw ValidationError("family expects dimension " + std::to_string(family.input_dim) +
                          " but samples have dimension " + std::to_string(data.dimension()));
  }
  const auto targets = training_targets(data, objective);
  const std::size_t classes = *std::max_element(targets.begin(), targets.end()) + 1;
  if (classes > family.label_count) {
    throw ValidationError("family has " + std::to_string(family.label_count) +
                          " outputs but the targets need " + std::to_string(classes));
  }

  Rng init = Rng::substream(cfg.seed, "init");
  Model model = Model::initialize(family, init);
  auto params = model.parameters();
  std::vector<double> grad(params.size());
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffler = Rng::substream(cfg.seed, "shuffle", epoch);
    shuffler.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      for (std::size_t j = start; j < end; ++j) {
        const auto& rec = data[order[j]];
        loss += model.cross_entropy(rec.feature, targets[order[j]]);
        model.cross_entropy_gradient(rec.feature, targets[order[j]], grad);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      loss *= scale;
      if (!std::isfinite(loss)) {
        throw DivergenceError(epoch + 1, "cross-entropy is " + std::to_string(loss));
      }
      for (std::size_t p = 0; p < params.size(); ++p) {
        params[p] -= cfg.learning_rate * (grad[p] * scale + cfg.weight_decay * params[p]);
      }
    }
    for (double p : params) {
      if (!std::isfinite(p)) throw DivergenceError(epoch + 1, "non-finite parameter");
    }
  }
  return model;
}

LabelDistribution predict(const Model& model, std::span<const double> feature) {
  const Eigen::VectorXd p = model.probabilities(feature);
  return LabelDistribution(std::vector<double>(p.data(), p.data() + p.size()));
}

nlohmann::json to_json(const Model& model) {
  const auto& f = model.family();
  return {
      {"format", "shiftlab-model"},
      {"version", 1},
      {"family", f.name()},
      {"input_dim", f.input_dim},
      {"hidden", f.hidden},
      {"label_count", f.label_count},
      {"parameters", std::vector<double>(model.parameters().begin(), model.parameters().end())},
  };
}

Model model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "shiftlab-model") {
      throw ValidationError("not a shiftlab model dump");
    }
    if (doc.at("version").get<int>() != 1) {
      throw ValidationError("unsupported model dump version " + doc.at("version").dump());
    }
    auto family = FamilyDescriptor::parse(doc.at("family").get<std::string>(),
                                          doc.at("input_dim").get<std::size_t>(),
                                          doc.at("label_count").get<std::size_t>());
    return Model(family, doc.at("parameters").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model dump: ") + e.what());
  }
}

}  // namespace shiftlab
