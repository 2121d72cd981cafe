#include "shiftlab/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "shiftlab/error.hpp"
#include "shiftlab/random.hpp"

namespace shiftlab {

namespace {

std::vector<double> normalized_probs(std::vector<double> probs) {
  if (probs.empty()) throw ValidationError("label distribution is empty");
  return normalized_mass(std::move(probs), "label distribution");
}

}  // namespace

std::vector<double> normalized_mass(std::vector<double> mass, std::string_view what) {
  double total = 0.0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    if (!std::isfinite(mass[i]) || mass[i] < 0.0) {
      std::ostringstream msg;
      msg << what << ": entry " << i << " is " << mass[i] << ", expected a finite value >= 0";
      throw ValidationError(msg.str());
    }
    total += mass[i];
  }
  if (std::abs(total - 1.0) > kNormalizationTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << what << ": masses sum to " << total << ", expected 1 within "
        << kNormalizationTolerance;
    throw ValidationError(msg.str());
  }
  if (total != 1.0) {
    for (double& m : mass) m /= total;
  }
  return mass;
}

// ---------------------------------------------------------------------------

LabelDistribution::LabelDistribution(std::vector<double> probs)
    : probs_(normalized_probs(std::move(probs))) {}

LabelDistribution LabelDistribution::one_hot(std::size_t label, std::size_t label_count) {
  if (label >= label_count) {
    throw ValidationError("label " + std::to_string(label) + " is out of range for " +
                          std::to_string(label_count) + " labels");
  }
  std::vector<double> p(label_count, 0.0);
  p[label] = 1.0;
  return LabelDistribution(std::move(p));
}

LabelDistribution LabelDistribution::uniform(std::size_t label_count) {
  if (label_count == 0) throw ValidationError("label_count must be positive");
  return LabelDistribution(std::vector<double>(label_count, 1.0 / static_cast<double>(label_count)));
}

std::size_t LabelDistribution::argmax() const noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs_.size(); ++i) {
    if (probs_[i] > probs_[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::ZeroOne: return "zero-one";
    case LossKind::TotalVariation: return "total-variation";
    case LossKind::CustomTable: return "custom-table";
  }
  return "unknown";
}

LossFunction LossFunction::zero_one(double bound) {
  if (!(bound > 0.0) || !std::isfinite(bound)) throw ValidationError("loss bound M must be > 0");
  return LossFunction(LossKind::ZeroOne, bound, true, true);
}

LossFunction LossFunction::total_variation(double bound) {
  if (!(bound > 0.0) || !std::isfinite(bound)) throw ValidationError("loss bound M must be > 0");
  return LossFunction(LossKind::TotalVariation, bound, true, true);
}

LossFunction LossFunction::custom_table(std::vector<std::vector<double>> table, double bound,
                                        bool symmetric, bool triangle) {
  if (!(bound > 0.0) || !std::isfinite(bound)) throw ValidationError("loss bound M must be > 0");
  const std::size_t k = table.size();
  if (k == 0) throw ValidationError("custom loss table is empty");
  for (const auto& row : table) {
    if (row.size() != k) throw ValidationError("custom loss table must be square");
    for (double v : row) {
      if (!(v >= 0.0 && v <= bound)) {
        throw ValidationError("custom loss table entry " + std::to_string(v) +
                              " lies outside [0, M]");
      }
    }
  }

  auto check = [&](std::size_t a, std::size_t b, std::size_t c) {
    if (symmetric && table[a][b] != table[b][a]) {
      throw ValidationError("custom loss declared symmetric but table[" + std::to_string(a) +
                            "][" + std::to_string(b) + "] != table[" + std::to_string(b) + "][" +
                            std::to_string(a) + "]");
    }
    if (triangle && table[a][c] > table[a][b] + table[b][c] + 1e-12) {
      throw ValidationError("custom loss declared to obey the triangle inequality but fails at (" +
                            std::to_string(a) + ", " + std::to_string(b) + ", " +
                            std::to_string(c) + ")");
    }
  };
  if (k <= 10) {
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        for (std::size_t c = 0; c < k; ++c) check(a, b, c);
  } else {
    Rng rng = Rng::substream(0, "custom-loss-check");
    for (int t = 0; t < 1000; ++t) check(rng.below(k), rng.below(k), rng.below(k));
  }

  LossFunction loss(LossKind::CustomTable, bound, symmetric, triangle);
  loss.table_ = std::move(table);
  return loss;
}

LossFunction LossFunction::parse(std::string_view name, double bound) {
  if (name == "zero-one" || name == "0-1") return zero_one(bound);
  if (name == "total-variation" || name == "tv") return total_variation(bound);
  throw ValidationError("unknown loss '" + std::string(name) +
                        "' (expected zero-one or total-variation)");
}

double LossFunction::operator()(const LabelDistribution& p, const LabelDistribution& q) const {
  if (p.size() != q.size()) {
    throw ValidationError("loss arguments range over different label sets (" +
                          std::to_string(p.size()) + " vs " + std::to_string(q.size()) + ")");
  }
  switch (kind_) {
    case LossKind::ZeroOne:
      return p.argmax() == q.argmax() ? 0.0 : bound_;
    case LossKind::TotalVariation: {
      double tv = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
      return std::min(bound_, bound_ * 0.5 * tv);
    }
    case LossKind::CustomTable:
      if (p.size() != table_.size()) {
        throw ValidationError("custom loss table has " + std::to_string(table_.size()) +
                              " labels, arguments have " + std::to_string(p.size()));
      }
      return table_[p.argmax()][q.argmax()];
  }
  return 0.0;
}

double loss_eval(const LossFunction& loss, const LabelDistribution& p, const LabelDistribution& q) {
  return loss(p, q);
}

double expected_loss(std::span<const double> mass, const Labeling& h1, const Labeling& h2,
                     const LossFunction& loss) {
  if (h1.size() != mass.size() || h2.size() != mass.size()) {
    throw ValidationError("labeling defined on " + std::to_string(std::min(h1.size(), h2.size())) +
                          " points but the distribution has support of size " +
                          std::to_string(mass.size()));
  }
  double total = 0.0;
  for (std::size_t x = 0; x < mass.size(); ++x) {
    if (mass[x] == 0.0) continue;
    total += mass[x] * loss(h1[x], h2[x]);
  }
  return total;
}

// ---------------------------------------------------------------------------

namespace {

Labeling build_labeling(const std::vector<LabelSpec>& specs, std::size_t label_count,
                        std::string_view which) {
  Labeling out;
  out.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    if (const auto* label = std::get_if<std::size_t>(&s)) {
      if (*label >= label_count) {
        throw ValidationError(std::string(which) + "[" + std::to_string(i) + "]: label " +
                              std::to_string(*label) + " >= label_count " +
                              std::to_string(label_count));
      }
      out.push_back(LabelDistribution::one_hot(*label, label_count));
    } else {
      const auto& probs = std::get<std::vector<double>>(s);
      if (probs.size() != label_count) {
        throw ValidationError(std::string(which) + "[" + std::to_string(i) + "]: " +
                              std::to_string(probs.size()) + " probabilities for label_count " +
                              std::to_string(label_count));
      }
      try {
        out.emplace_back(probs);
      } catch (const ValidationError& e) {
        throw ValidationError(std::string(which) + "[" + std::to_string(i) + "]: " + e.what());
      }
    }
  }
  return out;
}

}  // namespace

DiscreteDomainPair make_discrete_domain_pair(const DomainPairSpec& spec) {
  const std::size_t m = spec.points.size();
  if (m == 0) throw ValidationError("domain pair has no points");
  if (spec.label_count == 0) throw ValidationError("label_count must be positive");
  {
    auto sorted = spec.points;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ValidationError("point identifiers must be distinct");
    }
  }
  auto shape = [&](std::size_t n, std::string_view what) {
    if (n != m) {
      throw ValidationError(std::string(what) + " has length " + std::to_string(n) + ", expected " +
                            std::to_string(m) + " (one per point)");
    }
  };
  shape(spec.p_tr.size(), "p_tr");
  shape(spec.p_te.size(), "p_te");
  shape(spec.f_tr.size(), "f_tr");
  shape(spec.f_te.size(), "f_te");

  DiscreteDomainPair pair;
  pair.points_ = spec.points;
  pair.p_tr_ = normalized_mass(spec.p_tr, "p_tr");
  pair.p_te_ = normalized_mass(spec.p_te, "p_te");
  pair.f_tr_ = build_labeling(spec.f_tr, spec.label_count, "f_tr");
  pair.f_te_ = build_labeling(spec.f_te, spec.label_count, "f_te");
  pair.label_count_ = spec.label_count;
  return pair;
}

DiscreteDomainPair pair_from_json(const nlohmann::json& doc) {
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!doc.is_object() || !doc.contains(name)) {
      throw ValidationError(std::string("domain pair JSON: missing field '") + name + "'");
    }
    return doc.at(name);
  };
  auto numbers = [&](const char* name) {
    const auto& arr = field(name);
    if (!arr.is_array()) throw ValidationError(std::string("field '") + name + "' must be an array");
    std::vector<double> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number()) {
        throw ValidationError(std::string("field '") + name + "[" + std::to_string(i) +
                              "]' must be a number");
      }
      out.push_back(arr[i].get<double>());
    }
    return out;
  };
  auto labels = [&](const char* name) {
    const auto& arr = field(name);
    if (!arr.is_array()) throw ValidationError(std::string("field '") + name + "' must be an array");
    std::vector<LabelSpec> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& v = arr[i];
      if (v.is_number_integer() && v.get<long long>() >= 0) {
        out.emplace_back(static_cast<std::size_t>(v.get<long long>()));
      } else if (v.is_array()) {
        std::vector<double> probs;
        for (const auto& p : v) {
          if (!p.is_number()) {
            throw ValidationError(std::string("field '") + name + "[" + std::to_string(i) +
                                  "]' must contain numbers");
          }
          probs.push_back(p.get<double>());
        }
        out.emplace_back(std::move(probs));
      } else {
        throw ValidationError(std::string("field '") + name + "[" + std::to_string(i) +
                              "]' must be a label index or a probability array");
      }
    }
    return out;
  };

  DomainPairSpec spec;
  const auto& points = field("points");
  if (!points.is_array()) throw ValidationError("field 'points' must be an array");
  for (const auto& p : points) spec.points.push_back(p.is_string() ? p.get<std::string>() : p.dump());
  spec.p_tr = numbers("p_tr");
  spec.p_te = numbers("p_te");
  spec.f_tr = labels("f_tr");
  spec.f_te = labels("f_te");
  const auto& k = field("label_count");
  if (!k.is_number_integer() || k.get<long long>() <= 0) {
    throw ValidationError("field 'label_count' must be a positive integer");
  }
  spec.label_count = static_cast<std::size_t>(k.get<long long>());
  return make_discrete_domain_pair(spec);
}

nlohmann::json to_json(const DiscreteDomainPair& pair) {
  auto labeling = [](const Labeling& f) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& d : f) arr.push_back(std::vector<double>(d.probs().begin(), d.probs().end()));
    return arr;
  };
  return {
      {"points", pair.points()},
      {"p_tr", std::vector<double>(pair.p_tr().begin(), pair.p_tr().end())},
      {"p_te", std::vector<double>(pair.p_te().begin(), pair.p_te().end())},
      {"f_tr", labeling(pair.f_tr())},
      {"f_te", labeling(pair.f_te())},
      {"label_count", pair.label_count()},
  };
}

DiscreteDomainPair load_pair(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open domain pair file: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  try {
    return pair_from_json(doc);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace shiftlab
