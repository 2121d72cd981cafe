#include "shiftlab/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "shiftlab/error.hpp"
#include "shiftlab/parallel.hpp"
#include "shiftlab/random.hpp"

namespace shiftlab {

namespace {

void check_compatible(const SampleSet& source, const SampleSet& target, const FamilyDescriptor& family) {
  family.validate();
  if (source.dimension() != target.dimension()) {
    throw ValidationError("source and target features differ in dimension (" +
                          std::to_string(source.dimension()) + " vs " +
                          std::to_string(target.dimension()) + ")");
  }
  if (family.input_dim != source.dimension()) {
    throw ValidationError("family expects dimension " + std::to_string(family.input_dim) +
                          " but samples have dimension " + std::to_string(source.dimension()));
  }
}

struct Halves {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> eval;
};

// Seeded 50/50 split; the fit half gets the extra record when n is odd.
Halves split_halves(std::size_t n, std::uint64_t seed, std::string_view name) {
  if (n < 2) throw ValidationError("held-out evaluation needs at least 2 records per sample set");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = Rng::substream(seed, name);
  rng.shuffle(std::span<std::size_t>(idx));
  const std::size_t cut = (n + 1) / 2;
  Halves h;
  h.fit.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
  h.eval.assign(idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  std::sort(h.fit.begin(), h.fit.end());
  std::sort(h.eval.begin(), h.eval.end());
  return h;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// Smooth disagreement 1 - <p, q> and its logit gradients.
struct Disagreement {
  double value;
  Eigen::VectorXd d_first;
  Eigen::VectorXd d_second;
};

Disagreement smooth_disagreement(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  const double dot = p.dot(q);
  return {1.0 - dot, -(p.array() * (q.array() - dot)).matrix(),
          -(q.array() * (p.array() - dot)).matrix()};
}

double mean_pair_loss(const Model& h1, const Model& h2, const SampleSet& data,
                      std::span<const std::size_t> idx, const LossFunction& loss) {
  double total = 0.0;
  for (std::size_t i : idx) {
    total += loss(predict(h1, data[i].feature), predict(h2, data[i].feature));
  }
  return total / static_cast<double>(idx.size());
}

void check_finite_params(const Model& m, std::size_t epoch) {
  for (double p : m.parameters()) {
    if (!std::isfinite(p)) throw DivergenceError(epoch, "non-finite parameter");
  }
}

// Gradient ascent on sign * (mean_tr d(h1,h2) - mean_te d(h1,h2)).
std::pair<Model, Model> train_adversarial_pair(const SampleSet& source, std::span<const std::size_t> tr_idx,
                                               const SampleSet& target, std::span<const std::size_t> te_idx,
                                               const FamilyDescriptor& family, const TrainConfig& cfg,
                                               double sign, std::uint64_t direction) {
  Rng init1 = Rng::substream(cfg.seed, "adversarial-h1", direction);
  Rng init2 = Rng::substream(cfg.seed, "adversarial-h2", direction);
  Model h1 = Model::initialize(family, init1);
  Model h2 = Model::initialize(family, init2);

  std::vector<std::size_t> tr_order(tr_idx.begin(), tr_idx.end());
  std::vector<std::size_t> te_order(te_idx.begin(), te_idx.end());
  const std::size_t longest = std::max(tr_order.size(), te_order.size());
  const std::size_t steps = (longest + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<double> g1(h1.parameters().size()), g2(h2.parameters().size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_tr = Rng::substream(cfg.seed, "adversarial-shuffle-tr", direction * 1'000'003 + epoch);
    Rng shuffle_te = Rng::substream(cfg.seed, "adversarial-shuffle-te", direction * 1'000'003 + epoch);
    shuffle_tr.shuffle(std::span<std::size_t>(tr_order));
    shuffle_te.shuffle(std::span<std::size_t>(te_order));
    std::size_t tr_pos = 0, te_pos = 0;
    for (std::size_t step = 0; step < steps; ++step) {
      std::fill(g1.begin(), g1.end(), 0.0);
      std::fill(g2.begin(), g2.end(), 0.0);
      double objective = 0.0;
      auto accumulate = [&](const SampleSet& data, std::vector<std::size_t>& order, std::size_t& pos,
                            double weight) {
        const std::size_t count = std::min(cfg.batch_size, order.size());
        const double w = weight / static_cast<double>(count);
        for (std::size_t j = 0; j < count; ++j) {
          const auto& x = data[order[pos]].feature;
          pos = (pos + 1) % order.size();
          const auto d = smooth_disagreement(h1.probabilities(x), h2.probabilities(x));
          objective += w * d.value;
          h1.backward(x, w * d.d_first, g1);
          h2.backward(x, w * d.d_second, g2);
        }
      };
      accumulate(source, tr_order, tr_pos, sign);
      accumulate(target, te_order, te_pos, -sign);
      if (!std::isfinite(objective)) {
        throw DivergenceError(epoch + 1, "adversarial objective is " + std::to_string(objective));
      }
      auto p1 = h1.parameters();
      auto p2 = h2.parameters();
      for (std::size_t k = 0; k < p1.size(); ++k) {
        p1[k] += cfg.learning_rate * (g1[k] - cfg.weight_decay * p1[k]);
        p2[k] += cfg.learning_rate * (g2[k] - cfg.weight_decay * p2[k]);
      }
    }
    check_finite_params(h1, epoch + 1);
    check_finite_params(h2, epoch + 1);
  }
  return {std::move(h1), std::move(h2)};
}

}  // namespace

DiscrepancyEstimate estimate_discrepancy_adversarial(const SampleSet& source, const SampleSet& target,
                                                     const FamilyDescriptor& family,
                                                     const TrainConfig& cfg,
                                                     const AdversarialOptions& options) {
  cfg.validate();
  check_compatible(source, target, family);

  Halves tr, te;
  if (options.held_out) {
    tr = split_halves(source.size(), cfg.seed, "adversarial-split-tr");
    te = split_halves(target.size(), cfg.seed, "adversarial-split-te");
  } else {
    tr.fit = tr.eval = all_indices(source.size());
    te.fit = te.eval = all_indices(target.size());
  }

  DiscrepancyEstimate out;
  double objectives[2] = {0.0, 0.0};
  for (std::uint64_t direction = 0; direction < 2; ++direction) {
    const double sign = direction == 0 ? 1.0 : -1.0;
    const auto [h1, h2] = train_adversarial_pair(source, tr.fit, target, te.fit, family, cfg, sign, direction);
    objectives[direction] = mean_pair_loss(h1, h2, source, tr.eval, options.loss) -
                            mean_pair_loss(h1, h2, target, te.eval, options.loss);
  }
  out.objective_tr_minus_te = objectives[0];
  out.objective_te_minus_tr = -objectives[1];
  const double raw = std::max(std::abs(objectives[0]), std::abs(objectives[1]));
  out.estimate = std::clamp(raw, 0.0, options.loss.bound());
  return out;
}

// ---------------------------------------------------------------------------

ConceptShiftEstimate estimate_concept_shift(const SampleSet& source, const SampleSet& target,
                                            const FamilyDescriptor& family, const TrainConfig& cfg,
                                            const LossFunction& loss) {
  cfg.validate();
  check_compatible(source, target, family);
  if (source.label_count() != target.label_count()) {
    throw ValidationError("source and target label sets differ (" + std::to_string(source.label_count()) +
                          " vs " + std::to_string(target.label_count()) + " labels)");
  }
  if (family.label_count != source.label_count()) {
    throw ValidationError("family has " + std::to_string(family.label_count) + " outputs, samples have " +
                          std::to_string(source.label_count()) + " labels");
  }
  const Model f_tr = train_classifier(source, family, cfg, Objective::Category);
  const Model f_te = train_classifier(target, family, cfg, Objective::Category);

  auto disagreement = [&](const SampleSet& data) {
    double total = 0.0;
    for (const auto& r : data.records()) total += loss(predict(f_tr, r.feature), predict(f_te, r.feature));
    return total / static_cast<double>(data.size());
  };
  ConceptShiftEstimate out;
  out.disagreement_tr = disagreement(source);
  out.disagreement_te = disagreement(target);
  out.min = std::min(out.disagreement_tr, out.disagreement_te);
  out.max = std::max(out.disagreement_tr, out.disagreement_te);
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const RademacherEstimate& e) {
  return {
      {"value", e.value},
      {"std_error", e.std_error},
      {"draws", e.draws},
      {"sample_size", e.sample_size},
      {"exact", e.exact},
      {"lower_bound_approximation", e.lower_bound_approximation},
  };
}

FunctionTable loss_pair_table(const EnumerableClass& hypotheses, std::span<const std::size_t> sample_points,
                              const LossFunction& loss) {
  const std::size_t m = hypotheses.support_size();
  for (std::size_t x : sample_points) {
    if (x >= m) throw ValidationError("sample point " + std::to_string(x) + " is outside the support");
  }
  FunctionTable table;
  table.values.reserve(hypotheses.size() * hypotheses.size());
  for (const auto& h : hypotheses.members) {
    for (const auto& g : hypotheses.members) {
      std::vector<double> row;
      row.reserve(sample_points.size());
      for (std::size_t x : sample_points) row.push_back(loss(h[x], g[x]));
      table.values.push_back(std::move(row));
    }
  }
  return table;
}

FunctionTable loss_composed_table(const EnumerableClass& hypotheses, std::span<const std::size_t> sample_points,
                                  std::span<const std::size_t> sample_labels, const LossFunction& loss) {
  if (sample_points.size() != sample_labels.size()) {
    throw ValidationError("sample points and labels differ in length");
  }
  const std::size_t m = hypotheses.support_size();
  FunctionTable table;
  for (const auto& h : hypotheses.members) {
    std::vector<double> row;
    for (std::size_t i = 0; i < sample_points.size(); ++i) {
      const std::size_t x = sample_points[i];
      if (x >= m) throw ValidationError("sample point " + std::to_string(x) + " is outside the support");
      row.push_back(loss(h[x], LabelDistribution::one_hot(sample_labels[i], h[x].size())));
    }
    table.values.push_back(std::move(row));
  }
  return table;
}

namespace {

std::size_t check_table(const FunctionTable& table) {
  if (table.values.empty()) throw ValidationError("function class is empty");
  const std::size_t n = table.values.front().size();
  if (n == 0) throw ValidationError("empirical_rademacher: empty sample");
  for (const auto& row : table.values) {
    if (row.size() != n) throw ValidationError("function table rows differ in length");
  }
  return n;
}

double table_sup(const FunctionTable& table, std::span<const int> sigma) {
  double best = 0.0;
  for (const auto& row : table.values) {
    double s = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) s += sigma[i] * row[i];
    best = std::max(best, std::abs(s));
  }
  return best;
}

// Sum over all 2^n sign patterns of sup_g |sum_i sigma_i g_i|. Patterns are
// visited in Gray-code order inside fixed-size blocks; block sums are added
// in block order so the result does not depend on the worker count.
double enumerate_all_signs(const FunctionTable& table, std::size_t n, unsigned workers) {
  const std::uint64_t total = std::uint64_t{1} << n;
  const std::uint64_t block = std::min<std::uint64_t>(total, 1024);
  const std::uint64_t blocks = total / block;
  std::vector<double> block_sums(blocks, 0.0);
  const std::size_t g_count = table.values.size();

  parallel_for(
      blocks,
      [&](std::size_t begin, std::size_t end) {
        std::vector<double> sums(g_count);
        std::vector<int> sigma(n);
        for (std::size_t b = begin; b < end; ++b) {
          const std::uint64_t first = b * block;
          // Gray code of t: t ^ (t >> 1); bit i set means sigma_i = -1.
          const std::uint64_t gray = first ^ (first >> 1);
          for (std::size_t i = 0; i < n; ++i) sigma[i] = (gray >> i) & 1 ? -1 : 1;
          for (std::size_t g = 0; g < g_count; ++g) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += sigma[i] * table.values[g][i];
            sums[g] = s;
          }
          double acc = 0.0;
          for (std::uint64_t t = first; t < first + block; ++t) {
            if (t != first) {
              const auto flip = static_cast<std::size_t>(std::countr_zero(t));
              sigma[flip] = -sigma[flip];
              for (std::size_t g = 0; g < g_count; ++g) sums[g] += 2.0 * sigma[flip] * table.values[g][flip];
            }
            double best = 0.0;
            for (double s : sums) best = std::max(best, std::abs(s));
            acc += best;
          }
          block_sums[b] = acc;
        }
      },
      workers);
  double sum = 0.0;
  for (double s : block_sums) sum += s;
  return sum;
}

std::vector<int> draw_signs(std::uint64_t seed, std::size_t draw, std::size_t n) {
  Rng rng = Rng::substream(seed, "rademacher-sigma", draw);
  std::vector<int> sigma(n);
  for (auto& s : sigma) s = rng.sign();
  return sigma;
}

RademacherEstimate summarize(const std::vector<double>& sups, std::size_t n) {
  RademacherEstimate out;
  out.draws = sups.size();
  out.sample_size = n;
  const double scale = 2.0 / static_cast<double>(n);
  double mean = 0.0;
  for (double s : sups) mean += scale * s;
  mean /= static_cast<double>(sups.size());
  out.value = mean;
  if (sups.size() > 1) {
    double ss = 0.0;
    for (double s : sups) ss += (scale * s - mean) * (scale * s - mean);
    const double sd = std::sqrt(ss / static_cast<double>(sups.size() - 1));
    out.std_error = sd / std::sqrt(static_cast<double>(sups.size()));
  }
  return out;
}

// sup over the parametric class by multi-restart ascent; returns the best
// zero-one-scored |sum_i sigma_i g(x_i)| seen along every ascent path.
double parametric_sup(const ParametricLossClass& cls, const SampleSet& sample, std::span<const int> sigma,
                      std::uint64_t seed, std::size_t draw) {
  const std::size_t n = sample.size();
  const double M = cls.bound_M;
  const bool pair = cls.kind == ParametricClassKind::LossPair;
  double best = 0.0;

  for (std::size_t restart = 0; restart < cls.restarts; ++restart) {
    for (double direction : {1.0, -1.0}) {
      const std::uint64_t stream = (draw * cls.restarts + restart) * 2 + (direction > 0 ? 0 : 1);
      Rng init = Rng::substream(seed, "rademacher-init", stream);
      Model h1 = Model::initialize(cls.family, init);
      Model h2 = Model::initialize(cls.family, init);
      std::vector<double> g1(h1.parameters().size()), g2(h2.parameters().size());

      for (std::size_t step = 0; step <= cls.ascent_steps; ++step) {
        std::fill(g1.begin(), g1.end(), 0.0);
        std::fill(g2.begin(), g2.end(), 0.0);
        double scored = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const auto& rec = sample[i];
          const Eigen::VectorXd p = h1.probabilities(rec.feature);
          const double w = direction * sigma[i] * M / static_cast<double>(n);
          if (pair) {
            const Eigen::VectorXd q = h2.probabilities(rec.feature);
            Eigen::Index a = 0, b = 0;
            p.maxCoeff(&a);
            q.maxCoeff(&b);
            scored += sigma[i] * (a == b ? 0.0 : M);
            const auto d = smooth_disagreement(p, q);
            h1.backward(rec.feature, w * d.d_first, g1);
            h2.backward(rec.feature, w * d.d_second, g2);
          } else {
            const auto y = static_cast<Eigen::Index>(rec.label);
            Eigen::Index a = 0;
            p.maxCoeff(&a);
            scored += sigma[i] * (a == y ? 0.0 : M);
            // d(1 - p_y)/dz = -p_y (e_y - p)
            Eigen::VectorXd dz = p * p[y];
            dz[y] -= p[y];
            h1.backward(rec.feature, w * dz, g1);
          }
        }
        best = std::max(best, std::abs(scored));
        if (step == cls.ascent_steps) break;
        auto p1 = h1.parameters();
        for (std::size_t k = 0; k < p1.size(); ++k) p1[k] += cls.ascent_rate * g1[k];
        if (pair) {
          auto p2 = h2.parameters();
          for (std::size_t k = 0; k < p2.size(); ++k) p2[k] += cls.ascent_rate * g2[k];
        }
      }
    }
  }
  return best;
}

}  // namespace

RademacherEstimate empirical_rademacher(const FunctionTable& table, std::size_t draws, std::uint64_t seed,
                                        const RademacherOptions& options) {
  const std::size_t n = check_table(table);
  if (n <= options.exact_max_n && n < 63) {
    const double sum = enumerate_all_signs(table, n, options.workers);
    const double patterns = std::ldexp(1.0, static_cast<int>(n));
    RademacherEstimate out;
    out.value = (2.0 / static_cast<double>(n)) * sum / patterns;
    out.std_error = 0.0;
    out.draws = std::size_t{1} << n;
    out.sample_size = n;
    out.exact = true;
    return out;
  }
  if (draws == 0) throw ValidationError("empirical_rademacher: draws must be >= 1");
  std::vector<double> sups(draws);
  parallel_for(
      draws,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) sups[t] = table_sup(table, draw_signs(seed, t, n));
      },
      options.workers);
  return summarize(sups, n);
}

RademacherEstimate empirical_rademacher(const RademacherClass& cls, const SampleSet& sample, std::size_t draws,
                                        std::uint64_t seed, const RademacherOptions& options) {
  if (const auto* table = std::get_if<FunctionTable>(&cls)) {
    if (check_table(*table) != sample.size()) {
      throw ValidationError("function table has " + std::to_string(table->values.front().size()) +
                            " columns, sample has " + std::to_string(sample.size()) + " records");
    }
    return empirical_rademacher(*table, draws, seed, options);
  }
  const auto& param = std::get<ParametricLossClass>(cls);
  param.family.validate();
  if (param.family.input_dim != sample.dimension()) {
    throw ValidationError("family expects dimension " + std::to_string(param.family.input_dim) +
                          " but samples have dimension " + std::to_string(sample.dimension()));
  }
  if (param.kind == ParametricClassKind::LossComposed && param.family.label_count < sample.label_count()) {
    throw ValidationError("family has fewer outputs than the sample has labels");
  }
  if (param.restarts == 0) throw ValidationError("restarts must be >= 1");
  if (draws == 0) throw ValidationError("empirical_rademacher: draws must be >= 1");

  std::vector<double> sups(draws);
  parallel_for(
      draws,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
          sups[t] = parametric_sup(param, sample, draw_signs(seed, t, sample.size()), seed, t);
        }
      },
      options.workers);
  auto out = summarize(sups, sample.size());
  out.lower_bound_approximation = true;
  return out;
}

// ---------------------------------------------------------------------------

DomainClassifierResult domain_classifier(const SampleSet& source, const SampleSet& target,
                                         const FamilyDescriptor& family, const TrainConfig& cfg) {
  cfg.validate();
  check_compatible(source, target, family);
  FamilyDescriptor binary = family;
  binary.label_count = 2;

  Halves tr = split_halves(source.size(), cfg.seed, "domain-split-tr");
  Halves te = split_halves(target.size(), cfg.seed, "domain-split-te");
  // Balance the fit halves by truncating the larger (already shuffled) one.
  const std::size_t per_side = std::min(tr.fit.size(), te.fit.size());
  {
    Rng rng = Rng::substream(cfg.seed, "domain-balance");
    rng.shuffle(std::span<std::size_t>(tr.fit));
    rng.shuffle(std::span<std::size_t>(te.fit));
    tr.fit.resize(per_side);
    te.fit.resize(per_side);
  }

  std::vector<SampleRecord> records;
  records.reserve(2 * per_side);
  for (std::size_t i : tr.fit) {
    records.push_back({source[i].id, "source", 0, source[i].feature});
  }
  for (std::size_t i : te.fit) {
    records.push_back({target[i].id, "target", 1, target[i].feature});
  }
  const Model clf = train_classifier(SampleSet(std::move(records), 2), binary, cfg, Objective::Category);

  auto hit_rate = [&](const SampleSet& data, std::span<const std::size_t> idx, std::size_t want) {
    std::size_t hits = 0;
    for (std::size_t i : idx) hits += predict(clf, data[i].feature).argmax() == want ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(idx.size());
  };
  DomainClassifierResult out;
  out.balanced_accuracy = 0.5 * (hit_rate(source, tr.eval, 0) + hit_rate(target, te.eval, 1));
  out.da = std::clamp(2.0 * out.balanced_accuracy - 1.0, 0.0, 1.0);
  return out;
}

double domain_classifier_da(const SampleSet& source, const SampleSet& target, const FamilyDescriptor& family,
                            const TrainConfig& cfg) {
  return domain_classifier(source, target, family, cfg).da;
}

}  // namespace shiftlab
