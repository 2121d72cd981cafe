#include "shiftlab/cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "shiftlab/bounds.hpp"
#include "shiftlab/error.hpp"
#include "shiftlab/estimators.hpp"
#include "shiftlab/exact.hpp"
#include "shiftlab/harness.hpp"
#include "shiftlab/hypothesis.hpp"

namespace shiftlab::cli {

using nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw ComputationError("SHA-256 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < length; ++i) {
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return out.str();
}

namespace {

struct Options {
  std::string pair, source, target, table, manifest, log, functions, terms, rows_out;
  std::string loss = "zero-one";
  double bound = 1.0;
  std::string family = "linear";
  std::size_t epochs = 20;
  double lr = 0.1;
  std::size_t batch = 64;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  double delta = 0.05;
  std::size_t draws = 200;
  std::string out;
  std::string format = "json";
  bool in_sample = false;
  std::string rad_class = "loss-composed";
  std::size_t restarts = 8;
  std::size_t ascent_steps = 60;
  std::string unit = "percent";
  std::string mode = "random";
  std::vector<std::string> train_domains, test_domains;
  std::optional<std::size_t> per_dominant, per_minor, per_test;
  std::size_t last_epochs = 10;
};

class Report {
 public:
  Report(std::string command, const std::vector<std::string>& argv, std::uint64_t seed)
      : command_(std::move(command)), argv_(argv), seed_(seed) {}

  void input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open input file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    inputs_ += buf.str();
    inputs_ += '\0';
  }

  template <typename F>
  auto stage(const std::string& name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    auto result = body();
    timings_[name] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
  }

  json config = json::object();
  json results = json::object();

  json document() const {
    return {
        {"command", command_},  {"argv", argv_},     {"config", config},
        {"inputs_digest", sha256_hex(inputs_)},      {"seed", seed_},
        {"results", results},   {"timings_ms", timings_},
    };
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::uint64_t seed_;
  std::string inputs_;
  json timings_ = json::object();
};

TrainConfig train_config(const Options& o) {
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.weight_decay = o.weight_decay;
  cfg.validate();
  return cfg;
}

json train_json(const TrainConfig& cfg) {
  return {{"lr", cfg.learning_rate},
          {"batch", cfg.batch_size},
          {"epochs", cfg.epochs},
          {"weight_decay", cfg.weight_decay},
          {"seed", cfg.seed}};
}

std::pair<SampleSet, SampleSet> load_sample_pair(const Options& o, Report& report) {
  report.input(o.source);
  report.input(o.target);
  const SampleSet s = load_samples(o.source);
  const SampleSet t = load_samples(o.target);
  const std::size_t k = std::max(s.label_count(), t.label_count());
  return {SampleSet(s.records(), k), SampleSet(t.records(), k)};
}

EnumerableClass all_labelings(const DiscreteDomainPair& pair) {
  auto h = enumerate_all_labelings(pair.size(), pair.label_count());
  return h;
}

void shift_exact(const Options& o, Report& r) {
  r.input(o.pair);
  const auto pair = load_pair(o.pair);
  const auto loss = LossFunction::parse(o.loss, o.bound);
  r.config = {{"pair", o.pair}, {"loss", loss.name()}, {"M", loss.bound()}};
  const auto h = all_labelings(pair);
  const auto report = r.stage("exact", [&] { return exact_shift_report(pair, h, loss); });
  r.results = to_json(report);
  r.results["l1"] = l1_distance(pair);
  if (loss.kind() == LossKind::ZeroOne) r.results["prop1"] = prop1_discrepancy(pair, loss.bound());
}

void shift_estimate(const Options& o, Report& r) {
  auto [source, target] = load_sample_pair(o, r);
  const auto loss = LossFunction::parse(o.loss, o.bound);
  const auto family = FamilyDescriptor::parse(o.family, source.dimension(), source.label_count());
  const auto cfg = train_config(o);
  r.config = {{"source", o.source}, {"target", o.target}, {"loss", loss.name()}, {"M", loss.bound()},
              {"family", family.name()}, {"train", train_json(cfg)}, {"held_out", !o.in_sample}};
  AdversarialOptions adv;
  adv.held_out = !o.in_sample;
  adv.loss = loss;
  const auto cov = r.stage("covariate", [&] {
    return estimate_discrepancy_adversarial(source, target, family, cfg, adv);
  });
  const auto cpt = r.stage("concept", [&] { return estimate_concept_shift(source, target, family, cfg, loss); });
  r.results = {
      {"m_cov", cov.estimate},
      {"m_cpt_min", cpt.min},
      {"m_cpt_max", cpt.max},
      {"method_tag", to_string(MethodTag::Estimated)},
      {"objective_tr_minus_te", cov.objective_tr_minus_te},
      {"objective_te_minus_tr", cov.objective_te_minus_tr},
      {"disagreement_tr", cpt.disagreement_tr},
      {"disagreement_te", cpt.disagreement_te},
      {"config_digest", sha256_hex(r.config.dump())},
      {"metadata", {{"loss", loss.name()}, {"M", loss.bound()}, {"hypothesis_class", family.name()}}},
  };
}

FunctionTable table_from_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open function table: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  const json& rows = doc.is_object() && doc.contains("values") ? doc.at("values") : doc;
  if (!rows.is_array()) throw ValidationError(path + ": expected an array of rows or {\"values\": [...]}");
  FunctionTable table;
  for (std::size_t g = 0; g < rows.size(); ++g) {
    if (!rows[g].is_array()) throw ValidationError(path + ": values[" + std::to_string(g) + "] is not an array");
    std::vector<double> row;
    for (std::size_t i = 0; i < rows[g].size(); ++i) {
      if (!rows[g][i].is_number()) {
        throw ValidationError(path + ": values[" + std::to_string(g) + "][" + std::to_string(i) +
                              "] is not a number");
      }
      row.push_back(rows[g][i].get<double>());
    }
    table.values.push_back(std::move(row));
  }
  return table;
}

void rademacher(const Options& o, Report& r) {
  RademacherEstimate est;
  if (!o.functions.empty()) {
    r.input(o.functions);
    const auto table = table_from_json(o.functions);
    r.config = {{"functions", o.functions}, {"draws", o.draws}};
    est = r.stage("rademacher", [&] { return empirical_rademacher(table, o.draws, o.seed); });
  } else {
    if (o.source.empty()) throw ValidationError("rademacher needs --functions or --source");
    r.input(o.source);
    const auto sample = load_samples(o.source);
    ParametricLossClass cls;
    if (o.rad_class == "loss-composed") {
      cls.kind = ParametricClassKind::LossComposed;
    } else if (o.rad_class == "loss-pair") {
      cls.kind = ParametricClassKind::LossPair;
    } else {
      throw ValidationError("unknown --class '" + o.rad_class + "' (expected loss-composed or loss-pair)");
    }
    cls.family = FamilyDescriptor::parse(o.family, sample.dimension(), std::max<std::size_t>(2, sample.label_count()));
    cls.bound_M = o.bound;
    cls.restarts = o.restarts;
    cls.ascent_steps = o.ascent_steps;
    r.config = {{"source", o.source}, {"class", o.rad_class}, {"family", cls.family.name()},
                {"draws", o.draws},   {"M", o.bound},         {"restarts", o.restarts},
                {"ascent_steps", o.ascent_steps}};
    est = r.stage("rademacher", [&] { return empirical_rademacher(RademacherClass(cls), sample, o.draws, o.seed); });
  }
  r.results = to_json(est);
}

json read_terms(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open terms file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

double number(const json& doc, const std::string& key, const std::string& path) {
  if (!doc.contains(key) || !doc.at(key).is_number()) {
    throw ValidationError(path + ": field '" + key + "' is missing or not a number");
  }
  return doc.at(key).get<double>();
}

void bounds_check(const Options& o, Report& r) {
  if (o.pair.empty() && o.terms.empty()) throw ValidationError("bounds-check needs --pair or --terms");
  r.config = {{"loss", o.loss}, {"M", o.bound}, {"delta", o.delta}};
  if (!o.pair.empty()) {
    r.input(o.pair);
    r.config["pair"] = o.pair;
    const auto pair = load_pair(o.pair);
    const auto loss = LossFunction::parse(o.loss, o.bound);
    const auto h = all_labelings(pair);
    const auto v = r.stage("verify", [&] { return verify_bounds_bruteforce(pair, h, loss); });
    r.results["verification"] = to_json(v);
  }
  if (!o.terms.empty()) {
    r.input(o.terms);
    r.config["terms"] = o.terms;
    const json doc = read_terms(o.terms);
    if (!doc.is_object()) throw ValidationError(o.terms + ": expected a JSON object");
    const double m_cpt_min = number(doc, "m_cpt_min", o.terms);
    const double m_cpt_max = number(doc, "m_cpt_max", o.terms);
    if (doc.contains("n_tr")) {
      EmpiricalTerms t;
      t.eps_tr_hat = number(doc, "eps_tr", o.terms);
      t.m_cov_hat = number(doc, "m_cov", o.terms);
      t.rad_loss_pair_tr = number(doc, "rad_loss_pair_tr", o.terms);
      t.rad_loss_pair_te = number(doc, "rad_loss_pair_te", o.terms);
      t.rad_loss_composed_tr = number(doc, "rad_loss_composed_tr", o.terms);
      t.n_tr = static_cast<std::size_t>(number(doc, "n_tr", o.terms));
      t.n_te = static_cast<std::size_t>(number(doc, "n_te", o.terms));
      t.bound_M = doc.contains("M") ? number(doc, "M", o.terms) : o.bound;
      t.delta = o.delta;
      t.m_cpt = m_cpt_min;
      r.results["upper"] = to_json(empirical_upper_bound(t));
      t.m_cpt = m_cpt_max;
      r.results["lower"] = to_json(empirical_lower_bound(t));
    } else {
      const double eps_tr = number(doc, "eps_tr", o.terms);
      const double m_cov = number(doc, "m_cov", o.terms);
      r.results["upper"] = to_json(population_upper_bound(eps_tr, m_cov, m_cpt_min));
      r.results["lower"] = to_json(population_lower_bound(eps_tr, m_cov, m_cpt_max));
    }
    r.results["m_cpt_max_minus_m_cov"] = m_cpt_max - number(doc, "m_cov", o.terms);
  }
}

void da(const Options& o, Report& r) {
  if (!o.pair.empty()) {
    r.input(o.pair);
    r.config = {{"pair", o.pair}, {"collection", "power-set"}};
    const auto pair = load_pair(o.pair);
    const auto subsets = power_set(pair.size());
    const auto d = r.stage("exact", [&] { return da_distance_exact(pair, subsets); });
    r.results = {{"da", d.distance}, {"complement_closed", d.complement_closed}, {"method_tag", "exact"}};
    if (d.classification_form) r.results["classification_form"] = *d.classification_form;
    return;
  }
  auto [source, target] = load_sample_pair(o, r);
  const auto family = FamilyDescriptor::parse(o.family, source.dimension(), 2);
  const auto cfg = train_config(o);
  r.config = {{"source", o.source}, {"target", o.target}, {"family", family.name()}, {"train", train_json(cfg)}};
  const auto d = r.stage("classifier", [&] { return domain_classifier(source, target, family, cfg); });
  r.results = {{"da", d.da}, {"balanced_accuracy", d.balanced_accuracy}, {"method_tag", "estimated"}};
}

void kl(const Options& o, Report& r) {
  r.input(o.pair);
  r.config = {{"pair", o.pair}};
  const auto pair = load_pair(o.pair);
  const auto d = r.stage("kl", [&] {
    return kl_decomposition(joint_table(pair.p_tr(), pair.f_tr()), joint_table(pair.p_te(), pair.f_te()));
  });
  r.results = {{"concept_kl", d.concept_kl}, {"covariate_kl", d.covariate_kl}, {"total_kl", d.total_kl}};
}

void dg(const Options& o, Report& r) {
  r.input(o.table);
  AccuracyUnit unit;
  if (o.unit == "percent") {
    unit = AccuracyUnit::Percent;
  } else if (o.unit == "fraction") {
    unit = AccuracyUnit::Fraction;
  } else {
    throw ValidationError("unknown --unit '" + o.unit + "' (expected percent or fraction)");
  }
  r.config = {{"table", o.table}, {"unit", o.unit}};
  const auto table = load_accuracy_table(o.table, unit);
  r.results = to_json(r.stage("metrics", [&] { return dg_metrics(table); }));
}

void split_make(const Options& o, Report& r) {
  r.input(o.manifest);
  const auto manifest = load_manifest(o.manifest);
  r.config = {{"manifest", o.manifest}, {"mode", o.mode}};
  FlexibleParams params;
  if (o.per_dominant) params.caps.per_dominant = o.per_dominant;
  if (o.per_minor) params.caps.per_minor = o.per_minor;
  if (o.per_test) params.caps.per_test = o.per_test;
  const auto split = r.stage("split", [&] {
    if (o.mode == "classic") return make_classic_split(manifest, o.train_domains, o.test_domains);
    if (o.mode == "random") return make_flexible_split(manifest, SplitMode::FlexibleRandom, params, o.seed);
    if (o.mode == "compositional") {
      return make_flexible_split(manifest, SplitMode::FlexibleCompositional, params, o.seed);
    }
    throw ValidationError("unknown --mode '" + o.mode + "' (expected classic, random or compositional)");
  });
  check_split_integrity(manifest, split, params);
  const std::string rows = to_jsonl(split);
  if (!o.rows_out.empty()) {
    std::ofstream file(o.rows_out, std::ios::binary);
    if (!file) throw ValidationError("cannot write split rows: " + o.rows_out);
    file << rows;
  }
  json counts = json::object();
  for (const auto& row : split.rows) {
    if (row.role != Role::Unused) counts[to_string(row.role)] = counts.value(to_string(row.role), 0) + 1;
  }
  r.results = {{"spec", to_json(split.spec)},
               {"row_counts", counts},
               {"rows_digest", sha256_hex(rows)},
               {"warnings", split.warnings}};
}

void variance(const Options& o, Report& r) {
  r.input(o.log);
  r.config = {{"log", o.log}, {"last_epochs", o.last_epochs}};
  const auto log = load_run_log(o.log);
  r.results = to_json(r.stage("variance", [&] { return variance_report(log, o.last_epochs); }));
  r.results["method"] = log.method();
}

void flatten(const json& node, const std::string& prefix, std::ostream& out) {
  if (node.is_object()) {
    for (const auto& [key, value] : node.items()) flatten(value, prefix.empty() ? key : prefix + "." + key, out);
  } else if (node.is_string()) {
    out << prefix << ',' << node.get<std::string>() << '\n';
  } else if (node.is_primitive() && !node.is_null()) {
    out << prefix << ',' << node.dump() << '\n';
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Covariate and concept shift metrics, bounds and DG evaluation tools", "shiftlab"};
  app.require_subcommand(1, 1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Top-level seed");
    sub->add_option("--out", o.out, "Write the report here instead of stdout");
    sub->add_option("--format", o.format, "json or csv (scalar fields only)")
        ->check(CLI::IsMember({"json", "csv"}));
  };
  auto loss_opts = [&](CLI::App* sub) {
    sub->add_option("--loss", o.loss, "zero-one or total-variation");
    sub->add_option("--bound", o.bound, "Loss bound M");
  };
  auto train_opts = [&](CLI::App* sub) {
    sub->add_option("--family", o.family, "linear or mlp:<width>");
    sub->add_option("--epochs", o.epochs);
    sub->add_option("--lr", o.lr);
    sub->add_option("--batch", o.batch);
    sub->add_option("--weight-decay", o.weight_decay);
  };

  auto* exact = app.add_subcommand("shift-exact", "Exact covariate and concept shift of a discrete pair");
  exact->add_option("--pair", o.pair)->required();
  loss_opts(exact);
  common(exact);

  auto* estimate = app.add_subcommand("shift-estimate", "Estimate shift metrics from two sample sets");
  estimate->add_option("--source", o.source)->required();
  estimate->add_option("--target", o.target)->required();
  estimate->add_flag("--in-sample", o.in_sample, "Score the adversarial pair on its training data");
  loss_opts(estimate);
  train_opts(estimate);
  common(estimate);

  auto* rad = app.add_subcommand("rademacher", "Empirical Rademacher complexity");
  rad->add_option("--functions", o.functions, "JSON array of per-function value rows");
  rad->add_option("--source", o.source);
  rad->add_option("--class", o.rad_class, "loss-composed or loss-pair");
  rad->add_option("--draws", o.draws);
  rad->add_option("--restarts", o.restarts);
  rad->add_option("--ascent-steps", o.ascent_steps);
  rad->add_option("--bound", o.bound, "Loss bound M");
  train_opts(rad);
  common(rad);

  auto* bounds = app.add_subcommand("bounds-check", "Evaluate or verify the shift bounds");
  bounds->add_option("--pair", o.pair, "Discrete pair: verify every hypothesis exactly");
  bounds->add_option("--terms", o.terms, "JSON bound terms");
  bounds->add_option("--delta", o.delta);
  loss_opts(bounds);
  common(bounds);

  auto* dasub = app.add_subcommand("da", "d_A distance (exact on a pair, classifier on samples)");
  dasub->add_option("--pair", o.pair);
  dasub->add_option("--source", o.source);
  dasub->add_option("--target", o.target);
  train_opts(dasub);
  common(dasub);

  auto* klsub = app.add_subcommand("kl", "KL decomposition into concept and covariate parts");
  klsub->add_option("--pair", o.pair)->required();
  common(klsub);

  auto* dgsub = app.add_subcommand("dg-metrics", "Average, overall and std accuracy");
  dgsub->add_option("--table", o.table)->required();
  dgsub->add_option("--unit", o.unit, "percent or fraction");
  common(dgsub);

  auto* split = app.add_subcommand("split-make", "Generate a classic or flexible split");
  split->add_option("--manifest", o.manifest)->required();
  split->add_option("--mode", o.mode, "classic, random or compositional");
  split->add_option("--train", o.train_domains, "Classic mode train domains")->delimiter(',');
  split->add_option("--test", o.test_domains, "Classic mode test domains")->delimiter(',');
  split->add_option("--per-dominant", o.per_dominant);
  split->add_option("--per-minor", o.per_minor);
  split->add_option("--per-test", o.per_test);
  split->add_option("--rows", o.rows_out, "Write JSONL row assignments here");
  common(split);

  auto* var = app.add_subcommand("variance", "Seed and epoch variance of a run log");
  var->add_option("--log", o.log)->required();
  var->add_option("--last-epochs", o.last_epochs);
  common(var);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Report report(chosen->get_name(), args, o.seed);
  try {
    const std::string& name = chosen->get_name();
    if (name == "shift-exact") shift_exact(o, report);
    else if (name == "shift-estimate") shift_estimate(o, report);
    else if (name == "rademacher") rademacher(o, report);
    else if (name == "bounds-check") bounds_check(o, report);
    else if (name == "da") da(o, report);
    else if (name == "kl") kl(o, report);
    else if (name == "dg-metrics") dg(o, report);
    else if (name == "split-make") split_make(o, report);
    else if (name == "variance") variance(o, report);
    report.config["seed"] = o.seed;

    const json doc = report.document();
    std::ostringstream text;
    if (o.format == "csv") {
      text << "field,value\n";
      flatten(doc.at("results"), "", text);
    } else {
      text << doc.dump(2) << '\n';
    }
    if (o.out.empty()) {
      out << text.str();
    } else {
      std::ofstream file(o.out, std::ios::binary);
      if (!file) throw ValidationError("cannot write report: " + o.out);
      file << text.str();
    }
    return kOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  } catch (const ComputationError& e) {
    err << "error: " << e.what() << '\n';
    return kComputationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kComputationError;
  }
}

}  // namespace shiftlab::cli
