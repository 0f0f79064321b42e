#include "cdcor/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cdcor/causal.hpp"
#include "cdcor/model.hpp"

namespace cdcor::experiment {

namespace fs = std::filesystem;
using training::Ablation;

const char* to_string(SplitKind k) {
  switch (k) {
    case SplitKind::kIid: return "iid";
    case SplitKind::kOodDegree: return "ood_degree";
    case SplitKind::kOodAttribute: return "ood_attribute";
  }
  return "?";
}

SplitKind parse_split_kind(std::string_view text) {
  if (text == "iid") return SplitKind::kIid;
  if (text == "ood_degree") return SplitKind::kOodDegree;
  if (text == "ood_attribute") return SplitKind::kOodAttribute;
  throw ConfigError("unknown split.kind '" + std::string(text) + "' (iid, ood_degree, ood_attribute)");
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& xs, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? sep : "") + xs[i];
  return out;
}

template <typename T>
std::string join_numbers(const std::vector<T>& xs) {
  std::vector<std::string> s;
  for (T x : xs) s.push_back(std::to_string(x));
  return join(s);
}

// "a:b" or "a:b:c" into doubles.
std::vector<double> parse_ratio(const std::string& key, const std::string& text, std::size_t parts) {
  const auto fields = split_list(text, ':');
  if (fields.size() != parts) {
    throw ConfigError("'" + key + "' expects " + std::to_string(parts) + " ':'-separated numbers");
  }
  Config one;
  std::vector<double> out;
  for (const auto& f : fields) {
    one.set("v", f);
    out.push_back(one.get_double("v", 0.0));
  }
  return out;
}

std::string ratio_text(std::initializer_list<double> xs) {
  std::vector<std::string> s;
  for (double x : xs) s.push_back(num(x));
  return join(s, ":");
}

char delimiter_of(const std::string& text) {
  if (text == "tab" || text == "\\t") return '\t';
  if (text.size() != 1) throw ConfigError("data.delimiter must be one character or 'tab'");
  return text[0];
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_all(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void mark_incomplete(const fs::path& dir, const std::string& stage) {
  write_all(dir / kIncompleteMarker, stage + "\n");
}

void mark_complete(const fs::path& dir) { fs::remove(dir / kIncompleteMarker); }

// Runs `body`, converting failures into StageError and keeping the marker.
template <typename F>
void stage(const std::string& name, const fs::path& dir, F&& body) {
  mark_incomplete(dir, name);
  try {
    body();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
  mark_complete(dir);
}

std::string seed_tag(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

const char* suffix(bool baseline) { return baseline ? "-iid" : ""; }

eval::ModelEvalOptions eval_options(const ExperimentConfig& c, Ablation a) {
  return {a != Ablation::kNoCausal, c.train.weights.strict_mask};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  if (!(sparsity > 0.0 && sparsity <= 1.0)) throw ConfigError("run.sparsity must lie in (0, 1]");
  if (ks.empty()) throw ConfigError("eval.ks must list at least one cutoff");
  for (std::size_t k : ks) {
    if (k < 1 || k > eval::kCandidates) throw ConfigError("eval.ks values must lie in [1, 100]");
  }
  if (ablations.empty()) throw ConfigError("run.ablations must list at least one mode");
  if (!(graph_threshold > 0.0)) throw ConfigError("run.graph_threshold must be positive");
  if (source == DataSource::kCsv) {
    for (const auto& p : {source_csv, target_csv}) {
      if (p.empty()) throw ConfigError("data.source_csv and data.target_csv are required for csv data");
      if (!fs::exists(p)) throw ConfigError("data file not found: " + p.string());
    }
  }
  for (double r : {ratios.train, ratios.validation, ratios.test}) {
    if (!(r >= 0.0)) throw ConfigError("split.ratios must be non-negative");
  }
  if (!(ratios.train > 0.0 && ratios.test > 0.0)) {
    throw ConfigError("split.ratios needs positive train and test parts");
  }
  for (auto mix : {train_mix, test_mix}) {
    if (mix.first < 0.0 || mix.second < 0.0 || std::abs(mix.first + mix.second - 1.0) > 1e-9) {
      throw ConfigError("split mixes must be non-negative and sum to 1");
    }
  }
  train.validate();
}

ExperimentConfig ExperimentConfig::from_config(const Config& c) {
  ExperimentConfig e;
  const std::string kind = c.get("data.kind", "synth");
  if (kind == "synth") {
    e.source = DataSource::kSynth;
  } else if (kind == "csv") {
    e.source = DataSource::kCsv;
  } else {
    throw ConfigError("unknown data.kind '" + kind + "' (synth, csv)");
  }
  e.source_csv = c.get("data.source_csv", "");
  e.target_csv = c.get("data.target_csv", "");
  e.schema.user = c.get("data.user_column", e.schema.user);
  e.schema.item = c.get("data.item_column", e.schema.item);
  e.schema.rating = c.get("data.rating_column", e.schema.rating);
  e.schema.attribute = c.get("data.attribute_column", e.schema.attribute);
  e.schema.delimiter = delimiter_of(c.get("data.delimiter", ","));
  e.positive_threshold = c.get_double("data.positive_threshold", e.positive_threshold);

  auto& s = e.synth;
  s.users = c.get_uint("synth.users", s.users);
  s.source_items = c.get_uint("synth.source_items", s.source_items);
  s.target_items = c.get_uint("synth.target_items", s.target_items);
  s.k = c.get_uint("synth.k", s.k);
  s.source_density = c.get_double("synth.source_density", s.source_density);
  s.target_density = c.get_double("synth.target_density", s.target_density);
  s.edges = c.get_uint("synth.edges", s.edges);
  s.noise = c.get_double("synth.noise", s.noise);
  s.shift = c.get_double("synth.shift", s.shift);
  s.source_correlation = c.get_double("synth.source_correlation", s.source_correlation);
  s.seed = c.get_uint("synth.seed", s.seed);

  e.split = parse_split_kind(c.get("split.kind", "iid"));
  if (c.has("split.ratios")) {
    const auto r = parse_ratio("split.ratios", c.get("split.ratios", ""), 3);
    e.ratios = {r[0], r[1], r[2]};
  }
  if (c.has("split.train_mix")) {
    const auto r = parse_ratio("split.train_mix", c.get("split.train_mix", ""), 2);
    e.train_mix = {r[0], r[1]};
  }
  if (c.has("split.test_mix")) {
    const auto r = parse_ratio("split.test_mix", c.get("split.test_mix", ""), 2);
    e.test_mix = {r[0], r[1]};
  }
  e.iid_baseline = c.get_bool("split.iid_baseline", e.iid_baseline);

  auto& t = e.train;
  auto& w = t.weights;
  t.k = c.get_uint("train.k", t.k);
  t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
  w.source = c.get_double("train.lambda_source", w.source);
  w.domain = c.get_double("train.lambda_domain", w.domain);
  w.causal = c.get_double("train.lambda_causal", w.causal);
  w.reg = c.get_double("train.lambda_reg", w.reg);
  w.gamma.dag = c.get_double("train.gamma_dag", w.gamma.dag);
  w.gamma.a2p = c.get_double("train.gamma_a2p", w.gamma.a2p);
  w.gamma.pnr = c.get_double("train.gamma_pnr", w.gamma.pnr);
  w.gamma.sparsity = c.get_double("train.gamma_sparsity", w.gamma.sparsity);
  w.grl_scale = c.get_double("train.grl_scale", w.grl_scale);
  w.strict_mask = c.get_bool("train.strict_mask", w.strict_mask);
  t.epochs = c.get_uint("train.epochs", t.epochs);
  t.batch_size = c.get_uint("train.batch_size", t.batch_size);
  t.negatives = c.get_uint("train.negatives", t.negatives);
  t.resample_negatives = c.get_bool("train.resample_negatives", t.resample_negatives);
  t.optimizer = training::parse_optimizer(c.get("train.optimizer", "adam"));
  t.patience = c.get_uint("train.patience", t.patience);
  t.init_range = c.get_double("train.init_range", t.init_range);
  t.dag_schedule.growth = c.get_double("train.dag_growth", t.dag_schedule.growth);
  t.dag_schedule.tolerance = c.get_double("train.dag_tolerance", t.dag_schedule.tolerance);

  if (c.has("eval.ks")) {
    e.ks.clear();
    Config one;
    for (const auto& k : c.get_list("eval.ks", {})) {
      one.set("k", k);
      e.ks.push_back(one.get_uint("k", 0));
    }
  }
  if (c.has("run.seeds")) {
    e.seeds.clear();
    Config one;
    for (const auto& s : c.get_list("run.seeds", {})) {
      one.set("s", s);
      e.seeds.push_back(one.get_uint("s", 0));
    }
  }
  e.sparsity = c.get_double("run.sparsity", e.sparsity);
  if (c.has("run.ablations")) {
    e.ablations.clear();
    for (const auto& a : c.get_list("run.ablations", {})) e.ablations.push_back(training::parse_ablation(a));
  }
  e.graph_threshold = c.get_double("run.graph_threshold", e.graph_threshold);
  e.out = c.get("run.out", e.out.string());
  c.reject_unused();
  e.validate();
  return e;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_config(Config::load(path));
}

Config ExperimentConfig::to_config() const {
  Config c;
  c.set("data.kind", source == DataSource::kSynth ? "synth" : "csv");
  if (source == DataSource::kCsv) {
    c.set("data.source_csv", source_csv.string());
    c.set("data.target_csv", target_csv.string());
    c.set("data.user_column", schema.user);
    c.set("data.item_column", schema.item);
    c.set("data.rating_column", schema.rating);
    c.set("data.attribute_column", schema.attribute);
    c.set("data.delimiter", schema.delimiter == '\t' ? "tab" : std::string(1, schema.delimiter));
    c.set("data.positive_threshold", num(positive_threshold));
  } else {
    c.set("synth.users", std::to_string(synth.users));
    c.set("synth.source_items", std::to_string(synth.source_items));
    c.set("synth.target_items", std::to_string(synth.target_items));
    c.set("synth.k", std::to_string(synth.k));
    c.set("synth.source_density", num(synth.source_density));
    c.set("synth.target_density", num(synth.target_density));
    c.set("synth.edges", std::to_string(synth.edges));
    c.set("synth.noise", num(synth.noise));
    c.set("synth.shift", num(synth.shift));
    c.set("synth.source_correlation", num(synth.source_correlation));
    c.set("synth.seed", std::to_string(synth.seed));
  }
  c.set("split.kind", to_string(split));
  c.set("split.ratios", ratio_text({ratios.train, ratios.validation, ratios.test}));
  if (split != SplitKind::kIid) {
    c.set("split.train_mix", ratio_text({train_mix.first, train_mix.second}));
    c.set("split.test_mix", ratio_text({test_mix.first, test_mix.second}));
    c.set("split.iid_baseline", iid_baseline ? "true" : "false");
  }
  const auto& t = train;
  const auto& w = t.weights;
  c.set("train.k", std::to_string(t.k));
  c.set("train.learning_rate", num(t.learning_rate));
  c.set("train.lambda_source", num(w.source));
  c.set("train.lambda_domain", num(w.domain));
  c.set("train.lambda_causal", num(w.causal));
  c.set("train.lambda_reg", num(w.reg));
  c.set("train.gamma_dag", num(w.gamma.dag));
  c.set("train.gamma_a2p", num(w.gamma.a2p));
  c.set("train.gamma_pnr", num(w.gamma.pnr));
  c.set("train.gamma_sparsity", num(w.gamma.sparsity));
  c.set("train.grl_scale", num(w.grl_scale));
  c.set("train.strict_mask", w.strict_mask ? "true" : "false");
  c.set("train.epochs", std::to_string(t.epochs));
  c.set("train.batch_size", std::to_string(t.batch_size));
  c.set("train.negatives", std::to_string(t.negatives));
  c.set("train.resample_negatives", t.resample_negatives ? "true" : "false");
  c.set("train.optimizer", training::to_string(t.optimizer));
  c.set("train.patience", std::to_string(t.patience));
  c.set("train.init_range", num(t.init_range));
  c.set("train.dag_growth", num(t.dag_schedule.growth));
  c.set("train.dag_tolerance", num(t.dag_schedule.tolerance));
  c.set("eval.ks", join_numbers(ks));
  c.set("run.seeds", join_numbers(seeds));
  c.set("run.sparsity", num(sparsity));
  std::vector<std::string> modes;
  for (Ablation a : ablations) modes.push_back(training::to_string(a));
  c.set("run.ablations", join(modes));
  c.set("run.graph_threshold", num(graph_threshold));
  c.set("run.out", out.string());
  return c;
}

std::string ExperimentConfig::hash() const {
  Config c = to_config();
  std::string text;
  for (const auto& [k, v] : c.entries())
    if (k != "run.out" && k != "run.seeds") text += k + "=" + v + "\n";
  return hex64(fnv1a64(text));
}

std::string provenance(const ExperimentConfig& c, std::uint64_t seed) {
  return "cdcor config=" + c.hash() + " seed=" + std::to_string(seed);
}

std::string provenance(const ExperimentConfig& c) {
  return "cdcor config=" + c.hash() + " seeds=" + join_numbers(c.seeds);
}

fs::path split_dir(const ExperimentConfig& c, std::uint64_t seed, bool baseline) {
  return c.out / "splits" / seed_tag(seed) / (baseline ? "iid" : "main");
}

fs::path run_dir(const ExperimentConfig& c, Ablation a, std::uint64_t seed) {
  return c.out / training::to_string(a) / seed_tag(seed);
}

data::CrossDomainDataset load_dataset(const ExperimentConfig& c) {
  if (c.source == DataSource::kSynth) return data::synth_generate(c.synth).dataset;
  return data::ingest_csv(c.source_csv, c.target_csv, c.schema, c.positive_threshold).dataset;
}

data::SplitResult make_split(const ExperimentConfig& c, const data::CrossDomainDataset& ds,
                             std::uint64_t seed, bool baseline) {
  data::SplitResult s;
  const SplitKind kind = baseline ? SplitKind::kIid : c.split;
  switch (kind) {
    case SplitKind::kIid: s = data::split_iid(ds, c.ratios, seed); break;
    case SplitKind::kOodDegree:
      s = data::split_ood_degree(ds, c.train_mix, c.test_mix, seed, c.ratios);
      break;
    case SplitKind::kOodAttribute:
      s = data::split_ood_attribute(ds, c.train_mix, c.test_mix, seed, c.ratios);
      break;
  }
  data::subsample_target_train(s, c.sparsity, seed);
  return s;
}

void prepare(const ExperimentConfig& c, std::ostream& log) {
  fs::create_directories(c.out);
  stage("prepare", c.out, [&] {
    write_all(c.out / "config.txt", "# " + provenance(c) + "\n" + c.to_config().canonical());
    const auto ds = load_dataset(c);
    const fs::path dir = c.out / "dataset";
    fs::create_directories(dir);
    data::write_canonical(ds, dir / "source.csv", dir / "target.csv");
    for (const char* f : {"source.csv", "target.csv"}) {
      write_all(dir / f, "# " + provenance(c) + "\n" + read_all(dir / f));
    }
    log << "prepare: " << ds.users << " users, " << ds.source_positives.size() << " source and "
        << ds.target_positives.size() << " target positives\n";
    for (std::uint64_t seed : c.seeds) {
      for (bool baseline : {false, true}) {
        if (baseline && !c.has_baseline()) continue;
        data::write_split(make_split(c, ds, seed, baseline), split_dir(c, seed, baseline),
                          provenance(c, seed));
      }
    }
  });
}

void train_runs(const ExperimentConfig& c, std::ostream& log) {
  const auto ds = load_dataset(c);
  for (Ablation a : c.ablations) {
    for (std::uint64_t seed : c.seeds) {
      const fs::path dir = run_dir(c, a, seed);
      fs::create_directories(dir);
      stage("train", dir, [&] {
        for (bool baseline : {false, true}) {
          if (baseline && !c.has_baseline()) continue;
          const fs::path sdir = split_dir(c, seed, baseline);
          if (!fs::exists(sdir / "train.csv")) {
            throw Error("split " + sdir.string() + " is missing; run prepare first");
          }
          const auto split = data::read_split(sdir);
          training::TrainConfig tc = c.train;
          tc.seed = seed;
          tc.ablation = a;
          const auto result = training::train(ds, split, tc);
          const std::string prov = provenance(c, seed);
          const std::string sfx = suffix(baseline);
          model::write_checkpoint(dir / ("checkpoint" + sfx + ".bin"), result.params, prov);
          training::write_history(dir / ("history" + sfx + ".csv"), result.history, prov);
          causal::write_graph(dir / ("graph" + sfx + ".csv"), result.adjacency(), c.graph_threshold, prov);
          const auto& last = result.history.epochs.back();
          log << "train " << training::to_string(a) << " seed " << seed << (baseline ? " (iid)" : "")
              << ": " << result.history.epochs.size() << " epochs, best " << result.history.best_epoch
              << ", val HR@10 " << last.val_hr10 << "\n";
        }
      });
    }
  }
}

void evaluate_runs(const ExperimentConfig& c, std::ostream& log) {
  for (Ablation a : c.ablations) {
    for (std::uint64_t seed : c.seeds) {
      const fs::path dir = run_dir(c, a, seed);
      stage("evaluate", dir, [&] {
        for (bool baseline : {false, true}) {
          if (baseline && !c.has_baseline()) continue;
          const std::string sfx = suffix(baseline);
          const auto ckpt = model::read_checkpoint(dir / ("checkpoint" + sfx + ".bin"));
          const auto lists = data::read_candidates(split_dir(c, seed, baseline) / "test_candidates.csv");
          const auto m = eval::evaluate_model(ckpt.params, lists, c.ks, eval_options(c, a));
          eval::write_run_metrics(dir / ("metrics" + sfx + ".csv"), m, provenance(c, seed));
          log << "evaluate " << training::to_string(a) << " seed " << seed << (baseline ? " (iid)" : "")
              << ": HR@" << c.ks.back() << " " << m.hr.back() << " over " << m.positives
              << " positives\n";
        }
      });
    }
  }
}

std::vector<eval::NamedReport> collect_report(const ExperimentConfig& c) {
  std::vector<eval::NamedReport> rows;
  for (Ablation a : c.ablations) {
    std::vector<eval::RunMetrics> main, iid;
    for (std::uint64_t seed : c.seeds) {
      const fs::path dir = run_dir(c, a, seed);
      if (fs::exists(dir / kIncompleteMarker)) {
        throw StageError("report", dir.string() + " is marked incomplete");
      }
      main.push_back(eval::read_run_metrics(dir / "metrics.csv"));
      if (c.has_baseline()) iid.push_back(eval::read_run_metrics(dir / "metrics-iid.csv"));
    }
    const std::string mode = training::to_string(a);
    const eval::MetricsReport report = eval::aggregate_runs(main);
    if (c.has_baseline()) {
      const eval::MetricsReport base = eval::aggregate_runs(iid);
      rows.emplace_back(mode + " iid", base);
      rows.emplace_back(mode + " " + to_string(c.split), eval::degradation_report(base, report));
    } else {
      rows.emplace_back(mode + " " + to_string(c.split), report);
    }
  }
  return rows;
}

void write_report(const ExperimentConfig& c, std::ostream& log) {
  try {
    const auto rows = collect_report(c);
    eval::write_metrics_csv(c.out / "metrics.csv", rows, provenance(c));
    eval::write_metrics_markdown(c.out / "metrics.md", rows, provenance(c));
    log << eval::metrics_markdown(rows);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("report", e.what());
  }
}

void run_experiment(const ExperimentConfig& c, std::ostream& log) {
  prepare(c, log);
  fs::create_directories(c.out);
  mark_incomplete(c.out, "run");
  train_runs(c, log);
  evaluate_runs(c, log);
  write_report(c, log);
  mark_complete(c.out);
}

GradcheckOutcome gradcheck(const GradcheckOptions& o) {
  model::ToyInstance toy = model::make_toy_instance(o.seed);
  std::function<void(ParameterSet&)> corrupt;
  if (!o.corrupt_block.empty()) {
    if (!toy.params.contains(o.corrupt_block)) {
      throw ConfigError("unknown parameter block '" + o.corrupt_block + "'");
    }
    corrupt = [name = o.corrupt_block](ParameterSet& p) {
      for (double& g : p.at(name).grad.values()) g = g * 1.5 + 1e-3;
    };
  }
  GradcheckOutcome out;
  out.report = model::check_total_loss_gradients(toy, model::LossWeights{}, o.step, corrupt);
  out.reversed = model::reversed_blocks();
  out.passed = out.report.passed(o.tolerance);
  return out;
}

void print_gradcheck(const GradcheckOutcome& g, double tolerance, std::ostream& out) {
  auto line = [&](const BlockGradError& b) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "  %-18s max_rel_err %.3e  %s\n", b.name.c_str(), b.max_error,
                  b.max_error < tolerance ? "ok" : "FAIL");
    out << buf;
  };
  auto reversed = [&](const std::string& n) {
    return std::find(g.reversed.begin(), g.reversed.end(), n) != g.reversed.end();
  };
  out << "direct blocks\n";
  for (const auto& b : g.report.blocks)
    if (!reversed(b.name)) line(b);
  out << "blocks behind the gradient reversal layer\n";
  for (const auto& b : g.report.blocks)
    if (reversed(b.name)) line(b);
  char buf[128];
  std::snprintf(buf, sizeof buf, "max_rel_err %.3e (tolerance %.0e): %s\n", g.report.max_error,
                tolerance, g.passed ? "PASS" : "FAIL");
  out << buf;
}

}  // namespace cdcor::experiment
