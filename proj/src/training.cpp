#include "cdcor/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "cdcor/acyclicity.hpp"
#include "cdcor/error.hpp"
#include "cdcor/eval.hpp"
#include "cdcor/rng.hpp"

namespace cdcor::training {

using data::Domain;

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoCausal: return "no_causal";
    case Ablation::kNoSource: return "no_source";
  }
  return "?";
}

Ablation parse_ablation(std::string_view text) {
  if (text == "full") return Ablation::kFull;
  if (text == "no_causal") return Ablation::kNoCausal;
  if (text == "no_source") return Ablation::kNoSource;
  throw ConfigError("unknown ablation '" + std::string(text) + "' (full, no_causal, no_source)");
}

const char* to_string(OptimizerKind o) { return o == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "adam") return OptimizerKind::kAdam;
  if (text == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + std::string(text) + "' (adam, sgd)");
}

void TrainConfig::validate() const {
  if (k == 0) throw ConfigError("train.k must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (patience < 1) throw ConfigError("train.patience must be at least 1");
  if (!(init_range > 0.0)) throw ConfigError("train.init_range must be positive");
  if (weights.grl_scale < 0.0) throw ConfigError("train.grl_scale must be non-negative");
  for (double w : {weights.source, weights.domain, weights.causal, weights.reg, weights.gamma.dag,
                   weights.gamma.a2p, weights.gamma.pnr, weights.gamma.sparsity}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
  }
  if (dag_schedule.growth < 1.0) throw ConfigError("train.dag_growth must be at least 1");
}

model::LossWeights TrainConfig::effective_weights() const {
  model::LossWeights w = weights;
  if (ablation == Ablation::kNoCausal) {
    w.use_causal = false;
    w.causal = 0.0;
  }
  if (ablation == Ablation::kNoSource) w.use_source = false;
  return w;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {}

void Optimizer::step(ParameterSet& params) {
  if (kind_ == OptimizerKind::kSgd) {
    for (Parameter& p : params)
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr_ * p.grad[i];
    return;
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (m_.empty()) {
    for (const Parameter& p : params) {
      m_.emplace_back(p.value.rows(), p.value.cols());
      v_.emplace_back(p.value.rows(), p.value.cols());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t j = 0; j < params.size(); ++j) {
    Parameter& p = params[j];
    Matrix& m = m_[j];
    Matrix& v = v_[j];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
    }
  }
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch, Domain d) {
  return splitmix64(seed ^ (static_cast<std::uint64_t>(epoch) << 20) ^
                    (static_cast<std::uint64_t>(d) + 1));
}

void append(model::Batch& b, const data::LabeledExample& e) {
  b.users.push_back(e.user);
  b.items.push_back(e.item);
  b.labels.push_back(e.label);
}

}  // namespace

TrainResult train(const data::CrossDomainDataset& ds, const data::SplitResult& split,
                  const TrainConfig& config) {
  config.validate();
  model::LossWeights weights = config.effective_weights();
  if (split.target.train.empty()) throw Error("train: split has no target training positives");
  if (weights.use_source && split.source.train.empty()) {
    throw Error("train: split has no source training positives");
  }

  const model::ModelShape shape{config.k, ds.users, ds.source_items, ds.target_items};
  TrainResult result{model::init_params(shape, config.seed, config.init_range), {}};
  ParameterSet& params = result.params;
  ParameterSet best = params;
  double best_hr = -1.0;
  std::size_t since_best = 0;
  Optimizer optimizer(config.optimizer, config.learning_rate);
  auto batch_rng = make_rng(config.seed, streams::kBatches);
  const eval::ModelEvalOptions eval_options{weights.use_causal, weights.strict_mask};

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::size_t draw = config.resample_negatives ? epoch : 1;
    auto target = data::sample_train_negatives(ds, split, Domain::kTarget, config.negatives,
                                               epoch_seed(config.seed, draw, Domain::kTarget));
    std::vector<data::LabeledExample> source;
    if (weights.use_source) {
      source = data::sample_train_negatives(ds, split, Domain::kSource, config.negatives,
                                            epoch_seed(config.seed, draw, Domain::kSource))
                   .examples;
    }
    std::vector<data::LabeledExample>& examples = target.examples;
    std::shuffle(examples.begin(), examples.end(), batch_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    double correct = 0.0, judged = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < examples.size(); begin += config.batch_size) {
      const std::size_t end = std::min(examples.size(), begin + config.batch_size);
      model::Batch tb, sb;
      for (std::size_t i = begin; i < end; ++i) append(tb, examples[i]);
      if (weights.use_source) {
        std::uniform_int_distribution<std::size_t> pick(0, source.size() - 1);
        for (std::size_t i = begin; i < end; ++i) append(sb, source[pick(batch_rng)]);
      }
      params.zero_grad();
      Tape tape(&params);
      try {
        const model::TotalLoss loss = model::total_loss(tape, tb, sb, weights);
        tape.backward(loss.total);
        const auto& br = loss.breakdown;
        rec.target += br.target;
        rec.source += br.source;
        rec.domain += br.domain;
        rec.causal += br.causal;
        rec.reg += br.reg;
        rec.total += br.total;
        correct += br.discriminator_correct;
        judged += br.discriminator_examples;
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("epoch " + std::to_string(epoch) + " step " + std::to_string(steps + 1) +
                             ": " + e.what());
      }
      optimizer.step(params);
      ++steps;
    }
    const double n = static_cast<double>(std::max<std::size_t>(steps, 1));
    rec.target /= n;
    rec.source /= n;
    rec.domain /= n;
    rec.causal /= n;
    rec.reg /= n;
    rec.total /= n;
    rec.disc_acc = judged > 0 ? correct / judged : 0.0;
    rec.acyclicity = acyclicity(params.at(model::names::kAdjacency).value);
    if (!split.validation_candidates.empty()) {
      const auto val = eval::evaluate_model(params, split.validation_candidates, {10}, eval_options);
      rec.val_hr10 = val.hr[0];
      rec.val_ndcg10 = val.ndcg[0];
    }
    result.history.epochs.push_back(rec);

    const bool improved = split.validation_candidates.empty() || rec.val_hr10 > best_hr;
    if (improved) {
      best_hr = rec.val_hr10;
      best = params;
      result.history.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.history.stopped_early = true;
      break;
    }

    if (config.dag_schedule.enabled() && weights.use_causal &&
        rec.acyclicity > config.dag_schedule.tolerance) {
      weights.gamma.dag =
          std::min(config.dag_schedule.max_weight, weights.gamma.dag * config.dag_schedule.growth);
    }
  }
  result.params = std::move(best);
  return result;
}

ProbeResult discriminator_probe(const ParameterSet& params, const data::SplitResult& split) {
  auto users_of = [](const std::vector<data::Interaction>& xs) {
    std::set<std::size_t> s;
    for (const auto& x : xs) s.insert(x.user);
    return std::vector<std::size_t>(s.begin(), s.end());
  };
  std::vector<std::size_t> src = users_of(split.source.test);
  std::vector<std::size_t> tgt = users_of(split.target.test);
  const std::size_t n = std::min(src.size(), tgt.size());
  if (n == 0) throw Error("discriminator_probe: both domains need held-out users");
  src.resize(n);
  tgt.resize(n);

  ProbeResult r;
  for (Domain d : {Domain::kSource, Domain::kTarget}) {
    const auto& users = d == Domain::kSource ? src : tgt;
    const Matrix out =
        model::discriminator_output(params, model::shared_preferences(params, d, users));
    for (std::size_t c = 0; c < out.cols(); ++c) {
      const bool tie = out(0, c) == out(1, c);
      const Domain said = out(1, c) > out(0, c) ? Domain::kTarget : Domain::kSource;
      r.accuracy += said == d ? 1.0 : 0.0;
      r.raw += !tie && said == d ? 1.0 : 0.0;
    }
  }
  r.examples = 2 * n;
  r.accuracy /= static_cast<double>(r.examples);
  r.raw /= static_cast<double>(r.examples);
  return r;
}

void write_history(const std::filesystem::path& path, const TrainHistory& history,
                   const std::string& provenance) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "# " << provenance << '\n';
  out << "epoch,L_t,L_s,L_c,L_cau,reg,acyclicity,disc_acc,val_hr10,val_ndcg10\n";
  char buf[512];
  for (const auto& e : history.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  e.epoch, e.target, e.source, e.domain, e.causal, e.reg, e.acyclicity, e.disc_acc,
                  e.val_hr10, e.val_ndcg10);
    out << buf;
  }
}

Matrix fit_structure(const Matrix& samples, const StructureConfig& config) {
  if (samples.rows() % 2 != 0 || samples.cols() == 0) {
    throw ShapeError("fit_structure: samples must be 2k x N, got " + samples.shape_string());
  }
  ParameterSet params;
  params.add("A", Matrix(samples.rows(), samples.rows()));
  causal::CausalWeights gamma = config.gamma;
  Optimizer optimizer(OptimizerKind::kAdam, config.learning_rate);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    params.zero_grad();
    Tape t(&params);
    Var h = t.constant(samples);
    t.backward(causal::causal_loss(t, t.parameter("A"), std::span<const Var>(&h, 1), gamma).total);
    optimizer.step(params);
    if (config.dag_schedule.enabled() && step % config.schedule_interval == 0 &&
        acyclicity(params.at("A").value) > config.dag_schedule.tolerance) {
      gamma.dag = std::min(config.dag_schedule.max_weight, gamma.dag * config.dag_schedule.growth);
    }
  }
  return params.at("A").value;
}

}  // namespace cdcor::training
