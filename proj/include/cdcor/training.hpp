#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cdcor/causal.hpp"
#include "cdcor/data.hpp"
#include "cdcor/model.hpp"
#include "cdcor/tape.hpp"

namespace cdcor::training {

enum class Ablation { kFull, kNoCausal, kNoSource };
const char* to_string(Ablation a);
Ablation parse_ablation(std::string_view text);

enum class OptimizerKind { kAdam, kSgd };
const char* to_string(OptimizerKind o);
OptimizerKind parse_optimizer(std::string_view text);

// Multiplies gamma_1 by `growth` after each epoch whose acyclicity exceeds
// `tolerance`, up to `max_weight`. Off when growth is 1.
struct DagSchedule {
  double growth = 1.0;
  double tolerance = 1e-3;
  double max_weight = 1e6;

  bool enabled() const { return growth > 1.0; }
};

struct TrainConfig {
  std::size_t k = 16;
  double learning_rate = 0.01;
  model::LossWeights weights;
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  std::size_t negatives = 4;
  // Redraw training negatives every epoch; when false the epoch-1 draw is reused.
  bool resample_negatives = true;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 1;
  std::size_t patience = 10;
  Ablation ablation = Ablation::kFull;
  double init_range = 0.1;
  DagSchedule dag_schedule;

  void validate() const;
  // Loss weights with the ablation applied.
  model::LossWeights effective_weights() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double target = 0.0;
  double source = 0.0;
  double domain = 0.0;
  double causal = 0.0;
  double reg = 0.0;
  double total = 0.0;
  double acyclicity = 0.0;
  double disc_acc = 0.0;
  double val_hr10 = 0.0;
  double val_ndcg10 = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

struct TrainResult {
  ParameterSet params;  // best-validation snapshot
  TrainHistory history;

  const Matrix& adjacency() const { return params.at(model::names::kAdjacency).value; }
};

// Per-parameter optimizer state over a ParameterSet.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);
  void step(ParameterSet& params);

 private:
  OptimizerKind kind_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

TrainResult train(const data::CrossDomainDataset& dataset, const data::SplitResult& split,
                  const TrainConfig& config);

struct ProbeResult {
  double accuracy = 0.0;  // ties assigned to the source unit
  double raw = 0.0;       // ties counted as errors
  std::size_t examples = 0;
};

// Domain classification of held-out u^c vectors: test users of each domain,
// truncated to the smaller count so the probe set is balanced.
ProbeResult discriminator_probe(const ParameterSet& params, const data::SplitResult& split);

// `epoch,L_t,L_s,L_c,L_cau,reg,acyclicity,disc_acc,val_hr10,val_ndcg10`.
void write_history(const std::filesystem::path& path, const TrainHistory& history,
                   const std::string& provenance);

// Fits the adjacency alone on fixed 2k x N causal samples, starting from zero.
struct StructureConfig {
  causal::CausalWeights gamma;
  double learning_rate = 1e-2;
  std::size_t steps = 3000;
  DagSchedule dag_schedule;
  std::size_t schedule_interval = 100;  // steps between schedule checks
};
Matrix fit_structure(const Matrix& samples, const StructureConfig& config);

}  // namespace cdcor::training
