#pragma once

// Config-driven experiments: prepare -> train -> evaluate -> report, with
// every artifact written under one output directory.
//
//   <out>/config.txt                      effective configuration
//   <out>/dataset/{source,target}.csv     canonical dataset
//   <out>/splits/seed-<n>/main/           split used for the configured setting
//   <out>/splits/seed-<n>/iid/            IID baseline split (OOD settings only)
//   <out>/<ablation>/seed-<n>/            checkpoint.bin, history.csv, graph.csv,
//                                         metrics.csv (+ the -iid variants)
//   <out>/metrics.csv, <out>/metrics.md   aggregated report

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cdcor/config.hpp"
#include "cdcor/data.hpp"
#include "cdcor/error.hpp"
#include "cdcor/eval.hpp"
#include "cdcor/gradcheck.hpp"
#include "cdcor/training.hpp"

namespace cdcor::experiment {

// A pipeline stage failed; what() carries the stage name and the cause.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& cause)
      : Error("stage " + stage + ": " + cause), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class DataSource { kSynth, kCsv };
enum class SplitKind { kIid, kOodDegree, kOodAttribute };
const char* to_string(SplitKind k);
SplitKind parse_split_kind(std::string_view text);

struct ExperimentConfig {
  DataSource source = DataSource::kSynth;
  std::filesystem::path source_csv;
  std::filesystem::path target_csv;
  data::CsvSchema schema;
  double positive_threshold = data::kDefaultPositiveThreshold;
  data::SynthConfig synth;

  SplitKind split = SplitKind::kIid;
  data::SplitRatios ratios;
  data::TypeMix train_mix{0.8, 0.2};
  data::TypeMix test_mix{0.2, 0.8};
  bool iid_baseline = true;  // OOD settings also train on an IID split

  training::TrainConfig train;  // train.seed is replaced by each run seed
  std::vector<std::size_t> ks{eval::kDefaultKs.begin(), eval::kDefaultKs.end()};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double sparsity = 1.0;
  std::vector<training::Ablation> ablations{training::Ablation::kFull};
  double graph_threshold = 0.3;
  std::filesystem::path out = "runs/default";

  void validate() const;
  bool has_baseline() const { return split != SplitKind::kIid && iid_baseline; }

  static ExperimentConfig from_config(const Config& config);
  static ExperimentConfig load(const std::filesystem::path& path);
  // Every key with its effective value.
  Config to_config() const;
  // FNV-1a of the canonical config without run.out and run.seeds.
  std::string hash() const;
};

std::string provenance(const ExperimentConfig& config, std::uint64_t seed);
std::string provenance(const ExperimentConfig& config);

std::filesystem::path split_dir(const ExperimentConfig& c, std::uint64_t seed, bool baseline);
std::filesystem::path run_dir(const ExperimentConfig& c, training::Ablation a, std::uint64_t seed);

data::CrossDomainDataset load_dataset(const ExperimentConfig& config);
data::SplitResult make_split(const ExperimentConfig& config, const data::CrossDomainDataset& ds,
                             std::uint64_t seed, bool baseline);

// Stages. Each seed directory holds an INCOMPLETE marker until its stage
// finishes; failures raise StageError and leave the marker in place.
void prepare(const ExperimentConfig& config, std::ostream& log);
void train_runs(const ExperimentConfig& config, std::ostream& log);
void evaluate_runs(const ExperimentConfig& config, std::ostream& log);
// Rebuilds the aggregated report from the per-seed metrics files.
std::vector<eval::NamedReport> collect_report(const ExperimentConfig& config);
void write_report(const ExperimentConfig& config, std::ostream& log);
void run_experiment(const ExperimentConfig& config, std::ostream& log);

inline constexpr const char* kIncompleteMarker = "INCOMPLETE";

struct GradcheckOptions {
  std::uint64_t seed = 1;
  double step = 1e-6;
  double tolerance = 1e-4;
  std::string corrupt_block;  // test hook: perturb this block's analytic gradient
};
struct GradcheckOutcome {
  GradCheckReport report;
  std::vector<std::string> reversed;  // blocks checked through the reversal layer
  bool passed = false;
};
GradcheckOutcome gradcheck(const GradcheckOptions& options);
void print_gradcheck(const GradcheckOutcome& outcome, double tolerance, std::ostream& out);

}  // namespace cdcor::experiment
