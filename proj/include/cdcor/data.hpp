#pragma once

// Cross-domain implicit-feedback data: ingestion, IID and OOD splits,
// negative sampling, leave-one-out candidate lists and the synthetic
// generator with a known attribute -> preference graph.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdcor/matrix.hpp"

namespace cdcor::data {

enum class Domain : std::uint8_t { kSource = 0, kTarget = 1 };

const char* to_string(Domain d);
Domain parse_domain(std::string_view text);

struct Interaction {
  std::size_t user = 0;
  std::size_t item = 0;
  auto operator<=>(const Interaction&) const = default;
};

struct CrossDomainDataset {
  std::size_t users = 0;
  std::size_t source_items = 0;
  std::size_t target_items = 0;
  // Sorted by (user, item), no duplicates.
  std::vector<Interaction> source_positives;
  std::vector<Interaction> target_positives;
  // Per-user attribute label index into attribute_labels, when present.
  std::optional<std::vector<std::size_t>> user_attribute;
  std::vector<std::string> attribute_labels;

  // Original identifiers by dense index; used for canonical output.
  std::vector<std::string> user_keys;
  std::vector<std::string> source_item_keys;
  std::vector<std::string> target_item_keys;
  // Original ratings aligned with the positive lists, when the input had them.
  std::optional<std::vector<double>> source_ratings;
  std::optional<std::vector<double>> target_ratings;

  std::size_t item_count(Domain d) const { return d == Domain::kSource ? source_items : target_items; }
  const std::vector<Interaction>& positives(Domain d) const {
    return d == Domain::kSource ? source_positives : target_positives;
  }
  // Target-domain positive count per user.
  std::vector<std::size_t> target_degree() const;
  // Per-user sorted item lists for one domain.
  std::vector<std::vector<std::size_t>> items_by_user(Domain d) const;

  // Throws DataError when an index is out of range or positives are not
  // sorted and unique.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Ingestion

struct CsvSchema {
  std::string user = "user";
  std::string item = "item";
  std::string rating = "rating";        // optional column
  std::string attribute = "attribute";  // optional column
  char delimiter = ',';
};

struct IngestReport {
  std::size_t source_records = 0;
  std::size_t target_records = 0;
  std::size_t dropped_users = 0;  // users outside the cross-domain intersection
  std::size_t source_positives = 0;
  std::size_t target_positives = 0;
};

struct IngestResult {
  CrossDomainDataset dataset;
  IngestReport report;
};

inline constexpr double kDefaultPositiveThreshold = 4.0;

// Reads one delimiter-separated file per domain. Records with rating >=
// threshold are positives (all records when there is no rating column).
// Only users with positives in both domains are kept. Keys get dense indices
// in natural key order (numeric when both keys are integers).
IngestResult ingest_csv(const std::filesystem::path& source_path,
                        const std::filesystem::path& target_path, const CsvSchema& schema = {},
                        double positive_threshold = kDefaultPositiveThreshold);

// Writes the dataset in the canonical input format (user,item[,rating][,attribute]).
// Re-ingesting these files with the same threshold reproduces the indices.
void write_canonical(const CrossDomainDataset& dataset, const std::filesystem::path& source_path,
                     const std::filesystem::path& target_path);

// ---------------------------------------------------------------------------
// Splits

inline constexpr std::size_t kCandidateNegatives = 99;

// A test positive with 99 negatives the user never interacted with.
struct CandidateList {
  std::size_t user = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;

  // All 100 items in tie-break order (see tie_break_key). The positive's
  // position in this list decides ties in ranking.
  std::vector<std::size_t> ordered_items() const;
  std::size_t positive_position() const;
};

// Fixed pseudo-random key per (user, item); lower keys win score ties.
std::uint64_t tie_break_key(std::size_t user, std::size_t item);

struct DomainSplit {
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
};

// Realized user-type shares of an OOD split (share of the first type).
struct MixtureReport {
  double requested_train = 0.0;
  double requested_test = 0.0;
  double realized_train = 0.0;
  double realized_test = 0.0;
};

struct SplitResult {
  DomainSplit source;
  DomainSplit target;
  std::vector<CandidateList> test_candidates;
  std::vector<CandidateList> validation_candidates;
  // Users whose single target positive had to stay in training.
  std::vector<std::size_t> train_only_users;
  std::optional<MixtureReport> mixture;

  DomainSplit& domain(Domain d) { return d == Domain::kSource ? source : target; }
  const DomainSplit& domain(Domain d) const { return d == Domain::kSource ? source : target; }
};

struct SplitRatios {
  double train = 8.0;
  double validation = 1.0;
  double test = 1.0;
};

// Shares of (first type, second type); must sum to 1.
using TypeMix = std::pair<double, double>;

struct SplitOptions {
  // Build 99-negative candidate lists for validation and test positives.
  bool build_candidates = true;
};

SplitResult split_iid(const CrossDomainDataset& dataset, SplitRatios ratios, std::uint64_t seed,
                      SplitOptions options = {});

// Users typed high (degree > median target degree) or low (ties low); the
// first share of each mix refers to high-degree users.
SplitResult split_ood_degree(const CrossDomainDataset& dataset, TypeMix train_mix,
                             TypeMix test_mix, std::uint64_t seed, SplitRatios ratios = {},
                             SplitOptions options = {});

// Users typed by a binary attribute; the first share refers to
// attribute_labels[0].
SplitResult split_ood_attribute(const CrossDomainDataset& dataset, TypeMix train_mix,
                                TypeMix test_mix, std::uint64_t seed, SplitRatios ratios = {},
                                SplitOptions options = {});

// High (true) / low degree typing used by split_ood_degree.
std::vector<bool> high_degree_users(const CrossDomainDataset& dataset);

// Candidate lists for the given positives: 99 distinct uniform negatives
// excluding every positive the user has in the domain.
std::vector<CandidateList> build_eval_candidates(const CrossDomainDataset& dataset, Domain domain,
                                                 const std::vector<Interaction>& positives,
                                                 std::uint64_t seed);

// Keeps round(fraction * n) of the target training positives.
void subsample_target_train(SplitResult& split, double fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training examples

struct LabeledExample {
  std::size_t user = 0;
  std::size_t item = 0;
  double label = 0.0;
};

struct TrainingExamples {
  std::vector<LabeledExample> examples;
  // Users positive on every item in the domain; they get no negatives.
  std::vector<std::size_t> users_without_negatives;
};

// Each training positive yields (u, i, 1) followed by n_neg (u, j, 0) with j
// uniform over items the user has no positive for in the domain.
TrainingExamples sample_train_negatives(const CrossDomainDataset& dataset, const SplitResult& split,
                                        Domain domain, std::size_t n_neg_per_positive,
                                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Serialization. Every file starts with a "# <provenance>" comment line.

void write_split(const SplitResult& split, const std::filesystem::path& dir,
                 const std::string& provenance);
SplitResult read_split(const std::filesystem::path& dir);

void write_candidates(const std::vector<CandidateList>& lists, const std::filesystem::path& path,
                      const std::string& provenance);
std::vector<CandidateList> read_candidates(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic data with a known causal graph

struct SynthConfig {
  std::size_t users = 500;
  std::size_t source_items = 400;
  std::size_t target_items = 300;
  std::size_t k = 4;
  double source_density = 0.05;
  double target_density = 0.01;
  // Number of nonzero attribute -> preference weights (ignored when
  // `weights` is set). Every preference gets one parent before the rest are
  // placed at random. Magnitudes uniform in [0.5, 1.5] with random sign.
  std::size_t edges = 8;
  std::optional<Matrix> weights;  // explicit k x k map B
  double noise = 0.1;
  // Separation between the two user groups' attribute means along every
  // attribute dimension (group 0 at -shift/2, group 1 at +shift/2).
  double shift = 0.0;
  // Correlation of the source-domain preference map with B.
  double source_correlation = 0.8;
  std::uint64_t seed = 1;
};

struct GroundTruth {
  Matrix weights;             // B, k x k; B(i, j) = effect of attribute i on preference j
  Matrix source_weights;      // map used for source-domain preferences
  Matrix attributes;          // k x m
  Matrix preferences;         // k x m, target-domain preferences B^T a + noise
  Matrix source_preferences;  // k x m
  std::vector<std::size_t> group;
  // Directed edges over the 2k-node graph: attribute i -> preference node k + j.
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

struct SyntheticData {
  CrossDomainDataset dataset;
  GroundTruth truth;
};

SyntheticData synth_generate(const SynthConfig& config);

}  // namespace cdcor::data
