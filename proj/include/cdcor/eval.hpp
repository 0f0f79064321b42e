#pragma once

// Leave-one-out ranking metrics over 100-item candidate lists.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdcor/data.hpp"
#include "cdcor/tape.hpp"

namespace cdcor::eval {

inline constexpr std::size_t kCandidates = data::kCandidateNegatives + 1;
inline const std::vector<std::size_t> kDefaultKs{5, 10};

struct RankResult {
  double hit = 0.0;
  double ndcg = 0.0;
};

// 1 + candidates scoring strictly higher + tied candidates listed before the
// positive. `scores` follows CandidateList::ordered_items().
std::size_t rank_of(std::span<const double> scores, std::size_t positive_position);
RankResult rank_metrics(std::span<const double> scores, std::size_t positive_position,
                        std::size_t k);

// Mean hit rate and NDCG at each cutoff for one run.
struct RunMetrics {
  std::vector<std::size_t> ks;
  std::vector<double> hr;
  std::vector<double> ndcg;
  std::size_t positives = 0;

  double value(const std::string& metric, std::size_t k) const;
};

using ScoreFn = std::function<double(std::size_t user, std::size_t item)>;

// Scores lists concurrently; `score` must be safe to call from several
// threads. Per-list results are summed in list order.
RunMetrics evaluate(const ScoreFn& score, const std::vector<data::CandidateList>& lists,
                    const std::vector<std::size_t>& ks = kDefaultKs);
// Single-threaded reference with identical results.
RunMetrics evaluate_serial(const ScoreFn& score, const std::vector<data::CandidateList>& lists,
                           const std::vector<std::size_t>& ks = kDefaultKs);

struct ModelEvalOptions {
  bool use_causal = true;
  bool strict_mask = false;
};
// Target-domain test metrics of a trained parameter set.
RunMetrics evaluate_model(const ParameterSet& params, const std::vector<data::CandidateList>& lists,
                          const std::vector<std::size_t>& ks = kDefaultKs,
                          const ModelEvalOptions& options = {});

struct MetricSummary {
  std::string metric;  // "HR" or "NDCG"
  std::size_t k = 0;
  double mean = 0.0;
  double std = 0.0;
  std::optional<double> degradation_pct;
};

struct MetricsReport {
  std::size_t runs = 0;
  std::vector<MetricSummary> metrics;

  const MetricSummary& at(const std::string& metric, std::size_t k) const;
};

// Per-metric mean and sample standard deviation; exactly invariant to run order.
MetricsReport aggregate_runs(const std::vector<RunMetrics>& runs);

// (IID - OOD) / IID * 100 per metric, positive meaning a drop; left empty
// when the IID mean is 0.
std::optional<double> degradation_pct(double iid, double ood);
MetricsReport degradation_report(const MetricsReport& iid, const MetricsReport& ood);

using NamedReport = std::pair<std::string, MetricsReport>;

// `setting,metric,k,mean,std,degradation_pct` after a provenance comment.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<NamedReport>& reports,
                       const std::string& provenance);
std::string metrics_markdown(const std::vector<NamedReport>& reports);
void write_metrics_markdown(const std::filesystem::path& path,
                            const std::vector<NamedReport>& reports, const std::string& provenance);

// Per-run metrics as `metric,k,value` with full precision, for regenerating reports.
void write_run_metrics(const std::filesystem::path& path, const RunMetrics& run,
                       const std::string& provenance);
RunMetrics read_run_metrics(const std::filesystem::path& path);

}  // namespace cdcor::eval
