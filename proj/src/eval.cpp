#include "cdcor/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cdcor/error.hpp"
#include "cdcor/model.hpp"

namespace cdcor::eval {

namespace {

void check_ks(const std::vector<std::size_t>& ks) {
  if (ks.empty()) throw Error("evaluation needs at least one cutoff");
  for (std::size_t k : ks) {
    if (k == 0 || k > kCandidates) throw Error("cutoff k=" + std::to_string(k) + " out of range");
  }
}

// Hits and NDCG per cutoff for one candidate list, flattened as [hr..., ndcg...].
void score_list(const ScoreFn& score, const data::CandidateList& list,
                const std::vector<std::size_t>& ks, double* out) {
  const auto items = list.ordered_items();
  if (items.size() != kCandidates) {
    throw DataError("candidate list for user " + std::to_string(list.user) + " has " +
                    std::to_string(items.size()) + " items");
  }
  std::vector<double> scores(items.size());
  std::size_t position = items.size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    scores[i] = score(list.user, items[i]);
    if (items[i] == list.positive) position = i;
  }
  const std::size_t rank = rank_of(scores, position);
  for (std::size_t j = 0; j < ks.size(); ++j) {
    const bool hit = rank <= ks[j];
    out[j] = hit ? 1.0 : 0.0;
    out[ks.size() + j] = hit ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
  }
}

RunMetrics reduce(const std::vector<double>& per_list, std::size_t lists,
                  const std::vector<std::size_t>& ks) {
  RunMetrics m;
  m.ks = ks;
  m.positives = lists;
  m.hr.assign(ks.size(), 0.0);
  m.ndcg.assign(ks.size(), 0.0);
  const std::size_t stride = 2 * ks.size();
  for (std::size_t l = 0; l < lists; ++l) {
    for (std::size_t j = 0; j < ks.size(); ++j) {
      m.hr[j] += per_list[l * stride + j];
      m.ndcg[j] += per_list[l * stride + ks.size() + j];
    }
  }
  for (std::size_t j = 0; j < ks.size(); ++j) {
    m.hr[j] /= static_cast<double>(lists);
    m.ndcg[j] /= static_cast<double>(lists);
  }
  return m;
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string format_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

std::size_t rank_of(std::span<const double> scores, std::size_t positive_position) {
  if (scores.size() != kCandidates) {
    throw Error("rank_metrics: expected " + std::to_string(kCandidates) + " scores, got " +
                std::to_string(scores.size()));
  }
  if (positive_position >= scores.size()) throw Error("rank_metrics: positive position out of range");
  const double p = scores[positive_position];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > p || (scores[i] == p && i < positive_position)) ++rank;
  }
  return rank;
}

RankResult rank_metrics(std::span<const double> scores, std::size_t positive_position,
                        std::size_t k) {
  if (k == 0 || k > kCandidates) throw Error("rank_metrics: cutoff out of range");
  const std::size_t rank = rank_of(scores, positive_position);
  if (rank > k) return {0.0, 0.0};
  return {1.0, 1.0 / std::log2(static_cast<double>(rank) + 1.0)};
}

double RunMetrics::value(const std::string& metric, std::size_t k) const {
  for (std::size_t j = 0; j < ks.size(); ++j) {
    if (ks[j] != k) continue;
    if (metric == "HR") return hr[j];
    if (metric == "NDCG") return ndcg[j];
  }
  throw Error("run metrics have no " + metric + "@" + std::to_string(k));
}

RunMetrics evaluate(const ScoreFn& score, const std::vector<data::CandidateList>& lists,
                    const std::vector<std::size_t>& ks) {
  check_ks(ks);
  if (lists.empty()) throw DataError("evaluation needs candidate lists");
  const std::size_t stride = 2 * ks.size();
  std::vector<double> per_list(lists.size() * stride);
  const auto n = static_cast<std::ptrdiff_t>(lists.size());
  std::string failure;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t l = 0; l < n; ++l) {
    try {
      score_list(score, lists[static_cast<std::size_t>(l)], ks, per_list.data() + l * stride);
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw DataError(failure);
  return reduce(per_list, lists.size(), ks);
}

RunMetrics evaluate_serial(const ScoreFn& score, const std::vector<data::CandidateList>& lists,
                           const std::vector<std::size_t>& ks) {
  check_ks(ks);
  if (lists.empty()) throw DataError("evaluation needs candidate lists");
  const std::size_t stride = 2 * ks.size();
  std::vector<double> per_list(lists.size() * stride);
  for (std::size_t l = 0; l < lists.size(); ++l) {
    score_list(score, lists[l], ks, per_list.data() + l * stride);
  }
  return reduce(per_list, lists.size(), ks);
}

RunMetrics evaluate_model(const ParameterSet& params, const std::vector<data::CandidateList>& lists,
                          const std::vector<std::size_t>& ks, const ModelEvalOptions& options) {
  const model::Scorer scorer(params, data::Domain::kTarget, options.use_causal, options.strict_mask);
  return evaluate([&](std::size_t u, std::size_t i) { return scorer.score(u, i); }, lists, ks);
}

const MetricSummary& MetricsReport::at(const std::string& metric, std::size_t k) const {
  for (const auto& m : metrics)
    if (m.metric == metric && m.k == k) return m;
  throw Error("report has no " + metric + "@" + std::to_string(k));
}

MetricsReport aggregate_runs(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) throw Error("aggregate_runs: no runs");
  const auto& ks = runs.front().ks;
  for (const auto& r : runs) {
    if (r.ks != ks) throw Error("aggregate_runs: runs use different cutoffs");
  }
  MetricsReport report;
  report.runs = runs.size();
  for (const std::string metric : {"HR", "NDCG"}) {
    for (std::size_t k : ks) {
      std::vector<double> values;
      for (const auto& r : runs) values.push_back(r.value(metric, k));
      std::sort(values.begin(), values.end());
      double sum = 0.0;
      for (double v : values) sum += v;
      const double mean =
          values.front() == values.back() ? values.front() : sum / static_cast<double>(values.size());
      double sq = 0.0;
      for (double v : values) sq += (v - mean) * (v - mean);
      const double sd = values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1)) : 0.0;
      report.metrics.push_back({metric, k, mean, sd, std::nullopt});
    }
  }
  return report;
}

std::optional<double> degradation_pct(double iid, double ood) {
  if (iid == 0.0) return std::nullopt;
  return (iid - ood) / iid * 100.0;
}

MetricsReport degradation_report(const MetricsReport& iid, const MetricsReport& ood) {
  MetricsReport out = ood;
  if (iid.metrics.size() != ood.metrics.size()) {
    throw Error("degradation_report: metric sets differ");
  }
  for (auto& m : out.metrics) m.degradation_pct = degradation_pct(iid.at(m.metric, m.k).mean, m.mean);
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<NamedReport>& reports,
                       const std::string& provenance) {
  auto out = open_out(path);
  out << "# " << provenance << '\n';
  out << "setting,metric,k,mean,std,degradation_pct\n";
  for (const auto& [setting, report] : reports) {
    for (const auto& m : report.metrics) {
      out << setting << ',' << m.metric << ',' << m.k << ',' << format_fixed(m.mean, 6) << ','
          << format_fixed(m.std, 6) << ','
          << (m.degradation_pct ? format_fixed(*m.degradation_pct, 2) : std::string("NA")) << '\n';
    }
  }
}

std::string metrics_markdown(const std::vector<NamedReport>& reports) {
  std::ostringstream md;
  if (reports.empty()) return "";
  const auto& first = reports.front().second.metrics;
  md << "| Setting |";
  for (const auto& m : first) md << ' ' << m.metric << '@' << m.k << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < first.size(); ++i) md << "---|";
  md << '\n';
  for (const auto& [setting, report] : reports) {
    md << "| " << setting << " |";
    for (const auto& m : report.metrics) {
      md << ' ' << format_fixed(m.mean, 4) << " ± " << format_fixed(m.std, 4);
      if (m.degradation_pct) md << " (" << format_fixed(*m.degradation_pct, 2) << "%)";
      md << " |";
    }
    md << '\n';
  }
  md << "\nDegradation in parentheses is (IID - OOD) / IID x 100; positive values are drops.\n";
  return md.str();
}

void write_metrics_markdown(const std::filesystem::path& path,
                            const std::vector<NamedReport>& reports, const std::string& provenance) {
  auto out = open_out(path);
  out << "<!-- " << provenance << " -->\n\n" << metrics_markdown(reports);
}

void write_run_metrics(const std::filesystem::path& path, const RunMetrics& run,
                       const std::string& provenance) {
  auto out = open_out(path);
  out << "# " << provenance << '\n';
  out << "# positives=" << run.positives << '\n';
  out << "metric,k,value\n";
  for (std::size_t j = 0; j < run.ks.size(); ++j) out << "HR," << run.ks[j] << ',' << format_exact(run.hr[j]) << '\n';
  for (std::size_t j = 0; j < run.ks.size(); ++j) out << "NDCG," << run.ks[j] << ',' << format_exact(run.ndcg[j]) << '\n';
}

RunMetrics read_run_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  RunMetrics run;
  std::vector<std::pair<std::size_t, double>> hr, ndcg;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.rfind("# positives=", 0) == 0) {
      run.positives = std::stoul(line.substr(12));
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "metric,k,value") throw DataError(path.string() + ": unexpected header");
      header = true;
      continue;
    }
    std::istringstream row(line);
    std::string metric, k, value;
    if (!std::getline(row, metric, ',') || !std::getline(row, k, ',') || !std::getline(row, value)) {
      throw DataError(path.string() + ": malformed line '" + line + "'");
    }
    auto& dst = metric == "HR" ? hr : metric == "NDCG" ? ndcg : throw DataError(path.string() + ": unknown metric " + metric);
    dst.emplace_back(std::stoul(k), std::stod(value));
  }
  if (hr.empty() || hr.size() != ndcg.size()) throw DataError(path.string() + ": incomplete metrics");
  for (std::size_t j = 0; j < hr.size(); ++j) {
    if (hr[j].first != ndcg[j].first) throw DataError(path.string() + ": cutoffs differ");
    run.ks.push_back(hr[j].first);
    run.hr.push_back(hr[j].second);
    run.ndcg.push_back(ndcg[j].second);
  }
  return run;
}

}  // namespace cdcor::eval
