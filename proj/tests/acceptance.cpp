// Acceptance suite: one PASS/FAIL line per criterion, exit 3 when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cdcor/acyclicity.hpp"
#include "cdcor/causal.hpp"
#include "cdcor/eval.hpp"
#include "cdcor/experiment.hpp"
#include "cdcor/model.hpp"
#include "cdcor/training.hpp"

namespace {

using namespace cdcor;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Finite differences over every block of the full loss on the toy instance.
Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  model::ToyInstance toy = model::make_toy_instance(1);
  const auto report = model::check_total_loss_gradients(toy, model::LossWeights{});
  const double secs = seconds_since(t0);
  std::string worst;
  for (const auto& b : report.blocks)
    if (b.max_error == report.max_error) worst = b.name;
  const auto reversed = model::reversed_blocks();
  double reversed_max = 0.0;
  for (const auto& n : reversed) reversed_max = std::max(reversed_max, report.block(n).max_error);
  return {report.blocks.size() == 15 && report.max_error < 1e-4 && secs < 10.0,
          fmt("max rel err %.2e (%s) over %zu blocks, reversed blocks %.2e, %.2f s",
              report.max_error, worst.c_str(), report.blocks.size(), reversed_max, secs)};
}

// 2. Acyclicity closed forms and gradient.
Outcome acyclicity_oracle() {
  const double two_cycle = acyclicity(Matrix{{0, 1}, {1, 0}});
  const double err2 = std::abs(two_cycle - (2.0 * std::cosh(1.0) - 2.0));

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double tri_max = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    Matrix m(8, 8);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = i + 1; j < 8; ++j) (rep % 2 ? m(j, i) : m(i, j)) = u(rng);
    tri_max = std::max(tri_max, std::abs(acyclicity(m)));
  }

  std::uniform_real_distribution<double> g(-1.0, 1.0);
  double grad_max = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    Matrix a(4, 4);
    for (double& v : a.values()) v = g(rng);
    const Matrix analytic = acyclicity_gradient(a);
    for (std::size_t e = 0; e < a.size(); ++e) {
      const double h = 1e-6, saved = a[e];
      a[e] = saved + h;
      const double up = acyclicity(a);
      a[e] = saved - h;
      const double down = acyclicity(a);
      a[e] = saved;
      const double numeric = (up - down) / (2 * h);
      grad_max = std::max(grad_max, gradient_error(analytic[e], numeric));
    }
  }
  return {err2 < 1e-9 && tri_max < 1e-10 && grad_max < 1e-5,
          fmt("2-cycle err %.1e, max |h| on 50 triangular 8x8 %.1e, gradient rel err %.1e on 20 4x4",
              err2, tri_max, grad_max)};
}

// 3. Library metrics against an independent sort-and-scan.
Outcome ranking_oracle() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> coarse(0, 9);
  std::normal_distribution<double> fine(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> item(0, 4999);
  std::vector<data::CandidateList> lists;
  std::vector<std::vector<double>> all_scores;
  std::size_t mismatches = 0;
  double hr_sum[2] = {0, 0}, ndcg_sum[2] = {0, 0};
  const std::size_t ks[2] = {5, 10};
  for (std::size_t inst = 0; inst < 200; ++inst) {
    data::CandidateList l{inst, item(rng), {}};
    std::set<std::size_t> used{l.positive};
    while (l.negatives.size() < data::kCandidateNegatives) {
      const std::size_t j = item(rng);
      if (used.insert(j).second) l.negatives.push_back(j);
    }
    const auto order = l.ordered_items();
    std::vector<double> scores(order.size());
    for (double& s : scores) s = inst % 2 ? coarse(rng) : fine(rng);
    const std::size_t pos = l.positive_position();

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const std::size_t rank = static_cast<std::size_t>(std::find(idx.begin(), idx.end(), pos) - idx.begin()) + 1;
    for (int c = 0; c < 2; ++c) {
      const double hit = rank <= ks[c] ? 1.0 : 0.0;
      const double ndcg = rank <= ks[c] ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
      const auto got = eval::rank_metrics(scores, pos, ks[c]);
      mismatches += (got.hit != hit || got.ndcg != ndcg) ? 1 : 0;
      hr_sum[c] += hit;
      ndcg_sum[c] += ndcg;
    }
    lists.push_back(std::move(l));
    all_scores.push_back(std::move(scores));
  }
  // The batch evaluator over the same instances.
  const eval::ScoreFn score = [&](std::size_t user, std::size_t it) {
    const auto order = lists[user].ordered_items();
    return all_scores[user][static_cast<std::size_t>(std::find(order.begin(), order.end(), it) - order.begin())];
  };
  const auto run = eval::evaluate(score, lists, {5, 10});
  for (int c = 0; c < 2; ++c) {
    mismatches += run.hr[c] != hr_sum[c] / 200.0 ? 1 : 0;
    mismatches += run.ndcg[c] != ndcg_sum[c] / 200.0 ? 1 : 0;
  }
  std::vector<double> second(100, 0.0);
  second[0] = 1.0;
  const double ndcg2 = eval::rank_metrics(second, 1, 10).ndcg;
  const double err2 = std::abs(ndcg2 - 0.63092975357145743);
  return {mismatches == 0 && err2 < 1e-9,
          fmt("%zu mismatches on 200 instances x {HR,NDCG}@{5,10}, rank-2 NDCG %.5f", mismatches, ndcg2)};
}

double share_of(const std::vector<data::Interaction>& xs, const std::vector<bool>& first) {
  double n = 0;
  for (const auto& x : xs) n += first[x.user] ? 1 : 0;
  return xs.empty() ? 0.0 : n / static_cast<double>(xs.size());
}

bool candidates_ok(const data::CrossDomainDataset& ds, const std::vector<data::CandidateList>& lists) {
  const auto by_user = ds.items_by_user(data::Domain::kTarget);
  for (const auto& l : lists) {
    const auto items = l.ordered_items();
    if (items.size() != eval::kCandidates) return false;
    if (std::set<std::size_t>(items.begin(), items.end()).size() != items.size()) return false;
    std::size_t positives = 0;
    for (std::size_t i : items) {
      positives += std::binary_search(by_user[l.user].begin(), by_user[l.user].end(), i) ? 1 : 0;
    }
    if (positives != 1 || items[l.positive_position()] != l.positive) return false;
  }
  return true;
}

// 4. Split ratios, candidate lists and OOD mixtures.
Outcome protocol_fidelity() {
  data::SynthConfig sc;
  sc.users = 500;
  sc.target_density = 0.05;
  sc.shift = 1.0;
  sc.seed = 4;
  const auto syn = data::synth_generate(sc);
  const auto& ds = syn.dataset;
  bool lists_ok = true;
  double worst_count = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = data::split_iid(ds, {8, 1, 1}, seed);
    for (auto d : {data::Domain::kSource, data::Domain::kTarget}) {
      const auto& part = s.domain(d);
      const double n = static_cast<double>(ds.positives(d).size());
      for (auto [got, share] : {std::pair{part.train.size(), 0.8}, {part.validation.size(), 0.1},
                                {part.test.size(), 0.1}}) {
        worst_count = std::max(worst_count, std::abs(static_cast<double>(got) - share * n));
      }
    }
    lists_ok = lists_ok && candidates_ok(ds, s.test_candidates) && candidates_ok(ds, s.validation_candidates);
  }

  const auto high = data::high_degree_users(ds);
  std::vector<bool> first(ds.users);
  for (std::size_t u = 0; u < ds.users; ++u) first[u] = (*ds.user_attribute)[u] == 0;
  double worst_share = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto deg = data::split_ood_degree(ds, {0.4, 0.6}, {0.7, 0.3}, seed);
    const auto att = data::split_ood_attribute(ds, {0.8, 0.2}, {0.2, 0.8}, seed);
    for (double e : {share_of(deg.target.train, high) - 0.4, share_of(deg.target.test, high) - 0.7,
                     share_of(att.target.train, first) - 0.8, share_of(att.target.test, first) - 0.2}) {
      worst_share = std::max(worst_share, std::abs(e));
    }
    lists_ok = lists_ok && candidates_ok(ds, deg.test_candidates) && candidates_ok(ds, att.test_candidates);
  }
  const bool ok = lists_ok && worst_count <= 1.0 && worst_share < 0.02;
  return {ok, fmt("8:1:1 worst count deviation %.2f, candidate lists %s, worst OOD share deviation %.2f pts",
                  worst_count, lists_ok ? "valid" : "INVALID", worst_share * 100.0)};
}

// 5. Structure learning on the causal objective alone.
Outcome dag_recovery() {
  const auto t0 = Clock::now();
  double f1_sum = 0.0, h_max = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    data::SynthConfig sc;
    sc.k = 4;
    sc.users = 500;
    sc.noise = 0.1;
    sc.edges = 8;
    sc.seed = seed;
    const auto syn = data::synth_generate(sc);
    const std::size_t k = sc.k;
    Matrix h(2 * k, sc.users);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t u = 0; u < sc.users; ++u) {
        h(i, u) = syn.truth.attributes(i, u);
        h(k + i, u) = syn.truth.preferences(i, u);
      }
    training::StructureConfig cfg;
    cfg.gamma.pnr = 0.01;
    cfg.gamma.sparsity = 0.01;
    cfg.learning_rate = 3e-3;
    cfg.steps = 10000;
    cfg.dag_schedule.growth = 10.0;
    cfg.schedule_interval = 100;
    const Matrix a = training::fit_structure(h, cfg);
    std::vector<causal::Edge> truth;
    for (auto [i, j] : syn.truth.edges) truth.push_back({i, j});
    const auto g = causal::extract_graph(a, 0.3, &truth);
    f1_sum += g.metrics->f1;
    h_max = std::max(h_max, acyclicity(a));
    per_seed += fmt("%s%.3f", seed == 1 ? "" : " ", g.metrics->f1);
  }
  const double secs = seconds_since(t0);
  const double f1 = f1_sum / 5.0;
  return {f1 >= 0.8 && h_max < 1e-3 && secs < 120.0,
          fmt("mean F1 %.3f (%s), max acyclicity %.1e, %.1f s", f1, per_seed.c_str(), h_max, secs)};
}

// 6. Probe accuracy with and without the reversal.
Outcome adversarial_alignment() {
  int both = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    data::SynthConfig sc;
    sc.seed = seed;
    const auto syn = data::synth_generate(sc);
    const auto split = data::split_iid(syn.dataset, {}, seed);
    double acc[2];
    for (int arm = 0; arm < 2; ++arm) {
      training::TrainConfig tc;
      tc.seed = seed;
      tc.epochs = 30;
      tc.patience = 30;
      tc.weights.grl_scale = arm == 0 ? 1.0 : 0.0;
      const auto r = training::train(syn.dataset, split, tc);
      acc[arm] = training::discriminator_probe(r.params, split).accuracy;
    }
    const bool ok = acc[0] >= 0.45 && acc[0] <= 0.60 && acc[1] > 0.9;
    both += ok ? 1 : 0;
    detail += fmt("%s%.3f/%.3f", seed == 1 ? "" : " ", acc[0], acc[1]);
  }
  return {both >= 4, fmt("%d/5 seeds in range; grl 1 / grl 0 accuracy per seed: %s", both, detail.c_str())};
}

// 7. full vs no_causal under the 8:2 -> 2:8 attribute shift.
Outcome ablation_ordering() {
  int hr_wins = 0, deg_wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    data::SynthConfig sc;
    sc.seed = seed;
    sc.shift = 1.0;
    sc.noise = 1.0;
    sc.target_density = 0.05;
    const auto syn = data::synth_generate(sc);
    const auto iid = data::split_iid(syn.dataset, {}, seed);
    const auto ood = data::split_ood_attribute(syn.dataset, {0.8, 0.2}, {0.2, 0.8}, seed);
    double hr[2][2];
    for (int arm = 0; arm < 2; ++arm) {
      training::TrainConfig tc;
      tc.seed = seed;
      tc.epochs = 30;
      tc.ablation = arm == 0 ? training::Ablation::kFull : training::Ablation::kNoCausal;
      const eval::ModelEvalOptions eo{arm == 0, false};
      const auto a = training::train(syn.dataset, iid, tc);
      const auto b = training::train(syn.dataset, ood, tc);
      hr[arm][0] = eval::evaluate_model(a.params, iid.test_candidates, {10}, eo).hr[0];
      hr[arm][1] = eval::evaluate_model(b.params, ood.test_candidates, {10}, eo).hr[0];
    }
    const double d_full = *eval::degradation_pct(hr[0][0], hr[0][1]);
    const double d_abl = *eval::degradation_pct(hr[1][0], hr[1][1]);
    hr_wins += hr[0][1] >= hr[1][1] ? 1 : 0;
    deg_wins += d_full <= d_abl ? 1 : 0;
    detail += fmt("%s%.3f/%.3f", seed == 1 ? "" : " ", hr[0][1], hr[1][1]);
  }
  return {hr_wins >= 4 && deg_wins >= 3,
          fmt("OOD HR@10 full >= no_causal in %d/5, degradation <= in %d/5; full/no_causal: %s", hr_wins,
              deg_wins, detail.c_str())};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 8. Two identical experiment runs.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "cdcor_acceptance_determinism";
  fs::remove_all(root);
  Config raw = Config::parse(
      "synth.users = 200\nsynth.source_items = 150\nsynth.target_items = 150\n"
      "synth.target_density = 0.05\ntrain.epochs = 3\nrun.seeds = 1,2\n"
      "run.ablations = full,no_causal\n");
  std::ostringstream log;
  for (const char* run : {"a", "b"}) {
    raw.set("run.out", (root / run).string());
    experiment::run_experiment(experiment::ExperimentConfig::from_config(raw), log);
  }
  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    const auto name = entry.path().filename().string();
    if (name != "metrics.csv" && entry.path().extension() != ".bin") continue;
    const fs::path twin = root / "b" / fs::relative(entry.path(), root / "a");
    ++compared;
    differing += slurp(entry.path()) != slurp(twin) ? 1 : 0;
  }
  fs::remove_all(root);
  return {compared >= 9 && differing == 0,
          fmt("%zu metrics CSVs and checkpoints compared, %zu differ", compared, differing)};
}

// 9. A constant scorer only ranks by tie-breaking.
Outcome uniform_scorer() {
  data::SynthConfig sc;
  sc.seed = 9;
  const auto syn = data::synth_generate(sc);
  const auto lists = data::build_eval_candidates(syn.dataset, data::Domain::kTarget,
                                                 syn.dataset.target_positives, 9);
  const auto run = eval::evaluate([](std::size_t, std::size_t) { return 0.0; }, lists, {10});
  return {run.positives >= 1000 && std::abs(run.hr[0] - 0.1) <= 0.03,
          fmt("HR@10 %.4f over %zu positives", run.hr[0], run.positives)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
  };
  const Criterion criteria[] = {
      {"gradient correctness", gradient_correctness}, {"acyclicity oracle", acyclicity_oracle},
      {"ranking-metric oracle", ranking_oracle},      {"protocol fidelity", protocol_fidelity},
      {"DAG recovery", dag_recovery},                 {"adversarial alignment", adversarial_alignment},
      {"ablation ordering", ablation_ordering},       {"determinism", determinism},
      {"uniform-scorer sanity", uniform_scorer},
  };
  int failed = 0;
  int index = 0;
  for (const auto& c : criteria) {
    ++index;
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %d %s %s: %s\n", index, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 3;
}
