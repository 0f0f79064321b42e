#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdcor/data.hpp"
#include "cdcor/error.hpp"
#include "cdcor/kernels.hpp"
#include "cdcor/rng.hpp"

namespace cdcor::data {

namespace {

Matrix gaussian(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

double signed_weight(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.5, 1.5);
  std::bernoulli_distribution neg(0.5);
  const double w = mag(rng);
  return neg(rng) ? -w : w;
}

// Each user keeps their highest-affinity items (preferences^T items). The
// per-user count is proportional to the preference norm and averages
// density * n, so positive rates are monotone in the norm.
std::vector<Interaction> top_affinities(const Matrix& preferences, const Matrix& items,
                                        double density, const char* domain) {
  const std::size_t k = preferences.rows();
  const std::size_t m = preferences.cols();
  const std::size_t n = items.cols();
  if (!(density > 0.0 && density < 1.0)) {
    throw DataError(std::string(domain) + " density must lie in (0, 1)");
  }
  std::vector<double> norm(m, 0.0);
  double mean_norm = 0.0;
  for (std::size_t u = 0; u < m; ++u) {
    for (std::size_t i = 0; i < k; ++i) norm[u] += preferences(i, u) * preferences(i, u);
    norm[u] = std::sqrt(norm[u]);
    mean_norm += norm[u] / static_cast<double>(m);
  }
  const double per_user = density * static_cast<double>(n);
  if (per_user < 0.5 || mean_norm <= 0.0) {
    throw DataError(std::string(domain) + " density yields an infeasible positive count");
  }
  const Matrix scores = kernels::matmul_tn(preferences, items);  // m x n
  std::vector<Interaction> out;
  std::vector<std::size_t> order(n);
  for (std::size_t u = 0; u < m; ++u) {
    const double want = std::round(per_user * norm[u] / mean_norm);
    const auto count = static_cast<std::size_t>(std::clamp(want, 1.0, static_cast<double>(n)));
    std::iota(order.begin(), order.end(), 0);
    const double* row = scores.data() + u * n;
    std::partial_sort(order.begin(), order.begin() + count, order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return row[a] != row[b] ? row[a] > row[b] : a < b;
                      });
    std::vector<std::size_t> chosen(order.begin(), order.begin() + count);
    std::sort(chosen.begin(), chosen.end());
    for (auto j : chosen) out.push_back({u, j});
  }
  return out;
}

std::vector<std::string> numbered(std::size_t n) {
  std::vector<std::string> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = std::to_string(i);
  return keys;
}

}  // namespace

SyntheticData synth_generate(const SynthConfig& c) {
  if (c.k == 0 || c.users == 0 || c.source_items == 0 || c.target_items == 0) {
    throw DataError("synthetic config needs positive users, items and k");
  }
  if (c.noise < 0) throw DataError("noise scale must be non-negative");
  if (c.source_correlation < -1 || c.source_correlation > 1) {
    throw DataError("source correlation must lie in [-1, 1]");
  }
  auto rng = make_rng(c.seed, streams::kSynth);
  const std::size_t k = c.k;
  const std::size_t m = c.users;

  GroundTruth truth;
  if (c.weights) {
    if (c.weights->rows() != k || c.weights->cols() != k) {
      throw DataError("explicit weight map must be k x k");
    }
    truth.weights = *c.weights;
  } else {
    if (c.edges > k * k) throw DataError("more edges requested than k*k");
    truth.weights = Matrix(k, k);
    // One parent per preference first (preferences are never roots), then
    // the remaining edges uniformly over the free slots.
    std::vector<std::size_t> slots;
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::vector<bool> taken(k * k, false);
    for (std::size_t j = 0; j < k && j < c.edges; ++j) {
      const std::size_t slot = pick(rng) * k + j;
      taken[slot] = true;
      truth.weights[slot] = signed_weight(rng);
    }
    for (std::size_t i = 0; i < k * k; ++i)
      if (!taken[i]) slots.push_back(i);
    std::shuffle(slots.begin(), slots.end(), rng);
    for (std::size_t e = std::min(k, c.edges); e < c.edges; ++e) {
      truth.weights[slots[e - std::min(k, c.edges)]] = signed_weight(rng);
    }
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (truth.weights(i, j) != 0.0) truth.edges.emplace_back(i, k + j);

  truth.source_weights = Matrix(k, k);
  const double resid = std::sqrt(1.0 - c.source_correlation * c.source_correlation);
  for (std::size_t i = 0; i < k * k; ++i) {
    if (truth.weights[i] == 0.0) continue;
    truth.source_weights[i] = c.source_correlation * truth.weights[i] + resid * signed_weight(rng);
  }

  std::bernoulli_distribution coin(0.5);
  truth.group.resize(m);
  truth.attributes = gaussian(rng, k, m);
  for (std::size_t u = 0; u < m; ++u) {
    truth.group[u] = coin(rng) ? 1 : 0;
    const double offset = truth.group[u] == 1 ? c.shift / 2 : -c.shift / 2;
    for (std::size_t i = 0; i < k; ++i) truth.attributes(i, u) += offset;
  }
  truth.preferences = kernels::matmul_tn(truth.weights, truth.attributes);
  truth.source_preferences = kernels::matmul_tn(truth.source_weights, truth.attributes);
  if (c.noise > 0) {
    const Matrix e_t = gaussian(rng, k, m, c.noise);
    const Matrix e_s = gaussian(rng, k, m, c.noise);
    for (std::size_t i = 0; i < e_t.size(); ++i) {
      truth.preferences[i] += e_t[i];
      truth.source_preferences[i] += e_s[i];
    }
  }
  const Matrix target_items = gaussian(rng, k, c.target_items);
  const Matrix source_items = gaussian(rng, k, c.source_items);

  SyntheticData out;
  CrossDomainDataset& ds = out.dataset;
  ds.users = m;
  ds.source_items = c.source_items;
  ds.target_items = c.target_items;
  ds.target_positives = top_affinities(truth.preferences, target_items, c.target_density, "target");
  ds.source_positives =
      top_affinities(truth.source_preferences, source_items, c.source_density, "source");
  ds.user_attribute = truth.group;
  ds.attribute_labels = {"group0", "group1"};
  ds.user_keys = numbered(m);
  ds.source_item_keys = numbered(c.source_items);
  ds.target_item_keys = numbered(c.target_items);
  ds.validate();
  out.truth = std::move(truth);
  return out;
}

}  // namespace cdcor::data
