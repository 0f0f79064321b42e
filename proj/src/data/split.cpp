#include <algorithm>
#include <random>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "cdcor/data.hpp"
#include "cdcor/error.hpp"
#include "cdcor/rng.hpp"

namespace cdcor::data {

namespace {

struct Fractions {
  double train;
  double validation;
  double test;
};

Fractions normalize(const SplitRatios& r) {
  if (r.train < 0 || r.validation < 0 || r.test < 0 || !(r.train + r.validation + r.test > 0)) {
    throw DataError("split ratios must be non-negative with a positive sum");
  }
  const double total = r.train + r.validation + r.test;
  return {r.train / total, r.validation / total, r.test / total};
}

std::size_t round_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
}

void sort_split(DomainSplit& s) {
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.test.begin(), s.test.end());
}

DomainSplit random_split(std::vector<Interaction> positives, const Fractions& f,
                         std::mt19937_64& rng) {
  std::shuffle(positives.begin(), positives.end(), rng);
  const std::size_t n = positives.size();
  const std::size_t n_test = std::min(n, round_count(n, f.test));
  const std::size_t n_val = std::min(n - n_test, round_count(n, f.validation));
  DomainSplit s;
  s.test.assign(positives.begin(), positives.begin() + n_test);
  s.validation.assign(positives.begin() + n_test, positives.begin() + n_test + n_val);
  s.train.assign(positives.begin() + n_test + n_val, positives.end());
  sort_split(s);
  return s;
}

// One randomly chosen target positive per user stays in training so every
// evaluated user has training signal. Users with a single positive are
// train-only.
struct Pools {
  std::vector<Interaction> anchors;
  std::vector<Interaction> free;
  std::vector<std::size_t> train_only_users;
};

Pools make_pools(const CrossDomainDataset& ds, std::mt19937_64& rng) {
  std::vector<std::vector<Interaction>> by_user(ds.users);
  for (const auto& x : ds.target_positives) by_user[x.user].push_back(x);
  Pools p;
  for (std::size_t u = 0; u < ds.users; ++u) {
    auto& list = by_user[u];
    if (list.empty()) continue;
    if (list.size() == 1) {
      p.anchors.push_back(list[0]);
      p.train_only_users.push_back(u);
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
    const std::size_t a = pick(rng);
    for (std::size_t i = 0; i < list.size(); ++i) (i == a ? p.anchors : p.free).push_back(list[i]);
  }
  std::shuffle(p.free.begin(), p.free.end(), rng);
  return p;
}

void attach_candidates(const CrossDomainDataset& ds, SplitResult& result, std::uint64_t seed,
                       const SplitOptions& options) {
  if (!options.build_candidates) return;
  result.test_candidates = build_eval_candidates(ds, Domain::kTarget, result.target.test,
                                                 splitmix64(seed ^ streams::kTestCandidates));
  result.validation_candidates =
      build_eval_candidates(ds, Domain::kTarget, result.target.validation,
                            splitmix64(seed ^ streams::kValidationCandidates));
}

void check_mix(const TypeMix& mix, const char* which) {
  if (mix.first < 0 || mix.second < 0 || std::abs(mix.first + mix.second - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << which << " mix (" << mix.first << ", " << mix.second
        << ") must be non-negative and sum to 1";
    throw DataError(msg.str());
  }
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(4);
  s << x;
  return s.str();
}

// Draws `goal` items from two typed pools with the given first-type share,
// shrinking the total when a pool runs short. Consumed items are removed
// from the back of each pool.
std::pair<std::vector<Interaction>, double> draw_typed(std::vector<Interaction>& pool0,
                                                       std::vector<Interaction>& pool1,
                                                       std::size_t goal, double share,
                                                       const char* which) {
  if (goal == 0) return {{}, share};
  if ((share > 0 && pool0.empty()) || (share < 1 && pool1.empty())) {
    const double achievable = pool0.empty() ? 0.0 : 1.0;
    throw DataError(std::string(which) + " type share " + fmt(share) +
                    " is unattainable; achievable " +
                    (pool0.empty() ? "maximum " : "minimum ") + fmt(achievable));
  }
  std::size_t total = goal;
  if (share > 0)
    total = std::min(total, static_cast<std::size_t>(std::floor(pool0.size() / share)));
  if (share < 1)
    total = std::min(total, static_cast<std::size_t>(std::floor(pool1.size() / (1.0 - share))));
  std::size_t n0 = std::min(pool0.size(), static_cast<std::size_t>(std::llround(total * share)));
  std::size_t n1 = std::min(pool1.size(), total - n0);
  std::vector<Interaction> out;
  out.insert(out.end(), pool0.end() - n0, pool0.end());
  out.insert(out.end(), pool1.end() - n1, pool1.end());
  pool0.resize(pool0.size() - n0);
  pool1.resize(pool1.size() - n1);
  const double realized = n0 + n1 == 0 ? share : static_cast<double>(n0) / (n0 + n1);
  return {std::move(out), realized};
}

SplitResult split_typed(const CrossDomainDataset& ds, const std::vector<bool>& first_type,
                        TypeMix train_mix, TypeMix test_mix, std::uint64_t seed,
                        SplitRatios ratios, SplitOptions options) {
  check_mix(train_mix, "train");
  check_mix(test_mix, "test");
  const Fractions f = normalize(ratios);

  SplitResult result;
  auto source_rng = make_rng(seed, streams::kSplitSource);
  result.source = random_split(ds.source_positives, f, source_rng);

  auto rng = make_rng(seed, streams::kSplitTarget);
  Pools pools = make_pools(ds, rng);
  result.train_only_users = pools.train_only_users;

  std::vector<Interaction> anchors[2], free[2];
  for (const auto& x : pools.anchors) anchors[first_type[x.user] ? 0 : 1].push_back(x);
  for (const auto& x : pools.free) free[first_type[x.user] ? 0 : 1].push_back(x);

  const std::size_t n = ds.target_positives.size();
  const std::size_t test_goal = round_count(n, f.test);
  const std::size_t val_goal = round_count(n, f.validation);
  const std::size_t train_goal = n - std::min(n, test_goal + val_goal);

  auto [test, test_share] = draw_typed(free[0], free[1], test_goal, test_mix.first, "test");
  auto [validation, val_share] =
      draw_typed(free[0], free[1], val_goal, train_mix.first, "validation");
  (void)val_share;

  // Training keeps every anchor, so the first-type share is bounded below and
  // above by what the anchors force.
  const double a0 = static_cast<double>(anchors[0].size());
  const double a1 = static_cast<double>(anchors[1].size());
  const double f0 = static_cast<double>(free[0].size());
  const double f1 = static_cast<double>(free[1].size());
  const double min_share = a0 + a1 + f1 > 0 ? a0 / (a0 + a1 + f1) : 0.0;
  const double max_share = a0 + f0 + a1 > 0 ? (a0 + f0) / (a0 + f0 + a1) : 0.0;
  const double s = train_mix.first;
  if (s < min_share - 1e-12 || s > max_share + 1e-12) {
    throw DataError("train type share " + fmt(s) + " is unattainable; achievable range [" +
                    fmt(min_share) + ", " + fmt(max_share) + "], achievable maximum " +
                    fmt(max_share));
  }
  const double inf = std::numeric_limits<double>::infinity();
  const double lower = std::max(s > 0 ? a0 / s : 0.0, s < 1 ? a1 / (1.0 - s) : 0.0);
  const double upper = std::min(s > 0 ? (a0 + f0) / s : inf, s < 1 ? (a1 + f1) / (1.0 - s) : inf);
  const double total = std::clamp(static_cast<double>(train_goal), std::ceil(lower - 1e-9),
                                  std::floor(upper + 1e-9));
  const std::size_t t0 = static_cast<std::size_t>(
      std::clamp(std::round(total * s), a0, a0 + f0));
  const std::size_t t1 = static_cast<std::size_t>(
      std::clamp(total - static_cast<double>(t0), a1, a1 + f1));

  DomainSplit& target = result.target;
  target.train = anchors[0];
  target.train.insert(target.train.end(), free[0].end() - (t0 - anchors[0].size()), free[0].end());
  target.train.insert(target.train.end(), anchors[1].begin(), anchors[1].end());
  target.train.insert(target.train.end(), free[1].end() - (t1 - anchors[1].size()), free[1].end());
  target.validation = std::move(validation);
  target.test = std::move(test);
  sort_split(target);

  MixtureReport mix;
  mix.requested_train = train_mix.first;
  mix.requested_test = test_mix.first;
  mix.realized_train = t0 + t1 == 0 ? 0.0 : static_cast<double>(t0) / static_cast<double>(t0 + t1);
  mix.realized_test = test_share;
  result.mixture = mix;

  attach_candidates(ds, result, seed, options);
  return result;
}

}  // namespace

SplitResult split_iid(const CrossDomainDataset& ds, SplitRatios ratios, std::uint64_t seed,
                      SplitOptions options) {
  const Fractions f = normalize(ratios);
  SplitResult result;
  auto source_rng = make_rng(seed, streams::kSplitSource);
  result.source = random_split(ds.source_positives, f, source_rng);

  auto rng = make_rng(seed, streams::kSplitTarget);
  Pools pools = make_pools(ds, rng);
  result.train_only_users = pools.train_only_users;
  const std::size_t n = ds.target_positives.size();
  const std::size_t n_test = std::min(pools.free.size(), round_count(n, f.test));
  const std::size_t n_val = std::min(pools.free.size() - n_test, round_count(n, f.validation));

  DomainSplit& t = result.target;
  t.test.assign(pools.free.begin(), pools.free.begin() + n_test);
  t.validation.assign(pools.free.begin() + n_test, pools.free.begin() + n_test + n_val);
  t.train = pools.anchors;
  t.train.insert(t.train.end(), pools.free.begin() + n_test + n_val, pools.free.end());
  sort_split(t);

  attach_candidates(ds, result, seed, options);
  return result;
}

std::vector<bool> high_degree_users(const CrossDomainDataset& ds) {
  const auto degree = ds.target_degree();
  std::vector<std::size_t> sorted = degree;
  std::sort(sorted.begin(), sorted.end());
  double median = 0.0;
  if (!sorted.empty()) {
    const std::size_t mid = sorted.size() / 2;
    median = sorted.size() % 2 == 1 ? static_cast<double>(sorted[mid])
                                    : 0.5 * static_cast<double>(sorted[mid - 1] + sorted[mid]);
  }
  std::vector<bool> high(ds.users);
  for (std::size_t u = 0; u < ds.users; ++u) high[u] = static_cast<double>(degree[u]) > median;
  return high;
}

SplitResult split_ood_degree(const CrossDomainDataset& ds, TypeMix train_mix, TypeMix test_mix,
                             std::uint64_t seed, SplitRatios ratios, SplitOptions options) {
  return split_typed(ds, high_degree_users(ds), train_mix, test_mix, seed, ratios, options);
}

SplitResult split_ood_attribute(const CrossDomainDataset& ds, TypeMix train_mix,
                                TypeMix test_mix, std::uint64_t seed, SplitRatios ratios,
                                SplitOptions options) {
  if (!ds.user_attribute) throw DataError("dataset has no user attribute column");
  if (ds.attribute_labels.size() != 2) {
    throw DataError("attribute split needs exactly two labels, found " +
                    std::to_string(ds.attribute_labels.size()));
  }
  std::vector<bool> first(ds.users);
  for (std::size_t u = 0; u < ds.users; ++u) first[u] = (*ds.user_attribute)[u] == 0;
  return split_typed(ds, first, train_mix, test_mix, seed, ratios, options);
}

std::vector<CandidateList> build_eval_candidates(const CrossDomainDataset& ds, Domain domain,
                                                 const std::vector<Interaction>& positives,
                                                 std::uint64_t seed) {
  const auto known = ds.items_by_user(domain);
  const std::size_t n_items = ds.item_count(domain);
  std::mt19937_64 rng(seed);
  std::vector<CandidateList> out;
  out.reserve(positives.size());
  for (const auto& x : positives) {
    const auto& mine = known[x.user];
    const std::size_t eligible = n_items - mine.size();
    if (eligible < kCandidateNegatives) {
      throw DataError("user " + std::to_string(x.user) + " has only " + std::to_string(eligible) +
                      " eligible negatives in the " + to_string(domain) + " domain; " +
                      std::to_string(kCandidateNegatives) + " required");
    }
    CandidateList list{x.user, x.item, {}};
    list.negatives.reserve(kCandidateNegatives);
    if (eligible >= 4 * kCandidateNegatives) {
      std::unordered_set<std::size_t> taken;
      std::uniform_int_distribution<std::size_t> pick(0, n_items - 1);
      while (list.negatives.size() < kCandidateNegatives) {
        const std::size_t j = pick(rng);
        if (std::binary_search(mine.begin(), mine.end(), j) || !taken.insert(j).second) continue;
        list.negatives.push_back(j);
      }
    } else {
      std::vector<std::size_t> pool;
      pool.reserve(eligible);
      for (std::size_t j = 0; j < n_items; ++j)
        if (!std::binary_search(mine.begin(), mine.end(), j)) pool.push_back(j);
      for (std::size_t i = 0; i < kCandidateNegatives; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        list.negatives.push_back(pool[i]);
      }
    }
    out.push_back(std::move(list));
  }
  return out;
}

void subsample_target_train(SplitResult& split, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw DataError("sparsity fraction must lie in (0, 1], got " + fmt(fraction));
  }
  if (fraction == 1.0) return;
  auto rng = make_rng(seed, streams::kSparsity);
  auto& train = split.target.train;
  std::shuffle(train.begin(), train.end(), rng);
  train.resize(round_count(train.size(), fraction));
  std::sort(train.begin(), train.end());
}

std::uint64_t tie_break_key(std::size_t user, std::size_t item) {
  return splitmix64(splitmix64(static_cast<std::uint64_t>(user)) ^
                    (static_cast<std::uint64_t>(item) * 0x9e3779b97f4a7c15ULL));
}

std::vector<std::size_t> CandidateList::ordered_items() const {
  std::vector<std::size_t> items = negatives;
  items.push_back(positive);
  std::sort(items.begin(), items.end(), [&](std::size_t a, std::size_t b) {
    const auto ka = tie_break_key(user, a);
    const auto kb = tie_break_key(user, b);
    return ka != kb ? ka < kb : a < b;
  });
  return items;
}

std::size_t CandidateList::positive_position() const {
  const auto items = ordered_items();
  return static_cast<std::size_t>(std::find(items.begin(), items.end(), positive) - items.begin());
}

}  // namespace cdcor::data
