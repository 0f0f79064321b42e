#include <algorithm>
#include <random>

#include "cdcor/data.hpp"
#include "cdcor/error.hpp"

namespace cdcor::data {

TrainingExamples sample_train_negatives(const CrossDomainDataset& ds, const SplitResult& split,
                                        Domain domain, std::size_t n_neg_per_positive,
                                        std::uint64_t seed) {
  if (n_neg_per_positive < 1) throw DataError("need at least one negative per positive");
  const auto known = ds.items_by_user(domain);
  const std::size_t n_items = ds.item_count(domain);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n_items == 0 ? 0 : n_items - 1);

  TrainingExamples out;
  const auto& train = split.domain(domain).train;
  out.examples.reserve(train.size() * (1 + n_neg_per_positive));
  std::vector<bool> flagged(ds.users, false);
  for (const auto& x : train) {
    out.examples.push_back({x.user, x.item, 1.0});
    const auto& mine = known[x.user];
    if (mine.size() >= n_items) {
      if (!flagged[x.user]) {
        flagged[x.user] = true;
        out.users_without_negatives.push_back(x.user);
      }
      continue;
    }
    for (std::size_t k = 0; k < n_neg_per_positive; ++k) {
      std::size_t j = pick(rng);
      while (std::binary_search(mine.begin(), mine.end(), j)) j = pick(rng);
      out.examples.push_back({x.user, j, 0.0});
    }
  }
  return out;
}

}  // namespace cdcor::data
