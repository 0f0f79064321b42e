#include <algorithm>

#include "cdcor/data.hpp"
#include "cdcor/error.hpp"

namespace cdcor::data {

const char* to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }

Domain parse_domain(std::string_view text) {
  if (text == "source") return Domain::kSource;
  if (text == "target") return Domain::kTarget;
  throw DataError("unknown domain '" + std::string(text) + "'");
}

std::vector<std::size_t> CrossDomainDataset::target_degree() const {
  std::vector<std::size_t> degree(users, 0);
  for (const auto& x : target_positives) ++degree[x.user];
  return degree;
}

std::vector<std::vector<std::size_t>> CrossDomainDataset::items_by_user(Domain d) const {
  std::vector<std::vector<std::size_t>> out(users);
  for (const auto& x : positives(d)) out[x.user].push_back(x.item);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

void CrossDomainDataset::validate() const {
  for (Domain d : {Domain::kSource, Domain::kTarget}) {
    const auto& pos = positives(d);
    for (std::size_t i = 0; i < pos.size(); ++i) {
      if (pos[i].user >= users || pos[i].item >= item_count(d)) {
        throw DataError(std::string(to_string(d)) + " positive #" + std::to_string(i) +
                        " out of range");
      }
      if (i > 0 && !(pos[i - 1] < pos[i])) {
        throw DataError(std::string(to_string(d)) + " positives not sorted/unique at #" +
                        std::to_string(i));
      }
    }
  }
  if (user_attribute) {
    if (user_attribute->size() != users) throw DataError("attribute vector length != users");
    for (auto a : *user_attribute)
      if (a >= attribute_labels.size()) throw DataError("attribute label index out of range");
  }
}

}  // namespace cdcor::data
