#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cdcor/data.hpp"
#include "cdcor/error.hpp"

namespace cdcor::data {

namespace {

std::vector<std::string> split_fields(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, delimiter)) fields.push_back(field);
  if (!line.empty() && line.back() == delimiter) fields.emplace_back();
  for (auto& f : fields) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    while (!f.empty() && f.front() == ' ') f.erase(f.begin());
  }
  return fields;
}

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Integers by value, everything else lexicographically after them.
struct NaturalKeyLess {
  bool operator()(const std::string& a, const std::string& b) const {
    const bool na = all_digits(a);
    const bool nb = all_digits(b);
    if (na && nb) return a.size() != b.size() ? a.size() < b.size() : a < b;
    if (na != nb) return na;
    return a < b;
  }
};

struct Record {
  std::string user;
  std::string item;
  double rating = 1.0;
};

struct ParsedFile {
  std::vector<Record> positives;
  std::size_t records = 0;
  bool has_rating = false;
};

ParsedFile parse_file(const std::filesystem::path& path, const CsvSchema& schema, double threshold,
                      std::map<std::string, std::string>& attributes, bool& saw_attribute) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  // Header.
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = split_fields(line, schema.delimiter);
    break;
  }
  if (header.empty()) throw DataError(path.string() + ": missing header line");
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto user_col = column(schema.user);
  const auto item_col = column(schema.item);
  if (!user_col) throw DataError(path.string() + ": missing column '" + schema.user + "'");
  if (!item_col) throw DataError(path.string() + ": missing column '" + schema.item + "'");
  const auto rating_col = column(schema.rating);
  const auto attr_col = column(schema.attribute);
  saw_attribute = saw_attribute || attr_col.has_value();

  ParsedFile out;
  out.has_rating = rating_col.has_value();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    const auto fields = split_fields(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    Record r{fields[*user_col], fields[*item_col], 1.0};
    if (r.user.empty() || r.item.empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty user or item");
    }
    if (rating_col) {
      const std::string& text = fields[*rating_col];
      try {
        std::size_t used = 0;
        r.rating = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed rating '" +
                        text + "'");
      }
    }
    if (attr_col) {
      const std::string& label = fields[*attr_col];
      auto [it, inserted] = attributes.emplace(r.user, label);
      if (!inserted && it->second != label) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": user '" + r.user +
                        "' has inconsistent attribute ('" + it->second + "' vs '" + label + "')");
      }
    }
    ++out.records;
    if (!rating_col || r.rating >= threshold) out.positives.push_back(std::move(r));
  }
  return out;
}

}  // namespace

IngestResult ingest_csv(const std::filesystem::path& source_path,
                        const std::filesystem::path& target_path, const CsvSchema& schema,
                        double positive_threshold) {
  std::map<std::string, std::string> attributes;
  bool saw_attribute = false;
  ParsedFile source = parse_file(source_path, schema, positive_threshold, attributes, saw_attribute);
  ParsedFile target = parse_file(target_path, schema, positive_threshold, attributes, saw_attribute);

  std::set<std::string, NaturalKeyLess> source_users, target_users;
  for (const auto& r : source.positives) source_users.insert(r.user);
  for (const auto& r : target.positives) target_users.insert(r.user);
  std::set<std::string, NaturalKeyLess> all_users = source_users;
  all_users.insert(target_users.begin(), target_users.end());

  std::map<std::string, std::size_t, NaturalKeyLess> user_index;
  for (const auto& u : source_users)
    if (target_users.contains(u)) user_index.emplace(u, 0);
  if (user_index.empty()) throw DataError("no user has positives in both domains");
  std::size_t next = 0;
  for (auto& [key, idx] : user_index) idx = next++;

  IngestResult result;
  CrossDomainDataset& ds = result.dataset;
  ds.users = user_index.size();
  for (const auto& [key, idx] : user_index) ds.user_keys.push_back(key);
  result.report.source_records = source.records;
  result.report.target_records = target.records;
  result.report.dropped_users = all_users.size() - user_index.size();

  auto build_domain = [&](const ParsedFile& file, std::vector<Interaction>& positives,
                          std::vector<std::string>& item_keys,
                          std::optional<std::vector<double>>& ratings) {
    std::map<std::string, std::size_t, NaturalKeyLess> item_index;
    for (const auto& r : file.positives)
      if (user_index.contains(r.user)) item_index.emplace(r.item, 0);
    std::size_t n = 0;
    for (auto& [key, idx] : item_index) {
      idx = n++;
      item_keys.push_back(key);
    }
    // First occurrence wins for duplicate (user, item) records.
    std::map<Interaction, double> unique;
    for (const auto& r : file.positives) {
      auto u = user_index.find(r.user);
      if (u == user_index.end()) continue;
      unique.emplace(Interaction{u->second, item_index.at(r.item)}, r.rating);
    }
    if (file.has_rating) ratings.emplace();
    for (const auto& [x, rating] : unique) {
      positives.push_back(x);
      if (ratings) ratings->push_back(rating);
    }
    return n;
  };
  ds.source_items = build_domain(source, ds.source_positives, ds.source_item_keys, ds.source_ratings);
  ds.target_items = build_domain(target, ds.target_positives, ds.target_item_keys, ds.target_ratings);
  result.report.source_positives = ds.source_positives.size();
  result.report.target_positives = ds.target_positives.size();

  if (saw_attribute) {
    std::set<std::string> labels;
    for (const auto& key : ds.user_keys) {
      auto it = attributes.find(key);
      if (it == attributes.end()) throw DataError("user '" + key + "' has no attribute label");
      labels.insert(it->second);
    }
    ds.attribute_labels.assign(labels.begin(), labels.end());
    std::vector<std::size_t> per_user;
    for (const auto& key : ds.user_keys) {
      const auto& label = attributes.at(key);
      per_user.push_back(static_cast<std::size_t>(
          std::find(ds.attribute_labels.begin(), ds.attribute_labels.end(), label) -
          ds.attribute_labels.begin()));
    }
    ds.user_attribute = std::move(per_user);
  }
  ds.validate();
  return result;
}

void write_canonical(const CrossDomainDataset& ds, const std::filesystem::path& source_path,
                     const std::filesystem::path& target_path) {
  auto key = [](const std::vector<std::string>& keys, std::size_t i) {
    return i < keys.size() ? keys[i] : std::to_string(i);
  };
  auto write = [&](const std::filesystem::path& path, Domain d) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    const auto& ratings = d == Domain::kSource ? ds.source_ratings : ds.target_ratings;
    const auto& item_keys = d == Domain::kSource ? ds.source_item_keys : ds.target_item_keys;
    out << "user,item";
    if (ratings) out << ",rating";
    if (ds.user_attribute) out << ",attribute";
    out << '\n';
    const auto& pos = ds.positives(d);
    for (std::size_t i = 0; i < pos.size(); ++i) {
      out << key(ds.user_keys, pos[i].user) << ',' << key(item_keys, pos[i].item);
      if (ratings) {
        std::ostringstream r;
        r.precision(17);
        r << (*ratings)[i];
        out << ',' << r.str();
      }
      if (ds.user_attribute) out << ',' << ds.attribute_labels[(*ds.user_attribute)[pos[i].user]];
      out << '\n';
    }
  };
  write(source_path, Domain::kSource);
  write(target_path, Domain::kTarget);
}

}  // namespace cdcor::data
