#include <fstream>
#include <sstream>

#include "cdcor/data.hpp"
#include "cdcor/error.hpp"

namespace cdcor::data {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::vector<std::size_t> parse_indices(const std::string& line, const std::filesystem::path& path,
                                       std::size_t line_no) {
  std::vector<std::size_t> out;
  std::istringstream in(line);
  std::string field;
  while (std::getline(in, field, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(field, &used));
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad index '" + field + "'");
    }
  }
  return out;
}

void write_interactions(const DomainSplit& source, const DomainSplit& target,
                        std::vector<Interaction> DomainSplit::*part,
                        const std::filesystem::path& path, const std::string& provenance) {
  auto out = open_out(path);
  out << "# " << provenance << '\n' << "domain,user,item,label\n";
  for (const auto& x : source.*part) out << "source," << x.user << ',' << x.item << ",1\n";
  for (const auto& x : target.*part) out << "target," << x.user << ',' << x.item << ",1\n";
}

void read_interactions(SplitResult& split, std::vector<Interaction> DomainSplit::*part,
                       const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    const Domain d = parse_domain(line.substr(0, comma));
    const auto fields = parse_indices(line.substr(comma + 1), path, line_no);
    if (fields.size() != 3) throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
    if (fields[2] != 1) continue;
    (split.domain(d).*part).push_back({fields[0], fields[1]});
  }
}

}  // namespace

void write_candidates(const std::vector<CandidateList>& lists, const std::filesystem::path& path,
                      const std::string& provenance) {
  auto out = open_out(path);
  out << "# " << provenance << '\n' << "user,positive_item";
  for (std::size_t i = 1; i <= kCandidateNegatives; ++i) out << ",neg" << i;
  out << '\n';
  for (const auto& l : lists) {
    out << l.user << ',' << l.positive;
    for (auto j : l.negatives) out << ',' << j;
    out << '\n';
  }
}

std::vector<CandidateList> read_candidates(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<CandidateList> lists;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    auto fields = parse_indices(line, path, line_no);
    if (fields.size() != 2 + kCandidateNegatives) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(2 + kCandidateNegatives) + " fields");
    }
    CandidateList l{fields[0], fields[1], {fields.begin() + 2, fields.end()}};
    lists.push_back(std::move(l));
  }
  return lists;
}

void write_split(const SplitResult& split, const std::filesystem::path& dir,
                 const std::string& provenance) {
  std::filesystem::create_directories(dir);
  write_interactions(split.source, split.target, &DomainSplit::train, dir / "train.csv", provenance);
  write_interactions(split.source, split.target, &DomainSplit::validation, dir / "validation.csv",
                     provenance);
  write_interactions(split.source, split.target, &DomainSplit::test, dir / "test.csv", provenance);
  write_candidates(split.test_candidates, dir / "test_candidates.csv", provenance);
  write_candidates(split.validation_candidates, dir / "validation_candidates.csv", provenance);
}

SplitResult read_split(const std::filesystem::path& dir) {
  SplitResult split;
  read_interactions(split, &DomainSplit::train, dir / "train.csv");
  read_interactions(split, &DomainSplit::validation, dir / "validation.csv");
  read_interactions(split, &DomainSplit::test, dir / "test.csv");
  split.test_candidates = read_candidates(dir / "test_candidates.csv");
  split.validation_candidates = read_candidates(dir / "validation_candidates.csv");
  return split;
}

}  // namespace cdcor::data
