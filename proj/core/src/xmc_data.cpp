#include "xbf/xmc_data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "xbf/rng.hpp"

namespace xbf {

bool SparseInstance::has_label(LabelId y) const {
  return std::binary_search(labels.begin(), labels.end(), y);
}

Dataset::Dataset(std::vector<SparseInstance> instances, std::size_t num_features,
                 std::size_t num_labels)
    : instances_(std::move(instances)), num_features_(num_features), num_labels_(num_labels) {
  for (const auto& inst : instances_) {
    for (std::size_t k = 0; k < inst.features.size(); ++k) {
      if (inst.features[k].index >= num_features_) {
        throw ConfigError(fmt::format("instance {}: feature index {} >= D={}", inst.id,
                                      inst.features[k].index, num_features_));
      }
      if (k > 0 && inst.features[k].index <= inst.features[k - 1].index) {
        throw ConfigError(fmt::format("instance {}: feature indices not strictly increasing", inst.id));
      }
    }
    for (std::size_t k = 0; k < inst.labels.size(); ++k) {
      if (inst.labels[k] >= num_labels_) {
        throw ConfigError(fmt::format("instance {}: label {} >= L={}", inst.id, inst.labels[k], num_labels_));
      }
      if (k > 0 && inst.labels[k] <= inst.labels[k - 1]) {
        throw ConfigError(fmt::format("instance {}: labels not sorted and unique", inst.id));
      }
    }
    if (inst.labels.empty()) ++empty_label_sets_;
  }
}

namespace {

template <typename T>
bool parse_number(std::string_view token, T& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

struct Header {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t l = 0;
};

Header parse_header(const std::string& line) {
  Header h;
  std::size_t fields[3];
  std::size_t count = 0;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
    if (count == 3 || !parse_number(std::string_view(line).substr(pos, end - pos), fields[count])) {
      throw ParseError(fmt::format("line 1: malformed header '{}' (expected 'N D L')", line), 1);
    }
    ++count;
    pos = end;
  }
  if (count != 3) throw ParseError(fmt::format("line 1: malformed header '{}' (expected 'N D L')", line), 1);
  h.n = fields[0];
  h.d = fields[1];
  h.l = fields[2];
  return h;
}

SparseInstance parse_instance_line(std::string_view line, std::size_t line_no, const Header& h) {
  SparseInstance inst;
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string_view {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' && line[pos] != '\r') ++pos;
    return line.substr(start, pos - start);
  };

  const bool starts_with_labels = !line.empty() && line[0] != ' ' && line[0] != '\t';
  std::string_view token = next_token();
  if (starts_with_labels && !token.empty() && token.find(':') == std::string_view::npos) {
    std::size_t start = 0;
    while (start <= token.size()) {
      std::size_t comma = token.find(',', start);
      if (comma == std::string_view::npos) comma = token.size();
      const std::string_view item = token.substr(start, comma - start);
      LabelId y = 0;
      if (!parse_number(item, y)) {
        throw ParseError(fmt::format("line {}: non-numeric label '{}'", line_no, item), line_no);
      }
      if (y >= h.l) {
        throw ParseError(fmt::format("line {}: label index {} >= L={}", line_no, y, h.l), line_no);
      }
      inst.labels.push_back(y);
      start = comma + 1;
    }
    token = next_token();
  }

  for (; !token.empty(); token = next_token()) {
    const std::size_t colon = token.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError(fmt::format("line {}: expected 'index:value', got '{}'", line_no, token), line_no);
    }
    Feature f;
    if (!parse_number(token.substr(0, colon), f.index)) {
      throw ParseError(fmt::format("line {}: non-numeric feature index in '{}'", line_no, token), line_no);
    }
    if (!parse_number(token.substr(colon + 1), f.value) || !std::isfinite(f.value)) {
      throw ParseError(fmt::format("line {}: non-numeric feature value in '{}'", line_no, token), line_no);
    }
    if (f.index >= h.d) {
      throw ParseError(fmt::format("line {}: feature index {} >= D={}", line_no, f.index, h.d), line_no);
    }
    inst.features.push_back(f);
  }

  std::sort(inst.labels.begin(), inst.labels.end());
  inst.labels.erase(std::unique(inst.labels.begin(), inst.labels.end()), inst.labels.end());
  std::sort(inst.features.begin(), inst.features.end(),
            [](const Feature& a, const Feature& b) { return a.index < b.index; });
  for (std::size_t k = 1; k < inst.features.size(); ++k) {
    if (inst.features[k].index == inst.features[k - 1].index) {
      throw ParseError(fmt::format("line {}: duplicate feature index {}", line_no, inst.features[k].index),
                       line_no);
    }
  }
  return inst;
}

}  // namespace

Dataset parse_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: missing header", 1);
  const Header h = parse_header(line);

  std::vector<SparseInstance> instances;
  instances.reserve(h.n);
  std::size_t line_no = 1;
  std::size_t trailing_blank = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (instances.size() == h.n) {
      if (line.find_first_not_of(" \t") != std::string::npos) {
        throw ParseError(fmt::format("line {}: more instances than the header's N={}", line_no, h.n), line_no);
      }
      ++trailing_blank;
      continue;
    }
    SparseInstance inst = parse_instance_line(line, line_no, h);
    inst.id = instances.size();
    instances.push_back(std::move(inst));
  }
  if (instances.size() != h.n) {
    // Report the line where the next instance was expected.
    throw ParseError(fmt::format("line {}: header declares N={} instances, found {}", line_no + 1, h.n,
                                 instances.size()),
                     line_no + 1);
  }
  return Dataset(std::move(instances), h.d, h.l);
}

Dataset parse_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open dataset '{}'", path.string()));
  return parse_dataset(in);
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  out << ds.n() << ' ' << ds.d() << ' ' << ds.l_total() << '\n';
  char buf[64];
  for (const auto& inst : ds.instances()) {
    for (std::size_t k = 0; k < inst.labels.size(); ++k) {
      if (k > 0) out << ',';
      out << inst.labels[k];
    }
    for (const auto& f : inst.features) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), f.value);
      out << ' ' << f.index << ':' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  write_dataset(ds, out);
}

std::pair<Dataset, Dataset> split_fraction(const Dataset& ds, double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ConfigError(fmt::format("split fraction alpha={} outside (0, 1]", alpha));
  }
  std::vector<std::size_t> order(ds.n());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);

  const auto first_size =
      std::min(ds.n(), static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(ds.n()) - 1e-9)));
  std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first_size));
  std::vector<std::size_t> second(order.begin() + static_cast<std::ptrdiff_t>(first_size), order.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());

  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<SparseInstance> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(ds[i]);
    return Dataset(std::move(out), ds.d(), ds.l_total());
  };
  return {gather(first), gather(second)};
}

std::vector<std::size_t> label_frequencies(const Dataset& ds) {
  std::vector<std::size_t> counts(ds.l_total(), 0);
  for (const auto& inst : ds.instances()) {
    for (auto y : inst.labels) ++counts[y];
  }
  return counts;
}

DatasetSummary summarize(const Dataset& ds) {
  DatasetSummary s;
  s.n = ds.n();
  s.d = ds.d();
  s.l_total = ds.l_total();
  s.empty_label_sets = ds.num_empty_label_sets();
  const auto counts = label_frequencies(ds);
  std::size_t pairs = 0;
  std::size_t nnz = 0;
  for (const auto& inst : ds.instances()) {
    pairs += inst.labels.size();
    nnz += inst.features.size();
  }
  s.used_labels = static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
  if (s.n > 0) {
    s.mean_labels_per_instance = static_cast<double>(pairs) / static_cast<double>(s.n);
    s.mean_nnz = static_cast<double>(nnz) / static_cast<double>(s.n);
  }
  if (s.used_labels > 0) s.mean_instances_per_label = static_cast<double>(pairs) / static_cast<double>(s.used_labels);
  return s;
}

}  // namespace xbf
