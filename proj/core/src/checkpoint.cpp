#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "xbf/policy.hpp"

namespace xbf {

namespace {
constexpr std::string_view kMagic = "xbf-policy-checkpoint";
constexpr int kFormatVersion = 1;

double parse_hex(const std::string& token, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') {
    throw ParseError(fmt::format("checkpoint line {}: bad value '{}'", line, token), line);
  }
  return v;
}
}  // namespace

void save_checkpoint(const PolicyModel& model, std::ostream& out) {
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << model.num_labels() << ' ' << model.num_features() << ' ' << model.nonzeros() << '\n';
  for (std::size_t y = 0; y < model.num_labels(); ++y) {
    const auto row = model.row(static_cast<LabelId>(y));
    for (std::size_t f = 0; f < row.size(); ++f) {
      if (row[f] != 0.0) out << fmt::format("{} {} {:a}\n", y, f, row[f]);
    }
  }
  out << "bias";
  for (double b : model.bias()) out << fmt::format(" {:a}", b);
  out << '\n';
}

void save_checkpoint(const PolicyModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write checkpoint '{}'", path.string()));
  save_checkpoint(model, out);
}

PolicyModel load_checkpoint(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&] {
    if (!std::getline(in, line)) throw ParseError(fmt::format("checkpoint truncated after line {}", line_no), line_no);
    ++line_no;
    return std::istringstream(line);
  };

  {
    auto is = next_line();
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != kMagic) throw ParseError("not an xbf policy checkpoint", 1);
    if (version != kFormatVersion) {
      throw ParseError(fmt::format("unsupported checkpoint version {}", version), 1);
    }
  }
  std::size_t num_labels = 0, num_features = 0, nnz = 0;
  {
    auto is = next_line();
    if (!(is >> num_labels >> num_features >> nnz)) throw ParseError("checkpoint line 2: expected 'L D nnz'", 2);
  }
  PolicyModel model(num_labels, num_features);
  for (std::size_t k = 0; k < nnz; ++k) {
    auto is = next_line();
    std::size_t y = 0, f = 0;
    std::string value;
    if (!(is >> y >> f >> value) || y >= num_labels || f >= num_features) {
      throw ParseError(fmt::format("checkpoint line {}: bad triplet", line_no), line_no);
    }
    model.weight(static_cast<LabelId>(y), static_cast<FeatureId>(f)) = parse_hex(value, line_no);
  }
  {
    auto is = next_line();
    std::string tag;
    is >> tag;
    if (tag != "bias") throw ParseError(fmt::format("checkpoint line {}: expected bias", line_no), line_no);
    auto bias = model.bias();
    for (std::size_t y = 0; y < num_labels; ++y) {
      std::string value;
      if (!(is >> value)) throw ParseError(fmt::format("checkpoint line {}: short bias vector", line_no), line_no);
      bias[y] = parse_hex(value, line_no);
    }
  }
  return model;
}

PolicyModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open checkpoint '{}'", path.string()));
  return load_checkpoint(in);
}

}  // namespace xbf
