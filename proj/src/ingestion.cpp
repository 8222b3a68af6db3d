#include "rsd/ingestion.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rsd/errors.hpp"

namespace rsd {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Splits on ASCII whitespace.
std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
    out.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

bool parse_double(std::string_view text, double& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::vector<std::string> tokens, Matrix vectors,
                               std::string source_path)
    : tokens_(std::move(tokens)), vectors_(std::move(vectors)), source_path_(std::move(source_path)) {
  if (static_cast<Index>(tokens_.size()) != vectors_.rows()) {
    throw ContractViolation("embedding table: token count does not match vector rows");
  }
  for (Index i = 0; i < static_cast<Index>(tokens_.size()); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw ContractViolation("embedding table: duplicate token " + tokens_[i]);
    }
  }
}

std::optional<Index> EmbeddingTable::find(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vector EmbeddingTable::vector(const std::string& token) const {
  const auto idx = find(token);
  if (!idx) throw IngestionError("token not in embedding table: " + token);
  return vectors_.row(*idx).transpose();
}

EmbeddingTable load_embeddings(const std::string& path, const EmbeddingLoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open embeddings file: " + path);

  std::vector<std::string> tokens;
  std::vector<double> values;
  std::unordered_set<std::string> seen;
  std::vector<std::string> warnings;
  Index dim = -1;
  std::string line;
  std::size_t line_no = 0;
  long data_lines = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split_fields(view);
    if (dim < 0) {
      dim = static_cast<Index>(fields.size()) - 1;
      if (dim < 1) throw ParseError(path + ":" + std::to_string(line_no) + ": no vector values", line_no);
    } else if (static_cast<Index>(fields.size()) - 1 != dim) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                           std::to_string(dim) + " values, found " +
                           std::to_string(fields.size() - 1),
                       line_no);
    }
    const bool in_prefix = options.keep_first < 0 || data_lines < options.keep_first;
    ++data_lines;
    std::string token(fields[0]);
    if (!in_prefix && options.requested.count(token) == 0) continue;
    if (!seen.insert(token).second) {
      warnings.push_back(path + ":" + std::to_string(line_no) + ": duplicate token '" + token +
                         "' ignored (first occurrence kept)");
      continue;
    }
    const std::size_t offset = values.size();
    values.resize(offset + static_cast<std::size_t>(dim));
    for (Index d = 0; d < dim; ++d) {
      if (!parse_double(fields[static_cast<std::size_t>(d) + 1], values[offset + d])) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": malformed value '" +
                             std::string(fields[static_cast<std::size_t>(d) + 1]) + "'",
                         line_no);
      }
    }
    tokens.push_back(std::move(token));
  }
  if (dim < 0) throw IngestionError("embeddings file is empty: " + path);

  const Index rows = static_cast<Index>(tokens.size());
  Matrix vectors =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          values.data(), rows, dim);
  EmbeddingTable table(std::move(tokens), std::move(vectors), path);
  for (auto& w : warnings) table.add_warning(std::move(w));
  return table;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  for (std::string_view field : split_fields(text)) {
    while (!field.empty() && std::ispunct(static_cast<unsigned char>(field.front()))) {
      field.remove_prefix(1);
    }
    while (!field.empty() && std::ispunct(static_cast<unsigned char>(field.back()))) {
      field.remove_suffix(1);
    }
    if (field.empty()) continue;
    std::string token(field);
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(std::move(token));
  }
  return out;
}

EmbeddedStatements embed_statements(const std::vector<std::string>& statements,
                                    const EmbeddingTable& table) {
  const Index n = static_cast<Index>(statements.size());
  Matrix coords = Matrix::Zero(n, table.dim());
  Vector coverage(n);
  for (Index i = 0; i < n; ++i) {
    const auto tokens = tokenize(statements[i]);
    if (tokens.empty()) {
      throw IngestionError("statement has no tokens: \"" + statements[i] + "\"");
    }
    Index hits = 0;
    for (const auto& t : tokens) {
      if (const auto idx = table.find(t)) {
        coords.row(i) += table.vectors().row(*idx);
        ++hits;
      }
    }
    if (hits == 0) {
      throw IngestionError("statement has no in-vocabulary tokens: \"" + statements[i] + "\"");
    }
    coords.row(i) /= static_cast<double>(hits);
    coverage(i) = static_cast<double>(hits) / static_cast<double>(tokens.size());
  }
  return {Block(statements, std::move(coords)), std::move(coverage)};
}

ProxyMatrix cosine_proxy(const Block& block) {
  const Index n = block.size();
  const Vector norms = block.coords().rowwise().norm();
  for (Index i = 0; i < n; ++i) {
    if (!(norms(i) > 0.0)) {
      throw IngestionError("cosine proxy: zero-norm vector for item '" + block.items()[i] + "'");
    }
  }
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double c = block.coords().row(i).dot(block.coords().row(j)) / (norms(i) * norms(j));
      a(i, j) = a(j, i) = std::clamp(c, 0.0, 1.0);
    }
  }
  return ProxyMatrix(std::move(a), kCosineProxySource);
}

ProxyMatrix topic_proxy(const std::vector<std::string>& items, const TopicSpec& spec) {
  if (!(spec.cross_topic_affinity >= 0.0 && spec.cross_topic_affinity < spec.same_topic_affinity &&
        spec.same_topic_affinity <= 1.0)) {
    throw ContractViolation("topic affinities must satisfy 0 <= cross < same <= 1");
  }
  const Index n = static_cast<Index>(items.size());
  std::vector<std::string> labels;
  labels.reserve(items.size());
  for (const auto& item : items) {
    const auto it = spec.topic_of.find(item);
    if (it == spec.topic_of.end() || it->second.empty()) {
      throw IngestionError("item has no topic label: \"" + item + "\"");
    }
    labels.push_back(it->second);
  }
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      a(i, j) = a(j, i) =
          labels[i] == labels[j] ? spec.same_topic_affinity : spec.cross_topic_affinity;
    }
  }
  return ProxyMatrix(std::move(a), "topic");
}

BlockFixture load_block_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open block fixture: " + path);
  BlockFixture fx;
  std::string line;
  std::size_t line_no = 0;
  bool any_topic = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto tab = line.find('\t');
    std::string item(trim(std::string_view(line).substr(0, tab)));
    std::string topic;
    if (tab != std::string::npos) topic = std::string(trim(std::string_view(line).substr(tab + 1)));
    if (item.empty()) throw ParseError(path + ":" + std::to_string(line_no) + ": empty item", line_no);
    any_topic = any_topic || !topic.empty();
    fx.items.push_back(std::move(item));
    fx.topics.push_back(std::move(topic));
  }
  if (!any_topic) fx.topics.clear();
  if (fx.items.size() < 2) throw IngestionError("block fixture needs at least 2 items: " + path);
  return fx;
}

ProxyMatrix load_proxy_csv(const std::string& path, const std::string& source_name) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open proxy file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      if (!parse_double(trim(cell), v)) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": malformed value '" + cell + "'",
                         line_no);
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  const Index n = static_cast<Index>(rows.size());
  Matrix a(n, n);
  for (Index i = 0; i < n; ++i) {
    if (static_cast<Index>(rows[i].size()) != n) {
      throw IngestionError("proxy file " + path + " is not square (row " + std::to_string(i) + ")");
    }
    for (Index j = 0; j < n; ++j) a(i, j) = rows[i][j];
  }
  try {
    return ProxyMatrix(std::move(a), source_name);
  } catch (const ContractViolation& e) {
    throw IngestionError("proxy file " + path + ": " + e.what());
  }
}

}  // namespace rsd
