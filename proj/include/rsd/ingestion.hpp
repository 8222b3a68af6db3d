#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rsd/block_model.hpp"
#include "rsd/relation_decoder.hpp"

namespace rsd {

// Token vectors read from a whitespace-separated text file (GloVe layout).
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::string> tokens, Matrix vectors, std::string source_path = {});

  Index dim() const { return vectors_.cols(); }
  Index size() const { return vectors_.rows(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const Matrix& vectors() const { return vectors_; }
  const std::string& source_path() const { return source_path_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  std::optional<Index> find(const std::string& token) const;
  Vector vector(const std::string& token) const;

  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

 private:
  std::vector<std::string> tokens_;
  Matrix vectors_;
  std::unordered_map<std::string, Index> index_;
  std::string source_path_;
  std::vector<std::string> warnings_;
};

struct EmbeddingLoadOptions {
  // Tokens retained wherever they appear in the file.
  std::unordered_set<std::string> requested;
  // The first `keep_first` lines are retained as readout vocabulary. A
  // negative value keeps every line.
  long keep_first = -1;
};

// Reads "token v1 ... vD" lines. D is inferred from the first line. A ragged
// line throws ParseError; duplicate tokens keep the first occurrence and
// record a warning.
EmbeddingTable load_embeddings(const std::string& path, const EmbeddingLoadOptions& options = {});

// Lowercase, split on whitespace, strip surrounding punctuation.
std::vector<std::string> tokenize(const std::string& text);

struct EmbeddedStatements {
  Block block;
  Vector coverage;  // in-vocabulary tokens / total tokens, per statement
};

// Mean-pools in-vocabulary token vectors per statement.
EmbeddedStatements embed_statements(const std::vector<std::string>& statements,
                                    const EmbeddingTable& table);

inline constexpr const char* kCosineProxySource =
    "cosine (coordinate-induced; self-compatibility diagnostic)";

// A_ij = max(0, cos(x_i, x_j)) off the diagonal.
ProxyMatrix cosine_proxy(const Block& block);

struct TopicSpec {
  std::map<std::string, std::string> topic_of;
  double same_topic_affinity = 1.0;
  double cross_topic_affinity = 0.15;
};

ProxyMatrix topic_proxy(const std::vector<std::string>& items, const TopicSpec& spec);

// One item per line with an optional tab-separated topic label. Blank lines
// and lines starting with '#' are skipped.
struct BlockFixture {
  std::vector<std::string> items;
  std::vector<std::string> topics;  // empty when the file has no labels
};

BlockFixture load_block_fixture(const std::string& path);

// Proxy CSV: N rows of N comma-separated values.
ProxyMatrix load_proxy_csv(const std::string& path, const std::string& source_name);

}  // namespace rsd
