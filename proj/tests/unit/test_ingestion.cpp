#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "rsd/errors.hpp"
#include "rsd/ingestion.hpp"

using namespace rsd;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto dir = std::filesystem::temp_directory_path() / "rsd_unit";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << content;
  return path.string();
}

const std::string kData = RSD_DATA_DIR;

}  // namespace

TEST_CASE("tokenize lowercases and strips punctuation") {
  CHECK(tokenize("  Set union, is COMMUTATIVE.  ") == std::vector<std::string>{"set", "union", "is", "commutative"});
  CHECK(tokenize("(a) -- b's") == std::vector<std::string>{"a", "b's"});
  CHECK(tokenize(" ... ").empty());
}

TEST_CASE("embedding file parsing") {
  const std::string path = write_temp("emb.txt", "alpha 1 0\nbeta 0 2\nalpha 9 9\ngamma 3 4\n");
  const EmbeddingTable t = load_embeddings(path);
  CHECK(t.size() == 3);
  CHECK(t.dim() == 2);
  CHECK(t.vector("alpha")(0) == 1.0);
  CHECK(t.vector("gamma")(1) == 4.0);
  REQUIRE(t.warnings().size() == 1);
  CHECK(t.warnings()[0].find("alpha") != std::string::npos);
  CHECK_THROWS_AS(t.vector("delta"), IngestionError);
}

TEST_CASE("embedding file filtering keeps requested tokens and the leading vocabulary") {
  const std::string path = write_temp("emb2.txt", "a 1 0\nb 0 1\nc 1 1\nd 2 1\n");
  EmbeddingLoadOptions opts;
  opts.keep_first = 1;
  opts.requested = {"d"};
  const EmbeddingTable t = load_embeddings(path, opts);
  CHECK(t.size() == 2);
  CHECK(t.contains("a"));
  CHECK(t.contains("d"));
  CHECK_FALSE(t.contains("b"));
}

TEST_CASE("ragged and malformed lines report their line number") {
  const std::string ragged = write_temp("ragged.txt", "a 1 2\nb 3 4\nc 5\n");
  try {
    (void)load_embeddings(ragged);
    FAIL("expected parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(load_embeddings(write_temp("bad.txt", "a 1 x\n")), ParseError);
  CHECK_THROWS_AS(load_embeddings(write_temp("empty.txt", "")), IngestionError);
  CHECK_THROWS_AS(load_embeddings("/nonexistent/file.txt"), IngestionError);
}

TEST_CASE("statements are mean-pooled over in-vocabulary tokens") {
  Matrix v(3, 2);
  v << 1, 0, 0, 1, 3, 3;
  const EmbeddingTable t({"dog", "wolf", "cat"}, v);
  const EmbeddedStatements e = embed_statements({"Dog wolf!", "dog zebra", "cat"}, t);
  CHECK(e.block.coords()(0, 0) == 0.5);
  CHECK(e.block.coords()(0, 1) == 0.5);
  CHECK(e.block.coords()(1, 0) == 1.0);
  CHECK(e.coverage(0) == 1.0);
  CHECK(e.coverage(1) == 0.5);
  CHECK(e.block.items()[1] == "dog zebra");
  CHECK_THROWS_AS(embed_statements({"dog", "zebra"}, t), IngestionError);
  CHECK_THROWS_AS(embed_statements({"dog", "!!"}, t), IngestionError);
}

TEST_CASE("cosine proxy") {
  Matrix x(3, 2);
  x << 1, 0, 1, 1, -1, 0;
  const ProxyMatrix p = cosine_proxy(Block({"a", "b", "c"}, x));
  CHECK(p.values()(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(p.values()(0, 2) == 0.0);
  CHECK(p.values()(1, 1) == 0.0);
  CHECK(p.source_name() == kCosineProxySource);
  Matrix z = x;
  z.row(2).setZero();
  CHECK_THROWS_AS(cosine_proxy(Block({"a", "b", "c"}, z)), IngestionError);
}

TEST_CASE("topic proxy") {
  TopicSpec spec;
  spec.topic_of = {{"a", "t1"}, {"b", "t1"}, {"c", "t2"}};
  const ProxyMatrix p = topic_proxy({"a", "b", "c"}, spec);
  CHECK(p.values()(0, 1) == 1.0);
  CHECK(p.values()(0, 2) == 0.15);
  CHECK(p.values()(2, 2) == 0.0);
  CHECK(p.source_name() == "topic");
  CHECK_THROWS_AS(topic_proxy({"a", "d"}, spec), IngestionError);
}

TEST_CASE("bundled block fixtures") {
  const BlockFixture thm = load_block_fixture(kData + "/theorem_statements.tsv");
  CHECK(thm.items.size() == 12);
  CHECK(thm.topics.size() == 12);
  CHECK(thm.items[5] == "Strict order followed by weak order gives strict order.");
  CHECK(thm.topics[5] == "order");
  const BlockFixture months = load_block_fixture(kData + "/months.txt");
  CHECK(months.items.size() == 12);
  CHECK(months.topics.empty());
  CHECK(load_block_fixture(kData + "/dog_wolf.txt").items == std::vector<std::string>{"dog", "wolf"});
  CHECK_THROWS_AS(load_block_fixture(write_temp("one.txt", "# c\nonly\n")), IngestionError);
}

TEST_CASE("bundled embeddings cover every fixture token") {
  const EmbeddingTable t = load_embeddings(kData + "/tiny_embeddings.txt");
  for (const char* f : {"/theorem_statements.tsv", "/months.txt", "/dog_wolf.txt"}) {
    const BlockFixture fx = load_block_fixture(kData + f);
    const EmbeddedStatements e = embed_statements(fx.items, t);
    CHECK(e.coverage.minCoeff() == 1.0);
  }
}

TEST_CASE("proxy csv") {
  const ProxyMatrix p = load_proxy_csv(write_temp("p.csv", "0,0.5\n0.5,0\n"), "file");
  CHECK(p.values()(0, 1) == 0.5);
  CHECK_THROWS_AS(load_proxy_csv(write_temp("p2.csv", "0,0.5\n0.4,0\n"), "file"), IngestionError);
  CHECK_THROWS_AS(load_proxy_csv(write_temp("p3.csv", "0,0.5,1\n0.5,0\n"), "file"), IngestionError);
  CHECK_THROWS_AS(load_proxy_csv(write_temp("p4.csv", "0,a\n0.5,0\n"), "file"), ParseError);
}
