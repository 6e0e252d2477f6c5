#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "bner/common.hpp"
#include "bner/embeddings.hpp"
#include "test_util.hpp"

using namespace bner;
using testutil::fd_max_rel_err;
using testutil::random_weights;

namespace {

std::string temp_path(const std::string& name) {
    return std::string("emb_test_") + name;
}

CharCnnParams make_char_params(Rng& rng, int vocab, int emb, int channels,
                               std::vector<int> widths) {
    CharCnnParams p;
    p.emb_dim = emb;
    p.channels = channels;
    p.widths = std::move(widths);
    p.char_table = Tensor::zeros({vocab, emb}, true);
    for (auto& v : p.char_table->data) v = rng.uniform(-0.5, 0.5);
    for (int j = 0; j < emb; ++j) p.char_table->at(CharVocab::kPad, j) = 0.0;
    for (int w : p.widths) {
        auto f = Tensor::zeros({w * emb, channels}, true);
        for (auto& v : f->data) v = rng.uniform(-0.5, 0.5);
        auto b = Tensor::zeros({channels}, true);
        for (auto& v : b->data) v = rng.uniform(-0.5, 0.5);
        p.filters.push_back(f);
        p.biases.push_back(b);
    }
    return p;
}

}  // namespace

TEST_CASE("static table lookup, OOV and case sensitivity") {
    std::string path = temp_path("vectors.txt");
    {
        std::ofstream out(path);
        out << "3 4\n";
        out << "China 1 2 3 4\n";
        out << "china 5 6 7 8\n";
        out << "bank 0.5 -0.5 0.25 -0.25\n";
    }
    auto table = StaticEmbeddingTable::load(path, 4);
    CHECK(table.size() == 3);
    CHECK(table.lookup("China") == std::vector<double>{1, 2, 3, 4});
    CHECK(table.lookup("china") == std::vector<double>{5, 6, 7, 8});
    CHECK(table.lookup("owt") == std::vector<double>{0, 0, 0, 0});
    std::remove(path.c_str());
}

TEST_CASE("static table accepts headerless files and rejects ragged rows") {
    std::string path = temp_path("noheader.txt");
    {
        std::ofstream out(path);
        out << "alpha 1 2\n";
        out << "beta 3 4\n";
    }
    auto table = StaticEmbeddingTable::load(path, 2);
    CHECK(table.dim() == 2);
    CHECK(table.lookup("beta") == std::vector<double>{3, 4});

    {
        std::ofstream out(path);
        out << "alpha 1 2\n";
        out << "beta 3\n";
    }
    CHECK_THROWS_AS(StaticEmbeddingTable::load(path, 2), DataError);

    {
        std::ofstream out(path);
        out << "alpha 1 2\n";
    }
    CHECK_THROWS_AS(StaticEmbeddingTable::load(path, 7), ConfigError);
    std::remove(path.c_str());
}

TEST_CASE("char vocab maps unseen characters to UNK and round-trips") {
    CharVocab v;
    v.add_token("abc");
    v.add_token("na\xC3\xAFve");  // naïve
    CHECK(v.index_of('a') != CharVocab::kUnk);
    CHECK(v.index_of('z') == CharVocab::kUnk);
    CHECK(v.index_of(0xEF) != CharVocab::kUnk);

    auto cps = v.codepoints();
    auto v2 = CharVocab::from_codepoints(cps);
    for (std::uint32_t cp : cps) CHECK(v2.index_of(cp) == v.index_of(cp));
    CHECK(v2.size() == v.size());
}

TEST_CASE("utf8 decoding") {
    auto cps = utf8_codepoints("a\xC3\x9F\xE4\xB8\xAD");  // a ß 中
    REQUIRE(cps.size() == 3);
    CHECK(cps[0] == 0x61);
    CHECK(cps[1] == 0xDF);
    CHECK(cps[2] == 0x4E2D);
}

TEST_CASE("char cnn with zero filters and biases is the zero vector") {
    Rng rng(3);
    auto p = make_char_params(rng, 6, 8, 50, {3, 4, 5});
    for (auto& f : p.filters) std::fill(f->data.begin(), f->data.end(), 0.0);
    for (auto& b : p.biases) std::fill(b->data.begin(), b->data.end(), 0.0);

    Graph g;
    auto out = char_cnn(g, {2, 3, 4}, p);
    REQUIRE(out->size() == 150);
    for (int i = 0; i < out->size(); ++i) CHECK(out->at(i) == 0.0);
}

TEST_CASE("char cnn single-character token is defined via zero padding") {
    Rng rng(5);
    auto p = make_char_params(rng, 6, 4, 3, {3, 4, 5});
    Graph g;
    auto out = char_cnn(g, {2}, p);
    REQUIRE(out->size() == 9);
    for (int i = 0; i < out->size(); ++i) CHECK(std::isfinite(out->at(i)));
}

TEST_CASE("char cnn ignores trailing PAD characters") {
    Rng rng(7);
    auto p = make_char_params(rng, 6, 4, 3, {2, 3});
    Graph g;
    auto base = char_cnn(g, {2, 3, 4}, p);
    auto padded = char_cnn(g, {2, 3, 4, CharVocab::kPad, CharVocab::kPad}, p);
    CHECK(base->data == padded->data);
}

TEST_CASE("char cnn rejects empty tokens") {
    Rng rng(9);
    auto p = make_char_params(rng, 6, 4, 3, {2, 3});
    Graph g;
    CHECK_THROWS_AS(char_cnn(g, {}, p), DataError);
}

TEST_CASE("char cnn gradient w.r.t. the char table matches finite differences") {
    Rng rng(11);
    auto p = make_char_params(rng, 6, 3, 4, {2, 3});
    std::vector<int> token = {2, 4, 3, 5};
    auto w = random_weights(8, rng);
    double err = fd_max_rel_err(
        {p.char_table, p.filters[0], p.filters[1], p.biases[0], p.biases[1]},
        [&](Graph& g) { return g.sum_weighted(char_cnn(g, token, p), w); });
    CHECK(err < 1e-4);
}

TEST_CASE("contextual vector file round-trip and alignment errors") {
    std::string path = temp_path("vectors.ctxv");
    std::vector<std::pair<std::uint32_t, std::vector<float>>> records;
    records.push_back({7, {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f}});  // 3 tokens x dim 2
    records.push_back({9, {0.5f, -0.5f}});                         // 1 token
    ContextualVectors::write(path, 2, records);

    auto cv = ContextualVectors::load(path);
    CHECK(cv.dim() == 2);
    CHECK(cv.has(7));
    CHECK(!cv.has(8));
    CHECK(cv.tokens_vector(7, 1, 3) == std::vector<double>{3.0, 4.0});

    // Count mismatch names the sentence and the requested token position.
    try {
        cv.tokens_vector(7, 0, 5);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        std::string msg = e.what();
        CHECK(msg.find("sentence 7") != std::string::npos);
        CHECK(msg.find("token 0") != std::string::npos);
    }
    CHECK_THROWS_AS(cv.tokens_vector(8, 0, 1), DataError);
    std::remove(path.c_str());
}
