#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "lifelora/embed.hpp"
#include "oracles.hpp"

using namespace lifelora;

TEST_CASE("embed is deterministic and unit length") {
    HashedNgramProvider p;
    auto a = p.embed("grab the yellow doll");
    auto b = p.embed("grab the yellow doll");
    CHECK(a.vector == b.vector);
    CHECK(a.source_digest == b.source_digest);
    CHECK(std::abs(norm2(a.vector) - 1.0) <= 1e-10);
}

TEST_CASE("embed rejects empty text") {
    HashedNgramProvider p;
    CHECK_THROWS_AS(p.embed(""), UsageError);
    CHECK_THROWS_AS(p.embed("   \t\n"), UsageError);
}

TEST_CASE("embed invariant to case and outer whitespace") {
    HashedNgramProvider p;
    auto a = p.embed("Turn Right Tap");
    auto b = p.embed("  turn right tap \n");
    CHECK(a.vector == b.vector);
}

TEST_CASE("near-paraphrases are closer than unrelated instructions") {
    HashedNgramProvider p;
    auto yellow = p.embed("grab the yellow doll");
    auto blue = p.embed("grab the blue doll");
    auto tap = p.embed("turn right tap");
    const double close = cosine(yellow.vector, blue.vector);
    const double far = cosine(yellow.vector, tap.vector);
    CHECK(close > far);
}

TEST_CASE("embed_corpus rows match individual embeddings") {
    HashedNgramProvider p;
    auto single = p.embed("push the maroon button");
    Mat x = embed_corpus(p, {"push the maroon button"});
    REQUIRE(x.rows() == 1);
    REQUIRE(x.cols() == p.dim());
    for (int j = 0; j < x.cols(); ++j) CHECK(x(0, j) == single.vector[j]);

    Mat dup = embed_corpus(p, {"close the blue jar", "close the blue jar"});
    for (int j = 0; j < dup.cols(); ++j) CHECK(dup(0, j) == dup(1, j));
}

TEST_CASE("embed_corpus names the empty index") {
    HashedNgramProvider p;
    try {
        embed_corpus(p, {"ok", " ", "also ok"});
        FAIL("expected UsageError");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("index 1") != std::string::npos);
    }
}

TEST_CASE("corpus row order follows input order") {
    HashedNgramProvider p;
    std::vector<std::string> texts{"screw in the azure light bulb", "sweep dirt to dustpan",
                                   "stack 2 magenta blocks"};
    Mat x = embed_corpus(p, texts);
    Mat y = embed_corpus(p, {texts[2], texts[0], texts[1]});
    for (int j = 0; j < x.cols(); ++j) {
        CHECK(x(0, j) == y(1, j));
        CHECK(x(1, j) == y(2, j));
        CHECK(x(2, j) == y(0, j));
    }
}

TEST_CASE("same-skill paraphrases cluster against cross-skill text") {
    HashedNgramProvider p;
    std::vector<std::string> shifts{
        "shift the beads forward by two",       "rotate the beads two steps",
        "advance every bead by two positions",  "move the beads ahead two places",
        "shift all beads two slots forward",    "step the beads onward by two",
        "rotate each bead forward two notches", "push the beads two spots ahead",
    };
    std::vector<std::string> other{
        "reverse the marbles end to end",
        "flip the order of the marbles",
        "mirror the marble sequence",
        "swap neighboring tiles pairwise",
    };
    double within = 0.0;
    int nw = 0;
    std::vector<InstructionEmbedding> se;
    for (const auto& s : shifts) se.push_back(p.embed(s));
    for (std::size_t i = 0; i < se.size(); ++i)
        for (std::size_t j = i + 1; j < se.size(); ++j) {
            within += cosine(se[i].vector, se[j].vector);
            ++nw;
        }
    within /= nw;

    double cross = 0.0;
    int nc = 0;
    for (const auto& s : shifts)
        for (const auto& o : other) {
            cross += cosine(p.embed(s).vector, p.embed(o).vector);
            ++nc;
        }
    cross /= nc;
    CHECK(within > cross);
}

TEST_CASE("precomputed provider round trip and validation") {
    const char* path = "test_embed_precomputed.json";
    {
        std::ofstream out(path);
        const double r = 1.0 / std::sqrt(2.0);
        out << "{\"lift the crate\": [" << r << ", " << r << ", 0, 0],"
            << " \"drop the crate\": [0, 0, 1, 0]}";
    }
    PrecomputedProvider p = PrecomputedProvider::load(path);
    CHECK(p.dim() == 4);
    auto e = p.embed("Lift The Crate");
    CHECK(e.vector[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK_THROWS_AS(p.embed("unknown instruction"), UsageError);

    const char* bad = "test_embed_bad.json";
    {
        std::ofstream out(bad);
        out << "{\"a b\": [1, 1]}"; // not unit length
    }
    CHECK_THROWS_AS(PrecomputedProvider::load(bad), FormatError);
    {
        std::ofstream out(bad);
        out << "{\"a b\": [1, 0], \"c d\": [1, 0, 0]}"; // ragged dims
    }
    CHECK_THROWS_AS(PrecomputedProvider::load(bad), FormatError);
    CHECK_THROWS_AS(PrecomputedProvider::load("no_such_file.json"), IoError);
    std::remove(path);
    std::remove(bad);
}
