#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "bner/common.hpp"
#include "bner/decoder.hpp"
#include "bner/rng.hpp"

using namespace bner;

namespace {

ScoreTensor make_tensor(int l, int c, double non_entity_base = 1.0) {
    ScoreTensor t;
    t.length = l;
    t.categories = c;
    t.values.assign(static_cast<std::size_t>(l) * l * c, 0.0);
    for (int s = 0; s < l; ++s)
        for (int e = 0; e < l; ++e) t.at(s, e, 0) = non_entity_base;
    return t;
}

ScoreTensor random_tensor(Rng& rng, int max_l, int max_c) {
    int l = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_l)));
    int c = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_c - 1)));
    ScoreTensor t;
    t.length = l;
    t.categories = c;
    t.values.resize(static_cast<std::size_t>(l) * l * c);
    for (auto& v : t.values) v = rng.uniform(-2.0, 2.0);
    // Quantize so score ties actually happen and exercise the tie rules.
    for (auto& v : t.values) v = std::round(v * 4.0) / 4.0;
    return t;
}

std::set<std::tuple<int, int, int>> as_set(const std::vector<LabeledSpan>& spans) {
    std::set<std::tuple<int, int, int>> out;
    for (const auto& ls : spans) out.insert({ls.span.start, ls.span.end, ls.category});
    return out;
}

}  // namespace

TEST_CASE("clash follows the boundary-overlap definition") {
    // "the Bank of China": (0,2) and (1,3) clash.
    CHECK(clashes({0, 2}, {1, 3}));
    CHECK(clashes({1, 3}, {0, 2}));
    // Containment is not a clash.
    CHECK(!clashes({1, 3}, {2, 2}));
    CHECK(!clashes({2, 2}, {1, 3}));
    CHECK(!clashes({0, 1}, {2, 3}));
    CHECK(!clashes({1, 2}, {1, 2}));
}

TEST_CASE("clash matches an interval-arithmetic oracle on all pairs up to l=8") {
    for (int s1 = 0; s1 < 8; ++s1)
        for (int e1 = s1; e1 < 8; ++e1)
            for (int s2 = 0; s2 < 8; ++s2)
                for (int e2 = s2; e2 < 8; ++e2) {
                    bool overlap = std::max(s1, s2) <= std::min(e1, e2);
                    bool one_contains = (s1 <= s2 && e2 <= e1) || (s2 <= s1 && e1 <= e2);
                    bool expect = overlap && !one_contains;
                    CHECK(clashes({s1, e1}, {s2, e2}) == expect);
                }
}

TEST_CASE("contains_or_inside covers both directions and equality") {
    CHECK(contains_or_inside({0, 3}, {1, 2}));
    CHECK(contains_or_inside({1, 2}, {0, 3}));
    CHECK(contains_or_inside({1, 2}, {1, 2}));
    CHECK(!contains_or_inside({0, 1}, {2, 3}));
    CHECK(!contains_or_inside({0, 2}, {1, 3}));
}

TEST_CASE("label_spans keeps argmax entities only") {
    auto t = make_tensor(2, 3, 1.0);  // non-entity dominates everywhere
    CHECK(label_spans(t).empty());

    t.at(0, 1, 2) = 4.0;
    auto spans = label_spans(t);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].span == Span{0, 1});
    CHECK(spans[0].category == 2);
    CHECK(spans[0].score == 4.0);
}

TEST_CASE("label_spans single cell with PER winning") {
    auto t = make_tensor(1, 2, 0.1);
    t.at(0, 0, 1) = 0.9;
    auto spans = label_spans(t);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].category == 1);
    CHECK(spans[0].score == doctest::Approx(0.9));
}

TEST_CASE("label_spans resolves argmax ties toward the lowest category index") {
    auto t = make_tensor(1, 4, 0.0);
    t.at(0, 0, 1) = 2.0;
    t.at(0, 0, 2) = 2.0;
    t.at(0, 0, 3) = 2.0;
    auto spans = label_spans(t);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].category == 1);
}

TEST_CASE("worked nested/flat decode example") {
    // l=3, categories 0=none, 1=PER, 2=ORG. Argmax picks: (0,2)->ORG 5.0,
    // (1,2)->PER 4.0, (0,1)->PER 3.0; everything else non-entity.
    auto t = make_tensor(3, 3, 1.0);
    t.at(0, 2, 2) = 5.0;
    t.at(1, 2, 1) = 4.0;
    t.at(0, 1, 1) = 3.0;

    auto nested = as_set(decode(t, DecodeMode::Nested));
    // (1,2) nests inside (0,2); (0,1) clashes with accepted (1,2).
    CHECK(nested == std::set<std::tuple<int, int, int>>{{0, 2, 2}, {1, 2, 1}});

    auto flat = as_set(decode(t, DecodeMode::Flat));
    CHECK(flat == std::set<std::tuple<int, int, int>>{{0, 2, 2}});
}

TEST_CASE("empty candidate list and single candidate") {
    auto t = make_tensor(4, 3, 2.0);
    CHECK(decode(t, DecodeMode::Nested).empty());
    CHECK(decode(t, DecodeMode::Flat).empty());

    t.at(1, 2, 1) = 5.0;
    CHECK(decode(t, DecodeMode::Nested).size() == 1);
    CHECK(decode(t, DecodeMode::Flat).size() == 1);
}

TEST_CASE("oracle agrees on the worked example and guards long sentences") {
    auto t = make_tensor(3, 3, 1.0);
    t.at(0, 2, 2) = 5.0;
    t.at(1, 2, 1) = 4.0;
    t.at(0, 1, 1) = 3.0;
    CHECK(as_set(oracle_decode(t, DecodeMode::Nested)) == as_set(decode(t, DecodeMode::Nested)));
    CHECK(as_set(oracle_decode(t, DecodeMode::Flat)) == as_set(decode(t, DecodeMode::Flat)));

    auto big = make_tensor(11, 2, 1.0);
    CHECK_THROWS_AS(oracle_decode(big, DecodeMode::Flat), ShapeError);
}

TEST_CASE("decode equals oracle_decode on random tensors") {
    Rng rng(1234);
    for (int iter = 0; iter < 300; ++iter) {
        auto t = random_tensor(rng, 6, 4);
        for (auto mode : {DecodeMode::Nested, DecodeMode::Flat}) {
            auto fast = decode(t, mode);
            auto slow = oracle_decode(t, mode);
            CAPTURE(iter);
            CHECK(as_set(fast) == as_set(slow));
        }
    }
}

TEST_CASE("flat outputs are pairwise disjoint, nested outputs never cross") {
    Rng rng(99);
    for (int iter = 0; iter < 500; ++iter) {
        auto t = random_tensor(rng, 7, 4);
        auto flat = decode(t, DecodeMode::Flat);
        for (std::size_t i = 0; i < flat.size(); ++i)
            for (std::size_t j = i + 1; j < flat.size(); ++j) {
                bool disjoint = flat[i].span.end < flat[j].span.start ||
                                flat[j].span.end < flat[i].span.start;
                CHECK(disjoint);
            }
        auto nested = decode(t, DecodeMode::Nested);
        for (std::size_t i = 0; i < nested.size(); ++i)
            for (std::size_t j = i + 1; j < nested.size(); ++j)
                CHECK(!clashes(nested[i].span, nested[j].span));
        // Every flat output is also a feasible nested configuration.
        for (std::size_t i = 0; i < flat.size(); ++i)
            for (std::size_t j = i + 1; j < flat.size(); ++j)
                CHECK(!clashes(flat[i].span, flat[j].span));
    }
}

TEST_CASE("adding a lowest-scored candidate never changes higher-ranked selections") {
    Rng rng(7);
    for (int iter = 0; iter < 200; ++iter) {
        auto t = random_tensor(rng, 6, 4);
        auto candidates = label_spans(t);
        if (candidates.empty()) continue;

        double min_score = candidates[0].score;
        for (const auto& c : candidates) min_score = std::min(min_score, c.score);
        LabeledSpan low;
        low.span = {0, static_cast<int>(rng.below(static_cast<std::uint64_t>(t.length)))};
        low.category = 1;
        low.score = min_score - 1.0;

        for (auto mode : {DecodeMode::Nested, DecodeMode::Flat}) {
            auto base = as_set(decode_candidates(candidates, mode));
            auto extended = candidates;
            extended.push_back(low);
            auto with_low = as_set(decode_candidates(extended, mode));
            // Remove the added candidate if it was selected; the rest must match.
            with_low.erase({low.span.start, low.span.end, low.category});
            auto base_minus = base;
            base_minus.erase({low.span.start, low.span.end, low.category});
            CHECK(with_low == base_minus);
        }
    }
}

TEST_CASE("equal-score candidates rank by start asc, end desc, category asc") {
    std::vector<LabeledSpan> cands;
    cands.push_back({{2, 3}, 1, 1.0});
    cands.push_back({{0, 0}, 2, 1.0});
    cands.push_back({{0, 3}, 1, 1.0});
    auto out = decode_candidates(cands, DecodeMode::Nested);
    // (0,3) ranks before (0,0) (end desc) and before (2,3) (start asc); all
    // three are compatible under nesting.
    REQUIRE(out.size() == 3);
    CHECK(out[0].span == Span{0, 3});

    // Repeated runs give identical results.
    auto again = decode_candidates(cands, DecodeMode::Nested);
    CHECK(as_set(out) == as_set(again));
}
