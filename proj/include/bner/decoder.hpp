#pragma once

#include <vector>

#include "bner/scorer.hpp"

namespace bner {

struct Span {
    int start = 0;
    int end = 0;  // inclusive, start <= end

    friend bool operator==(const Span&, const Span&) = default;
};

// A span the model considers an entity: argmax category (never 0, the
// non-entity class) and the raw score of that category.
struct LabeledSpan {
    Span span;
    int category = 0;
    double score = 0.0;

    friend bool operator==(const LabeledSpan& a, const LabeledSpan& b) {
        return a.span == b.span && a.category == b.category;
    }
};

enum class DecodeMode { Nested, Flat };

// True iff a and b partially overlap without containment:
// s_a < s_b <= e_a < e_b or s_b < s_a <= e_b < e_a. Symmetric.
bool clashes(const Span& a, const Span& b);

// True iff one interval contains the other (equal boundaries included).
bool contains_or_inside(const Span& a, const Span& b);

// Per-span argmax over categories (ties -> lowest index), keeping spans whose
// argmax is not the non-entity class 0.
std::vector<LabeledSpan> label_spans(const ScoreTensor& t);

// Greedy ranked selection: candidates in (score desc, start asc, end desc,
// category asc) order; nested mode rejects boundary clashes, flat mode also
// rejects containment in either direction.
std::vector<LabeledSpan> decode(const ScoreTensor& t, DecodeMode mode);
std::vector<LabeledSpan> decode_candidates(std::vector<LabeledSpan> candidates, DecodeMode mode);

// Independently written re-implementation of the greedy procedure, used to
// cross-check decode. Guarded to short sentences; throws ShapeError above l=10.
std::vector<LabeledSpan> oracle_decode(const ScoreTensor& t, DecodeMode mode);

}  // namespace bner
