#include "bner/decoder.hpp"

#include <algorithm>

#include "bner/common.hpp"

namespace bner {

bool clashes(const Span& a, const Span& b) {
    return (a.start < b.start && b.start <= a.end && a.end < b.end) ||
           (b.start < a.start && a.start <= b.end && b.end < a.end);
}

bool contains_or_inside(const Span& a, const Span& b) {
    return (a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end);
}

std::vector<LabeledSpan> label_spans(const ScoreTensor& t) {
    std::vector<LabeledSpan> out;
    for (int s = 0; s < t.length; ++s)
        for (int e = s; e < t.length; ++e) {
            int best = 0;
            double best_score = t.at(s, e, 0);
            for (int k = 1; k < t.categories; ++k)
                if (t.at(s, e, k) > best_score) {
                    best_score = t.at(s, e, k);
                    best = k;
                }
            if (best != 0) out.push_back({{s, e}, best, best_score});
        }
    return out;
}

std::vector<LabeledSpan> decode_candidates(std::vector<LabeledSpan> candidates, DecodeMode mode) {
    std::sort(candidates.begin(), candidates.end(), [](const LabeledSpan& a, const LabeledSpan& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.span.start != b.span.start) return a.span.start < b.span.start;
        if (a.span.end != b.span.end) return a.span.end > b.span.end;
        return a.category < b.category;
    });

    std::vector<LabeledSpan> selected;
    for (const auto& cand : candidates) {
        bool ok = true;
        for (const auto& acc : selected) {
            if (clashes(cand.span, acc.span) ||
                (mode == DecodeMode::Flat && contains_or_inside(cand.span, acc.span))) {
                ok = false;
                break;
            }
        }
        if (ok) selected.push_back(cand);
    }
    return selected;
}

std::vector<LabeledSpan> decode(const ScoreTensor& t, DecodeMode mode) {
    return decode_candidates(label_spans(t), mode);
}

// --- oracle ------------------------------------------------------------------
// Deliberately re-derived rather than shared with decode: interval arithmetic
// predicates and a selection-sort ranking loop instead of comparator + std::sort.

namespace {

bool oracle_overlap(const Span& a, const Span& b) {
    int lo = a.start > b.start ? a.start : b.start;
    int hi = a.end < b.end ? a.end : b.end;
    return lo <= hi;
}

bool oracle_subset(const Span& inner, const Span& outer) {
    return outer.start <= inner.start && inner.end <= outer.end;
}

bool oracle_clash(const Span& a, const Span& b) {
    return oracle_overlap(a, b) && !oracle_subset(a, b) && !oracle_subset(b, a);
}

bool oracle_ranked_before(const LabeledSpan& a, const LabeledSpan& b) {
    if (a.score > b.score) return true;
    if (a.score < b.score) return false;
    if (a.span.start < b.span.start) return true;
    if (a.span.start > b.span.start) return false;
    if (a.span.end > b.span.end) return true;
    if (a.span.end < b.span.end) return false;
    return a.category < b.category;
}

}  // namespace

std::vector<LabeledSpan> oracle_decode(const ScoreTensor& t, DecodeMode mode) {
    if (t.length > 10)
        throw ShapeError("oracle_decode is guarded to sentences of length <= 10, got " +
                         std::to_string(t.length));

    // Candidates: every valid span whose best category beats the non-entity
    // class; ties broken toward the lowest category index via strict >.
    std::vector<LabeledSpan> pending;
    for (int s = 0; s < t.length; ++s)
        for (int e = s; e < t.length; ++e) {
            int best = 0;
            for (int k = 1; k < t.categories; ++k)
                if (t.at(s, e, k) > t.at(s, e, best)) best = k;
            if (best != 0) pending.push_back({{s, e}, best, t.at(s, e, best)});
        }

    std::vector<LabeledSpan> accepted;
    while (!pending.empty()) {
        std::size_t top = 0;
        for (std::size_t i = 1; i < pending.size(); ++i)
            if (oracle_ranked_before(pending[i], pending[top])) top = i;
        LabeledSpan cand = pending[static_cast<std::ptrdiff_t>(top)];
        pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(top));

        bool rejected = false;
        for (const auto& acc : accepted) {
            if (oracle_clash(cand.span, acc.span)) rejected = true;
            if (mode == DecodeMode::Flat &&
                (oracle_subset(cand.span, acc.span) || oracle_subset(acc.span, cand.span)))
                rejected = true;
        }
        if (!rejected) accepted.push_back(cand);
    }
    return accepted;
}

}  // namespace bner
