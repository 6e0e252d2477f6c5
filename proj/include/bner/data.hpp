#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace bner {

struct Sentence {
    std::uint32_t id = 0;
    std::string doc;
    std::vector<std::string> tokens;

    int length() const { return static_cast<int>(tokens.size()); }
};

// Token span with inclusive end index and a category name.
struct GoldSpan {
    int start = 0;
    int end = 0;
    std::string category;

    friend bool operator==(const GoldSpan&, const GoldSpan&) = default;
    friend auto operator<=>(const GoldSpan&, const GoldSpan&) = default;
};

struct AnnotatedSentence {
    Sentence sentence;
    std::set<GoldSpan> gold;
};

using Split = std::vector<AnnotatedSentence>;

struct Corpus {
    Split train;
    Split dev;
    Split test;

    // Sorted deduplicated category names over all splits.
    std::vector<std::string> category_inventory() const;
};

// CoNLL column format: one token per line, whitespace-separated columns, the
// last column a BIO tag, blank line between sentences. IOB1 input (I-X opening
// an entity) is normalized to IOB2 with a warning.
Split read_conll(const std::string& path);
void write_conll(const Split& split, const std::string& path);

// JSON-lines standoff format: {"id":..., "tokens":[...],
// "entities":[{"start":...,"end":...,"category":...}]}, end inclusive.
Split read_spans(const std::string& path);
void write_spans(const Split& split, const std::string& path);

// Sniffs the file content: '{' starts JSON-lines, anything else is CoNLL.
Split read_corpus_file(const std::string& path);

// Gold spans of a flat corpus must be pairwise disjoint; nested corpora must
// be free of crossing (partially overlapping) pairs. Both throw DataError.
void validate_flat(const AnnotatedSentence& s);
void validate_nested(const AnnotatedSentence& s);

struct SynthOptions {
    enum class Kind { Flat, Nested };
    Kind kind = Kind::Flat;
    int size = 200;
    std::uint64_t seed = 1;
    std::uint32_t first_id = 0;
};

// Seeded pattern-based corpus over a 50-token vocabulary with PER and ORG
// entities; the nested variant wraps person mentions in organisation spans.
Split synth_corpus(const SynthOptions& opts);
std::vector<std::string> synth_vocabulary();

// Random embedding file for the synthetic vocabulary, text fastText format.
void write_synth_embeddings(const std::string& path, int dim, std::uint64_t seed);

}  // namespace bner
