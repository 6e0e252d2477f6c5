#include "bner/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bner/common.hpp"
#include "bner/rng.hpp"

namespace bner {

namespace {

bool spans_cross(const GoldSpan& a, const GoldSpan& b) {
    return (a.start < b.start && b.start <= a.end && a.end < b.end) ||
           (b.start < a.start && a.start <= b.end && b.end < a.end);
}

bool spans_overlap(const GoldSpan& a, const GoldSpan& b) {
    return std::max(a.start, b.start) <= std::min(a.end, b.end);
}

void check_span_bounds(const GoldSpan& sp, int len, std::uint32_t sid) {
    if (sp.start < 0 || sp.end >= len || sp.start > sp.end)
        throw DataError("sentence " + std::to_string(sid) + ": span (" +
                        std::to_string(sp.start) + "," + std::to_string(sp.end) +
                        ") out of range for " + std::to_string(len) + " tokens");
}

}  // namespace

std::vector<std::string> Corpus::category_inventory() const {
    std::set<std::string> names;
    for (const Split* split : {&train, &dev, &test})
        for (const auto& s : *split)
            for (const auto& g : s.gold) names.insert(g.category);
    return {names.begin(), names.end()};
}

void validate_flat(const AnnotatedSentence& s) {
    std::vector<GoldSpan> spans(s.gold.begin(), s.gold.end());
    for (std::size_t i = 0; i < spans.size(); ++i)
        for (std::size_t j = i + 1; j < spans.size(); ++j)
            if (spans_overlap(spans[i], spans[j]))
                throw DataError("sentence " + std::to_string(s.sentence.id) +
                                ": overlapping spans in flat annotation");
}

void validate_nested(const AnnotatedSentence& s) {
    std::vector<GoldSpan> spans(s.gold.begin(), s.gold.end());
    for (std::size_t i = 0; i < spans.size(); ++i)
        for (std::size_t j = i + 1; j < spans.size(); ++j)
            if (spans_cross(spans[i], spans[j]))
                throw DataError("sentence " + std::to_string(s.sentence.id) +
                                ": crossing spans (" + std::to_string(spans[i].start) + "," +
                                std::to_string(spans[i].end) + ") and (" +
                                std::to_string(spans[j].start) + "," +
                                std::to_string(spans[j].end) + ")");
}

Split read_conll(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CoNLL file: " + path);

    Split out;
    std::vector<std::string> tokens;
    std::vector<std::string> tags;
    std::string line;
    int line_no = 0;

    auto flush_sentence = [&] {
        if (tokens.empty()) return;
        AnnotatedSentence s;
        s.sentence.id = static_cast<std::uint32_t>(out.size());
        s.sentence.tokens = tokens;
        // Contiguous B-X (I-X)* runs become spans; a bare I-X opener is IOB1.
        int start = -1;
        std::string cat;
        auto close_run = [&](int end) {
            if (start >= 0) s.gold.insert({start, end, cat});
            start = -1;
        };
        for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
            const std::string& t = tags[static_cast<std::size_t>(i)];
            if (t == "O") {
                close_run(i - 1);
            } else if (t.size() > 2 && (t[0] == 'B' || t[0] == 'I') && t[1] == '-') {
                std::string tcat = t.substr(2);
                if (t[0] == 'B') {
                    close_run(i - 1);
                    start = i;
                    cat = tcat;
                } else if (start >= 0 && tcat == cat) {
                    // continuation
                } else {
                    log_warn(path + ": I-" + tcat + " without opener at token " +
                             std::to_string(i) + " of sentence " +
                             std::to_string(s.sentence.id) + ", reading as B-" + tcat);
                    close_run(i - 1);
                    start = i;
                    cat = tcat;
                }
            } else {
                throw DataError(path + ": bad tag '" + t + "' in sentence " +
                                std::to_string(s.sentence.id));
            }
        }
        close_run(static_cast<int>(tags.size()) - 1);
        out.push_back(std::move(s));
        tokens.clear();
        tags.clear();
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream cols(line);
        std::vector<std::string> fields;
        std::string f;
        while (cols >> f) fields.push_back(f);
        if (fields.empty()) {
            flush_sentence();
            continue;
        }
        if (fields.size() < 2)
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": expected token and BIO tag columns");
        tokens.push_back(fields.front());
        tags.push_back(fields.back());
    }
    flush_sentence();
    return out;
}

void write_conll(const Split& split, const std::string& path) {
    for (const auto& s : split) validate_flat(s);

    std::ofstream out(path);
    if (!out) throw DataError("cannot write CoNLL file: " + path);
    for (const auto& s : split) {
        std::vector<std::string> tags(s.sentence.tokens.size(), "O");
        for (const auto& g : s.gold) {
            check_span_bounds(g, s.sentence.length(), s.sentence.id);
            tags[static_cast<std::size_t>(g.start)] = "B-" + g.category;
            for (int i = g.start + 1; i <= g.end; ++i)
                tags[static_cast<std::size_t>(i)] = "I-" + g.category;
        }
        for (std::size_t i = 0; i < tags.size(); ++i)
            out << s.sentence.tokens[i] << ' ' << tags[i] << '\n';
        out << '\n';
    }
}

Split read_spans(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open span file: " + path);

    Split out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        AnnotatedSentence s;
        try {
            s.sentence.id = j.at("id").get<std::uint32_t>();
            s.sentence.tokens = j.at("tokens").get<std::vector<std::string>>();
            if (j.contains("doc")) s.sentence.doc = j["doc"].get<std::string>();
            for (const auto& e : j.at("entities")) {
                GoldSpan sp{e.at("start").get<int>(), e.at("end").get<int>(),
                            e.at("category").get<std::string>()};
                check_span_bounds(sp, s.sentence.length(), s.sentence.id);
                s.gold.insert(sp);
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (s.sentence.tokens.empty())
            throw DataError(path + ":" + std::to_string(line_no) + ": empty token list");
        validate_nested(s);
        out.push_back(std::move(s));
    }
    return out;
}

void write_spans(const Split& split, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write span file: " + path);
    for (const auto& s : split) {
        validate_nested(s);
        nlohmann::ordered_json j;
        j["id"] = s.sentence.id;
        if (!s.sentence.doc.empty()) j["doc"] = s.sentence.doc;
        j["tokens"] = s.sentence.tokens;
        auto ents = nlohmann::ordered_json::array();
        for (const auto& g : s.gold) {
            check_span_bounds(g, s.sentence.length(), s.sentence.id);
            ents.push_back({{"start", g.start}, {"end", g.end}, {"category", g.category}});
        }
        j["entities"] = std::move(ents);
        out << j.dump() << '\n';
    }
}

Split read_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);
    char c = 0;
    while (in.get(c) && (c == ' ' || c == '\t' || c == '\n' || c == '\r')) {
    }
    in.close();
    return c == '{' ? read_spans(path) : read_conll(path);
}

// --- synthetic corpus ------------------------------------------------------

namespace {

const std::vector<std::string>& person_tokens() {
    static const std::vector<std::string> v = {"aldo",  "berta", "carla", "dmitri", "elena",
                                               "farid", "gemma", "hiro",  "ines",   "jonas"};
    return v;
}

const std::vector<std::string>& org_tokens() {
    static const std::vector<std::string> v = {"acme",   "borex",  "cantor", "deltaco", "exim",
                                               "fabrik", "gruppo", "helix",  "imexo",   "juno"};
    return v;
}

// "group" and "of" appear only inside the nested construct so that span
// boundaries stay decidable from the surface tokens.
const std::vector<std::string>& filler_tokens() {
    static const std::vector<std::string> v = {
        "the", "a",     "and",   "at",    "in",    "with",  "met",  "saw",    "near", "old",
        "new", "small", "big",   "from",  "to",    "for",   "but",  "then",   "now",  "later",
        "again", "north", "south", "office", "city", "river", "market", "house"};
    return v;
}

}  // namespace

// 10 person + 10 org + 28 filler + 2 construct tokens = 50 types.
std::vector<std::string> synth_vocabulary() {
    std::vector<std::string> v;
    for (const auto& t : person_tokens()) v.push_back(t);
    for (const auto& t : org_tokens()) v.push_back(t);
    for (const auto& t : filler_tokens()) v.push_back(t);
    v.push_back("group");
    v.push_back("of");
    return v;
}

Split synth_corpus(const SynthOptions& opts) {
    Rng rng(Rng::derive(opts.seed, 0xC0));
    Split out;
    out.reserve(static_cast<std::size_t>(opts.size));

    for (int n = 0; n < opts.size; ++n) {
        AnnotatedSentence s;
        s.sentence.id = opts.first_id + static_cast<std::uint32_t>(n);
        auto& toks = s.sentence.tokens;

        auto emit_fillers = [&](int lo, int hi) {
            int k = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
            for (int i = 0; i < k; ++i)
                toks.push_back(filler_tokens()[rng.below(filler_tokens().size())]);
        };
        auto emit_run = [&](const std::vector<std::string>& pool, const std::string& cat) {
            int len = 1 + static_cast<int>(rng.below(2));
            int start = static_cast<int>(toks.size());
            for (int i = 0; i < len; ++i) toks.push_back(pool[rng.below(pool.size())]);
            s.gold.insert({start, start + len - 1, cat});
        };

        int chunks = 1 + static_cast<int>(rng.below(3));
        emit_fillers(0, 1);
        for (int ch = 0; ch < chunks; ++ch) {
            if (ch > 0) emit_fillers(1, 1);  // a filler always separates entities
            bool nested_chunk =
                opts.kind == SynthOptions::Kind::Nested && rng.below(10) < 3;
            if (nested_chunk) {
                int start = static_cast<int>(toks.size());
                toks.push_back("group");
                toks.push_back("of");
                toks.push_back(person_tokens()[rng.below(person_tokens().size())]);
                s.gold.insert({start, start + 2, "ORG"});
                s.gold.insert({start + 2, start + 2, "PER"});
            } else if (rng.below(2) == 0) {
                emit_run(person_tokens(), "PER");
            } else {
                emit_run(org_tokens(), "ORG");
            }
        }
        emit_fillers(0, 1);
        out.push_back(std::move(s));
    }
    return out;
}

void write_synth_embeddings(const std::string& path, int dim, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write embedding file: " + path);
    auto vocab = synth_vocabulary();
    Rng rng(Rng::derive(seed, 0xE3));
    out << vocab.size() << ' ' << dim << '\n';
    char buf[32];
    for (const auto& tok : vocab) {
        out << tok;
        for (int i = 0; i < dim; ++i) {
            std::snprintf(buf, sizeof(buf), " %.6f", rng.uniform(-0.5, 0.5));
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace bner
