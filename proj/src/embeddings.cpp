#include "bner/embeddings.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "bner/common.hpp"

namespace bner {

std::vector<std::uint32_t> utf8_codepoints(const std::string& s) {
    std::vector<std::uint32_t> out;
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char b = static_cast<unsigned char>(s[i]);
        std::uint32_t cp = 0xFFFD;
        std::size_t len = 1;
        if (b < 0x80) {
            cp = b;
        } else if ((b >> 5) == 0x6 && i + 1 < s.size()) {
            cp = static_cast<std::uint32_t>(b & 0x1F) << 6 |
                 (static_cast<unsigned char>(s[i + 1]) & 0x3F);
            len = 2;
        } else if ((b >> 4) == 0xE && i + 2 < s.size()) {
            cp = static_cast<std::uint32_t>(b & 0x0F) << 12 |
                 static_cast<std::uint32_t>(static_cast<unsigned char>(s[i + 1]) & 0x3F) << 6 |
                 (static_cast<unsigned char>(s[i + 2]) & 0x3F);
            len = 3;
        } else if ((b >> 3) == 0x1E && i + 3 < s.size()) {
            cp = static_cast<std::uint32_t>(b & 0x07) << 18 |
                 static_cast<std::uint32_t>(static_cast<unsigned char>(s[i + 1]) & 0x3F) << 12 |
                 static_cast<std::uint32_t>(static_cast<unsigned char>(s[i + 2]) & 0x3F) << 6 |
                 (static_cast<unsigned char>(s[i + 3]) & 0x3F);
            len = 4;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

StaticEmbeddingTable StaticEmbeddingTable::load(const std::string& path, int expected_dim) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding file: " + path);

    StaticEmbeddingTable table;
    std::vector<double> values;
    std::string line;
    int line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string token;
        ls >> token;
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (first) {
            first = false;
            // Optional "<count> <dim>" header: one numeric column, numeric token.
            if (row.size() == 1 && token.find_first_not_of("0123456789") == std::string::npos)
                continue;
        }
        if (table.dim_ == 0) table.dim_ = static_cast<int>(row.size());
        if (row.empty() || static_cast<int>(row.size()) != table.dim_)
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(table.dim_) + " values for token '" + token + "'");
        if (table.vocab_.count(token)) continue;  // keep the first occurrence
        table.vocab_[token] = static_cast<int>(table.vocab_.size());
        values.insert(values.end(), row.begin(), row.end());
    }
    if (table.dim_ == 0) throw DataError("embedding file has no vectors: " + path);
    if (expected_dim > 0 && table.dim_ != expected_dim)
        throw ConfigError("embedding file " + path + " has dim " + std::to_string(table.dim_) +
                          ", configuration expects " + std::to_string(expected_dim));
    table.matrix_ = Tensor::of({static_cast<int>(table.vocab_.size()), table.dim_},
                               std::move(values));
    table.matrix_->name = "static_table";
    return table;
}

StaticEmbeddingTable StaticEmbeddingTable::from_rows(const std::vector<std::string>& tokens,
                                                     int dim, std::vector<double> values) {
    StaticEmbeddingTable table;
    table.dim_ = dim;
    for (const auto& t : tokens)
        if (!table.vocab_.count(t)) table.vocab_[t] = static_cast<int>(table.vocab_.size());
    if (values.empty()) values.assign(table.vocab_.size() * static_cast<std::size_t>(dim), 0.0);
    table.matrix_ =
        Tensor::of({static_cast<int>(table.vocab_.size()), dim}, std::move(values));
    table.matrix_->name = "static_table";
    return table;
}

std::vector<std::string> StaticEmbeddingTable::tokens_in_row_order() const {
    std::vector<std::string> out(vocab_.size());
    for (const auto& [tok, row] : vocab_) out[static_cast<std::size_t>(row)] = tok;
    return out;
}

std::vector<double> StaticEmbeddingTable::lookup(const std::string& token) const {
    std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
    auto it = vocab_.find(token);
    if (it != vocab_.end()) {
        const double* row = matrix_->data.data() + static_cast<std::size_t>(it->second) * dim_;
        std::copy(row, row + dim_, out.begin());
    }
    return out;
}

int StaticEmbeddingTable::row_of(const std::string& token) const {
    auto it = vocab_.find(token);
    return it == vocab_.end() ? -1 : it->second;
}

void CharVocab::add_token(const std::string& token) {
    for (std::uint32_t cp : utf8_codepoints(token))
        if (!chars_.count(cp)) {
            int next = static_cast<int>(chars_.size()) + 2;
            chars_[cp] = next;
        }
}

int CharVocab::index_of(std::uint32_t codepoint) const {
    auto it = chars_.find(codepoint);
    return it == chars_.end() ? kUnk : it->second;
}

std::vector<std::uint32_t> CharVocab::codepoints() const {
    // chars_ iterates in codepoint order but indices follow insertion; emit
    // by index so round-trips preserve the mapping.
    std::vector<std::uint32_t> out(chars_.size());
    for (const auto& [cp, idx] : chars_) out[static_cast<std::size_t>(idx - 2)] = cp;
    return out;
}

CharVocab CharVocab::from_codepoints(const std::vector<std::uint32_t>& cps) {
    CharVocab v;
    for (std::uint32_t cp : cps) {
        int next = static_cast<int>(v.chars_.size()) + 2;
        v.chars_[cp] = next;
    }
    return v;
}

TensorPtr char_cnn(Graph& g, const std::vector<int>& char_indices, const CharCnnParams& params) {
    if (char_indices.empty()) throw DataError("char_cnn called on an empty token");

    int n = static_cast<int>(char_indices.size());
    // Drop trailing PADs so provided padding never shifts the window anchors.
    while (n > 1 && char_indices[static_cast<std::size_t>(n - 1)] == CharVocab::kPad) --n;

    std::vector<TensorPtr> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        rows.push_back(g.row(params.char_table, char_indices[static_cast<std::size_t>(i)]));
    auto zero = Tensor::zeros({params.emb_dim});

    std::vector<TensorPtr> pooled;
    for (std::size_t wi = 0; wi < params.widths.size(); ++wi) {
        int w = params.widths[wi];
        // One window anchored at each character, zero rows past the token end.
        std::vector<TensorPtr> windows;
        windows.reserve(static_cast<std::size_t>(n));
        for (int p = 0; p < n; ++p) {
            std::vector<TensorPtr> parts;
            parts.reserve(static_cast<std::size_t>(w));
            for (int k = 0; k < w; ++k)
                parts.push_back(p + k < n ? rows[static_cast<std::size_t>(p + k)] : zero);
            windows.push_back(g.concat(parts));
        }
        auto stacked = g.stack_rows(windows);                       // n x (w*emb)
        auto conv = g.matmul(stacked, params.filters[wi]);          // n x channels
        conv = g.add_row_broadcast(conv, params.biases[wi]);
        pooled.push_back(g.max_over_rows(g.tanh(conv)));            // channels
    }
    return g.concat(pooled);
}

// --- contextual vector file --------------------------------------------------

namespace {

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw DataError("truncated contextual vector file: " + path);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

float read_f32(std::istream& in, const std::string& path) {
    std::uint32_t bits = read_u32(in, path);
    float f;
    static_assert(sizeof(f) == 4);
    std::memcpy(&f, &bits, 4);
    return f;
}

void write_f32(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(out, bits);
}

}  // namespace

ContextualVectors ContextualVectors::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open contextual vector file: " + path);

    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "CTXV")
        throw DataError("bad magic in contextual vector file: " + path);

    ContextualVectors cv;
    cv.dim_ = static_cast<int>(read_u32(in, path));
    if (cv.dim_ <= 0) throw DataError("contextual vector file has dim 0: " + path);
    while (in.peek() != EOF) {
        std::uint32_t sid = read_u32(in, path);
        std::uint32_t count = read_u32(in, path);
        std::vector<float> values(static_cast<std::size_t>(count) * cv.dim_);
        for (auto& v : values) v = read_f32(in, path);
        cv.records_[sid] = std::move(values);
    }
    return cv;
}

void ContextualVectors::write(
    const std::string& path, int dim,
    const std::vector<std::pair<std::uint32_t, std::vector<float>>>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write contextual vector file: " + path);
    out.write("CTXV", 4);
    write_u32(out, static_cast<std::uint32_t>(dim));
    for (const auto& [sid, values] : records) {
        if (values.size() % static_cast<std::size_t>(dim) != 0)
            throw DataError("contextual record for sentence " + std::to_string(sid) +
                            " is not a multiple of dim");
        write_u32(out, sid);
        write_u32(out, static_cast<std::uint32_t>(values.size() / static_cast<std::size_t>(dim)));
        for (float v : values) write_f32(out, v);
    }
}

std::vector<double> ContextualVectors::tokens_vector(std::uint32_t sentence_id, int token,
                                                     int n_tokens) const {
    auto it = records_.find(sentence_id);
    if (it == records_.end())
        throw DataError("no contextual vectors for sentence " + std::to_string(sentence_id));
    const auto& values = it->second;
    auto have = static_cast<int>(values.size() / static_cast<std::size_t>(dim_));
    if (have != n_tokens)
        throw DataError("contextual vectors for sentence " + std::to_string(sentence_id) +
                        " cover " + std::to_string(have) + " tokens, token " +
                        std::to_string(token) + " of " + std::to_string(n_tokens) + " requested");
    std::vector<double> out(static_cast<std::size_t>(dim_));
    const float* src = values.data() + static_cast<std::size_t>(token) * dim_;
    for (int i = 0; i < dim_; ++i) out[static_cast<std::size_t>(i)] = src[i];
    return out;
}

}  // namespace bner
