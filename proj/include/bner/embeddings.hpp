#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "bner/tensor.hpp"

namespace bner {

// Static (context independent) word vectors, text format: optional
// "<count> <dim>" header line, then "token v1 ... vD" per line.
class StaticEmbeddingTable {
public:
    static StaticEmbeddingTable load(const std::string& path, int expected_dim);
    // In-memory table; values row-major |tokens| x dim (zeros when empty).
    static StaticEmbeddingTable from_rows(const std::vector<std::string>& tokens, int dim,
                                          std::vector<double> values = {});

    int dim() const { return dim_; }
    std::size_t size() const { return vocab_.size(); }
    // Row for `token`, zero vector when out of vocabulary. Case sensitive.
    std::vector<double> lookup(const std::string& token) const;
    bool contains(const std::string& token) const { return vocab_.count(token) > 0; }

    // Matrix view for fine-tuning: |V| x dim leaf tensor (shared storage).
    const TensorPtr& matrix() const { return matrix_; }
    int row_of(const std::string& token) const;  // -1 if OOV
    std::vector<std::string> tokens_in_row_order() const;

private:
    int dim_ = 0;
    std::unordered_map<std::string, int> vocab_;
    TensorPtr matrix_;
};

// Character inventory built from training tokens. Index 0 is PAD (fixed zero
// vector), index 1 a learned UNK for characters unseen in training.
class CharVocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    void add_token(const std::string& token);
    int index_of(std::uint32_t codepoint) const;
    int size() const { return static_cast<int>(chars_.size()) + 2; }

    std::vector<std::uint32_t> codepoints() const;  // sorted, for serialization
    static CharVocab from_codepoints(const std::vector<std::uint32_t>& cps);

private:
    std::map<std::uint32_t, int> chars_;
};

// Decodes UTF-8; invalid bytes map to U+FFFD.
std::vector<std::uint32_t> utf8_codepoints(const std::string& s);

struct CharCnnParams {
    TensorPtr char_table;            // vocab x emb_dim, row kPad kept at zero
    std::vector<int> widths;         // filter widths, e.g. {3,4,5}
    std::vector<TensorPtr> filters;  // per width: (width*emb_dim) x channels
    std::vector<TensorPtr> biases;   // per width: channels
    int emb_dim = 0;
    int channels = 0;

    int output_dim() const { return static_cast<int>(widths.size()) * channels; }
};

// Convolution over the token's character embeddings, one window anchored at
// every character (zero padding on the right), tanh, max-pool per width,
// widths concatenated. Errors on empty tokens.
TensorPtr char_cnn(Graph& g, const std::vector<int>& char_indices, const CharCnnParams& params);

// Precomputed contextual vectors, binary "CTXV" format: magic, u32 dim, then
// records of (u32 sentence id, u32 token count, count*dim float32 values).
class ContextualVectors {
public:
    static ContextualVectors load(const std::string& path);
    static void write(const std::string& path, int dim,
                      const std::vector<std::pair<std::uint32_t, std::vector<float>>>& records);

    int dim() const { return dim_; }
    bool has(std::uint32_t sentence_id) const { return records_.count(sentence_id) > 0; }
    // Token-count-checked access; throws DataError naming sentence and token.
    std::vector<double> tokens_vector(std::uint32_t sentence_id, int token, int n_tokens) const;

private:
    int dim_ = 0;
    std::unordered_map<std::uint32_t, std::vector<float>> records_;
};

}  // namespace bner
