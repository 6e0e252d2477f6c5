#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bner/config.hpp"
#include "bner/data.hpp"
#include "bner/decoder.hpp"
#include "bner/embeddings.hpp"
#include "bner/encoder.hpp"
#include "bner/scorer.hpp"
#include "bner/tensor.hpp"

namespace bner {

// The complete scoring stack: embeddings -> BiLSTM -> start/end heads ->
// biaffine span scores. Category index 0 is the non-entity class; corpus
// categories follow in sorted name order.
class Model {
public:
    // Derives the category inventory and char vocabulary from the training
    // split, loads embedding resources, and initializes parameters.
    static Model build(const Config& cfg, const Split& train_split);
    // Same, but with an injected in-memory static table instead of a file.
    static Model build_with_table(const Config& cfg, const Split& train_split,
                                  StaticEmbeddingTable table);

    static Model load_checkpoint(const std::string& path);
    void save_checkpoint(const std::string& path) const;

    // Loads static/contextual files per config; callable again after config
    // path overrides. Throws ConfigError on dimension mismatches.
    void load_resources();

    TensorPtr forward(Graph& g, const Sentence& sentence, bool train_mode, Rng* dropout_rng) const;
    ScoreTensor score(const Sentence& sentence) const;
    std::vector<LabeledSpan> predict(const Sentence& sentence, DecodeMode mode) const;
    AnnotatedSentence predict_annotated(const Sentence& sentence, DecodeMode mode) const;

    const std::vector<TensorPtr>& parameters() const { return params_; }
    const std::vector<std::string>& categories() const { return categories_; }
    int num_classes() const { return static_cast<int>(categories_.size()) + 1; }
    const std::string& category_name(int index) const;  // 1-based
    int category_index(const std::string& name) const;  // 0 if unknown

    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& snap);

    Config config;

    // Exposed for tests and the gradient checker.
    CharCnnParams char_params;
    BiLstmParams lstm_params;
    FfnnHeadParams head_start;
    FfnnHeadParams head_end;
    BiaffineParams biaffine;
    const CharVocab& char_vocab() const { return char_vocab_; }
    void set_static_table(StaticEmbeddingTable table);

private:
    Model() = default;
    void finish_build(const Split& train_split);
    void init_params(Rng& rng);
    void register_params();

    std::vector<std::string> categories_;
    CharVocab char_vocab_;
    std::optional<StaticEmbeddingTable> static_table_;
    std::optional<ContextualVectors> contextual_;
    std::vector<std::string> static_vocab_order_;  // persisted when finetuning
    std::vector<TensorPtr> params_;                // declaration order
};

}  // namespace bner
