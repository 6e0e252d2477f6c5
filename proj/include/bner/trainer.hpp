#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bner/eval.hpp"
#include "bner/model.hpp"

namespace bner {

// Gold category per (s, e) cell, row-major l*l; cells with s <= e carry the
// annotated category (0 = non-entity), cells with s > e are never read.
struct SpanLabels {
    int length = 0;
    std::vector<int> categories;
};

// Maps every gold span to its category index; all other valid spans are
// non-entity. Throws DataError on out-of-range, inverted or duplicate spans
// and on categories missing from the model inventory.
SpanLabels make_span_labels(const AnnotatedSentence& s, const Model& model);

// Sum of per-span softmax cross-entropy over all valid spans of the sentence.
TensorPtr sentence_loss(Graph& g, const Model& model, const AnnotatedSentence& s, bool train_mode,
                        Rng* dropout_rng);

class AdamOptimizer {
public:
    AdamOptimizer(const std::vector<TensorPtr>& params, double lr, double beta1, double beta2,
                  double eps);

    // grads[i] pairs with params[i]; empty entries are treated as zero.
    void step(const std::vector<TensorPtr>& params, std::vector<std::vector<double>>& grads);
    long long steps_taken() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

// Scales all gradients by clip/norm when the global L2 norm exceeds clip.
void clip_global_norm(std::vector<std::vector<double>>& grads, double clip);

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;  // mean per-span loss
    double train_f1 = -1.0;   // -1 when not evaluated
    double dev_f1 = -1.0;     // -1 when no dev split
};

struct TrainResult {
    std::vector<EpochMetrics> history;
    int chosen_epoch = 0;  // 1-based epoch whose weights the model now holds
    bool early_stopped = false;
};

// Index of the selected checkpoint: max dev F1 (ties -> earlier epoch); the
// final epoch when no dev scores exist.
int select_model(const std::vector<double>& dev_f1_per_epoch);

using MetricsSink = std::function<void(const EpochMetrics&)>;

// Shuffled seeded batches, forward/backward per sentence (parallel across
// `threads`, reduction in sentence order), clip + Adam per batch. The model is
// left holding the selected checkpoint's weights.
TrainResult train(Model& model, const Split& train_split, const Split* dev_split, int threads,
                  const MetricsSink& sink = nullptr);

// Decodes every sentence (in parallel) and scores it against the gold spans.
EvalReport evaluate_model(const Model& model, const Split& split, DecodeMode mode, int threads);

}  // namespace bner
