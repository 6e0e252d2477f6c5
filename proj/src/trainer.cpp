#include "bner/trainer.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "bner/common.hpp"

namespace bner {

namespace {

// Runs fn(0..n-1) on up to `threads` workers; callers index results, so the
// schedule never affects output.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> pool;
    int count = std::min(threads, n);
    pool.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

}  // namespace

SpanLabels make_span_labels(const AnnotatedSentence& s, const Model& model) {
    int l = s.sentence.length();
    SpanLabels labels;
    labels.length = l;
    labels.categories.assign(static_cast<std::size_t>(l) * static_cast<std::size_t>(l), 0);
    for (const auto& g : s.gold) {
        if (g.start < 0 || g.end >= l || g.start > g.end)
            throw DataError("sentence " + std::to_string(s.sentence.id) + ": gold span (" +
                            std::to_string(g.start) + "," + std::to_string(g.end) +
                            ") is not a valid span of " + std::to_string(l) + " tokens");
        int cat = model.category_index(g.category);
        if (cat == 0)
            throw DataError("sentence " + std::to_string(s.sentence.id) + ": category '" +
                            g.category + "' missing from the model inventory");
        auto& cell = labels.categories[static_cast<std::size_t>(g.start) * l +
                                       static_cast<std::size_t>(g.end)];
        if (cell != 0)
            throw DataError("sentence " + std::to_string(s.sentence.id) +
                            ": duplicate gold span (" + std::to_string(g.start) + "," +
                            std::to_string(g.end) + ")");
        cell = cat;
    }
    return labels;
}

TensorPtr sentence_loss(Graph& g, const Model& model, const AnnotatedSentence& s, bool train_mode,
                        Rng* dropout_rng) {
    auto labels = make_span_labels(s, model);
    auto scores = model.forward(g, s.sentence, train_mode, dropout_rng);
    return g.span_cross_entropy(scores, labels.categories);
}

AdamOptimizer::AdamOptimizer(const std::vector<TensorPtr>& params, double lr, double beta1,
                             double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params) {
        m_.emplace_back(p->data.size(), 0.0);
        v_.emplace_back(p->data.size(), 0.0);
    }
}

void AdamOptimizer::step(const std::vector<TensorPtr>& params,
                         std::vector<std::vector<double>>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw ShapeError("optimizer state does not match parameter list");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].empty()) grads[i].assign(params[i]->data.size(), 0.0);
        auto& p = params[i]->data;
        auto& gr = grads[i];
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gr[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gr[j] * gr[j];
            p[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
        }
    }
}

void clip_global_norm(std::vector<std::vector<double>>& grads, double clip) {
    if (clip <= 0.0) return;
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g) sq += v * v;
    double norm = std::sqrt(sq);
    if (norm <= clip) return;
    double scale = clip / norm;
    for (auto& g : grads)
        for (double& v : g) v *= scale;
}

int select_model(const std::vector<double>& dev_f1_per_epoch) {
    if (dev_f1_per_epoch.empty()) throw ShapeError("select_model with no epochs");
    int best = 0;
    for (int i = 1; i < static_cast<int>(dev_f1_per_epoch.size()); ++i)
        if (dev_f1_per_epoch[static_cast<std::size_t>(i)] >
            dev_f1_per_epoch[static_cast<std::size_t>(best)])
            best = i;
    return best;
}

EvalReport evaluate_model(const Model& model, const Split& split, DecodeMode mode, int threads) {
    Split predicted(split.size());
    parallel_for(static_cast<int>(split.size()), threads, [&](int i) {
        predicted[static_cast<std::size_t>(i)] =
            model.predict_annotated(split[static_cast<std::size_t>(i)].sentence, mode);
    });
    return evaluate(split, predicted);
}

TrainResult train(Model& model, const Split& train_split, const Split* dev_split, int threads,
                  const MetricsSink& sink) {
    if (train_split.empty()) throw DataError("training split is empty");
    const Config& cfg = model.config;
    DecodeMode mode = cfg.decode_mode == "nested" ? DecodeMode::Nested : DecodeMode::Flat;

    // Validate labels up front so bad data fails before the first epoch.
    for (const auto& s : train_split) make_span_labels(s, model);

    AdamOptimizer opt(model.parameters(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                      cfg.adam_eps);
    Rng shuffle_rng(Rng::derive(cfg.seed, 0x5AFF));

    TrainResult result;
    std::vector<double> dev_scores;
    std::vector<std::vector<double>> best_snapshot;
    double best_dev = -1.0;
    int best_epoch = 0;

    std::vector<int> order(train_split.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    const auto& params = model.parameters();
    // Gradient buffers persist across batches; one store per batch slot.
    std::vector<GradStore> stores(static_cast<std::size_t>(cfg.batch_size));
    std::vector<std::vector<double>> total(params.size());

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        long long span_count = 0;
        for (std::size_t batch_start = 0; batch_start < order.size();
             batch_start += static_cast<std::size_t>(cfg.batch_size)) {
            int batch_n = static_cast<int>(
                std::min(order.size() - batch_start, static_cast<std::size_t>(cfg.batch_size)));

            std::vector<double> losses(static_cast<std::size_t>(batch_n), 0.0);
            parallel_for(batch_n, threads, [&](int bi) {
                const auto& sentence =
                    train_split[static_cast<std::size_t>(order[batch_start +
                                                                static_cast<std::size_t>(bi)])];
                Rng drop_rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch),
                                         static_cast<std::uint64_t>(batch_start) +
                                             static_cast<std::uint64_t>(bi)));
                auto& store = stores[static_cast<std::size_t>(bi)];
                store.reset();
                Graph g(&store);
                auto loss = sentence_loss(g, model, sentence, true, &drop_rng);
                g.backward(loss);
                losses[static_cast<std::size_t>(bi)] = loss->at(0);
            });

            // Reduce in sentence order so thread count never changes results.
            for (auto& t : total) std::fill(t.begin(), t.end(), 0.0);
            for (int bi = 0; bi < batch_n; ++bi) {
                loss_sum += losses[static_cast<std::size_t>(bi)];
                span_count += count_valid_spans(
                    train_split[static_cast<std::size_t>(order[batch_start +
                                                                static_cast<std::size_t>(bi)])]
                        .sentence.length());
                const auto& store = stores[static_cast<std::size_t>(bi)];
                for (std::size_t pi = 0; pi < params.size(); ++pi) {
                    const auto* src = store.current(params[pi].get());
                    if (!src) continue;
                    auto& dst = total[pi];
                    if (dst.empty()) dst.assign(src->size(), 0.0);
                    for (std::size_t j = 0; j < src->size(); ++j) dst[j] += (*src)[j];
                }
            }
            clip_global_norm(total, cfg.clip_norm);
            opt.step(params, total);
        }

        EpochMetrics metrics;
        metrics.epoch = epoch;
        metrics.train_loss = span_count > 0 ? loss_sum / static_cast<double>(span_count) : 0.0;
        if (cfg.eval_train)
            metrics.train_f1 = evaluate_model(model, train_split, mode, threads).micro.f1();
        if (dev_split) {
            metrics.dev_f1 = evaluate_model(model, *dev_split, mode, threads).micro.f1();
            dev_scores.push_back(metrics.dev_f1);
            if (metrics.dev_f1 > best_dev) {
                best_dev = metrics.dev_f1;
                best_epoch = epoch;
                best_snapshot = model.snapshot();
            }
        }
        result.history.push_back(metrics);
        if (sink) sink(metrics);

        if (cfg.early_stop_train_f1 > 0.0 && metrics.train_f1 >= cfg.early_stop_train_f1) {
            result.early_stopped = true;
            break;
        }
    }

    if (dev_split && !best_snapshot.empty()) {
        model.restore(best_snapshot);
        result.chosen_epoch = best_epoch;
    } else {
        result.chosen_epoch =
            result.history.empty() ? 0 : result.history.back().epoch;
    }
    return result;
}

}  // namespace bner
