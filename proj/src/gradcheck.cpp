#include "bner/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "bner/trainer.hpp"

namespace bner {

namespace {

double total_loss(const Model& model, const Split& sentences) {
    double sum = 0.0;
    for (const auto& s : sentences) {
        Graph g;
        sum += sentence_loss(g, model, s, false, nullptr)->at(0);
    }
    return sum;
}

}  // namespace

std::vector<GradCheckResult> gradcheck_model(Model& model, const Split& sentences,
                                             std::uint64_t seed, double tolerance,
                                             int max_entries) {
    // Analytic gradients of the summed loss, accumulated across sentences.
    const auto& params = model.parameters();
    std::vector<std::vector<double>> analytic(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        analytic[i].assign(params[i]->data.size(), 0.0);
    for (const auto& s : sentences) {
        Graph g;
        auto loss = sentence_loss(g, model, s, false, nullptr);
        g.backward(loss);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& lg = g.leaf_grad(params[i]);
            for (std::size_t j = 0; j < lg.size(); ++j) analytic[i][j] += lg[j];
        }
    }

    const double eps = 1e-5;
    Rng pick(Rng::derive(seed, 0xF0));
    std::vector<GradCheckResult> results;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i]->data;
        std::vector<std::size_t> entries(p.size());
        for (std::size_t j = 0; j < p.size(); ++j) entries[j] = j;
        if (static_cast<int>(entries.size()) > max_entries) {
            pick.shuffle(entries);
            entries.resize(static_cast<std::size_t>(max_entries));
        }

        GradCheckResult r;
        r.group = params[i]->name;
        for (std::size_t j : entries) {
            double saved = p[j];
            p[j] = saved + eps;
            double up = total_loss(model, sentences);
            p[j] = saved - eps;
            double down = total_loss(model, sentences);
            p[j] = saved;
            double numeric = (up - down) / (2.0 * eps);
            double a = analytic[i][j];
            double err = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-3});
            r.max_rel_err = std::max(r.max_rel_err, err);
            ++r.checked;
        }
        r.pass = r.max_rel_err < tolerance;
        results.push_back(r);
    }
    return results;
}

std::vector<GradCheckResult> gradcheck(std::uint64_t seed, double tolerance, int max_entries) {
    Config cfg;
    cfg.bilstm_size = 8;
    cfg.bilstm_layers = 2;
    cfg.ffnn_size = 6;
    cfg.ffnn_depth = 1;
    cfg.char_emb_size = 3;
    cfg.char_channels = 4;
    cfg.char_filter_widths = {2, 3};
    cfg.static_dim = 6;
    cfg.use_static = true;
    cfg.finetune_static = true;  // exercises the static table group too
    cfg.use_contextual = false;
    cfg.use_char = true;
    cfg.seed = seed;
    // input dim: 6 static + 8 char = 14

    Split sentences;
    {
        AnnotatedSentence a;
        a.sentence.id = 0;
        a.sentence.tokens = {"ada", "met", "bo"};
        a.gold = {{0, 0, "PER"}, {1, 2, "ORG"}};
        AnnotatedSentence b;
        b.sentence.id = 1;
        b.sentence.tokens = {"zz", "ada", "bo", "qx"};
        b.gold = {{1, 3, "ORG"}};
        sentences = {a, b};
    }

    std::vector<std::string> vocab = {"ada", "met", "bo", "zz", "qx"};
    std::vector<double> values;
    Rng vr(Rng::derive(seed, 0xAB));
    for (std::size_t i = 0; i < vocab.size() * 6; ++i) values.push_back(vr.uniform(-0.3, 0.3));
    cfg.static_embeddings = "(in-memory)";

    Model model = Model::build_with_table(cfg, sentences,
                                          StaticEmbeddingTable::from_rows(vocab, 6, values));
    return gradcheck_model(model, sentences, seed, tolerance, max_entries);
}

}  // namespace bner
