#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bner {

// Training and model configuration; defaults mirror the published
// hyperparameter table. Serialized as flat key=value text.
struct Config {
    // encoder
    int bilstm_size = 200;
    int bilstm_layers = 3;
    double bilstm_dropout = 0.4;
    std::string lstm_dropout_mode = "inter_layer";  // only supported mode
    // scorer heads
    int ffnn_size = 150;
    int ffnn_depth = 1;
    double ffnn_dropout = 0.2;
    std::string ffnn_activation = "tanh";  // only supported mode
    // embeddings
    int contextual_dim = 1024;
    int static_dim = 300;
    int char_channels = 50;
    std::vector<int> char_filter_widths = {3, 4, 5};
    int char_emb_size = 8;
    double emb_dropout = 0.5;
    bool use_contextual = false;  // contextual vectors are file-ingested
    bool use_static = true;
    bool use_char = true;
    bool finetune_static = false;
    std::string static_embeddings;    // path, required when use_static
    std::string contextual_vectors;   // path, required when use_contextual
    // scorer
    bool use_bilinear = true;  // false drops the U term ("- biaffine")
    // optimization
    std::string optimizer = "adam";
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 5.0;
    int epochs = 50;
    int batch_size = 8;
    std::uint64_t seed = 42;
    // 0 disables; otherwise training stops once train F1 reaches this value.
    double early_stop_train_f1 = 0.0;
    bool eval_train = true;
    std::string decode_mode = "flat";  // nested|flat

    int input_dim() const {
        return (use_contextual ? contextual_dim : 0) + (use_static ? static_dim : 0) +
               (use_char ? char_channels * static_cast<int>(char_filter_widths.size()) : 0);
    }

    void set(const std::string& key, const std::string& value);  // throws ConfigError
    std::string to_text() const;

    static Config from_text(const std::string& text);
    static Config load(const std::string& path);
    void save(const std::string& path) const;
    void validate() const;  // throws ConfigError on inconsistent settings
};

}  // namespace bner
