#include "bner/model.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bner/common.hpp"

namespace bner {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated checkpoint: " + path);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<char*>(b), 8);
}

double get_f64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated checkpoint: " + path);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

const std::string& Model::category_name(int index) const {
    if (index < 1 || index > static_cast<int>(categories_.size()))
        throw ShapeError("category index " + std::to_string(index) + " out of range");
    return categories_[static_cast<std::size_t>(index - 1)];
}

int Model::category_index(const std::string& name) const {
    for (std::size_t i = 0; i < categories_.size(); ++i)
        if (categories_[i] == name) return static_cast<int>(i) + 1;
    return 0;
}

void Model::set_static_table(StaticEmbeddingTable table) {
    static_table_ = std::move(table);
}

Model Model::build(const Config& cfg, const Split& train_split) {
    Model m;
    m.config = cfg;
    m.finish_build(train_split);
    return m;
}

Model Model::build_with_table(const Config& cfg, const Split& train_split,
                              StaticEmbeddingTable table) {
    Model m;
    m.config = cfg;
    m.static_table_ = std::move(table);
    m.finish_build(train_split);
    return m;
}

void Model::finish_build(const Split& train_split) {
    config.validate();

    std::set<std::string> cats;
    for (const auto& s : train_split)
        for (const auto& g : s.gold) cats.insert(g.category);
    categories_.assign(cats.begin(), cats.end());

    if (config.use_char)
        for (const auto& s : train_split)
            for (const auto& tok : s.sentence.tokens) char_vocab_.add_token(tok);

    load_resources();
    if (config.use_static && config.finetune_static)
        static_vocab_order_ = static_table_->tokens_in_row_order();

    Rng rng(Rng::derive(config.seed, 0x1717));
    init_params(rng);
    register_params();
}

void Model::load_resources() {
    if (config.use_static && !static_table_.has_value())
        static_table_ = StaticEmbeddingTable::load(config.static_embeddings, config.static_dim);
    if (config.use_contextual && !contextual_.has_value()) {
        contextual_ = ContextualVectors::load(config.contextual_vectors);
        if (contextual_->dim() != config.contextual_dim)
            throw ConfigError("contextual vector file has dim " +
                              std::to_string(contextual_->dim()) + ", configuration expects " +
                              std::to_string(config.contextual_dim));
    }
}

void Model::init_params(Rng& rng) {
    auto uniform_fill = [&rng](const TensorPtr& t) {
        for (auto& v : t->data) v = rng.uniform(-0.1, 0.1);
    };

    if (config.use_char) {
        char_params.emb_dim = config.char_emb_size;
        char_params.channels = config.char_channels;
        char_params.widths = config.char_filter_widths;
        char_params.char_table =
            Tensor::zeros({char_vocab_.size(), config.char_emb_size}, true);
        char_params.char_table->name = "char_table";
        uniform_fill(char_params.char_table);
        for (int j = 0; j < config.char_emb_size; ++j)
            char_params.char_table->at(CharVocab::kPad, j) = 0.0;  // PAD row stays zero
        for (int w : char_params.widths) {
            auto f = Tensor::zeros({w * config.char_emb_size, config.char_channels}, true);
            f->name = "char_filter_w" + std::to_string(w);
            uniform_fill(f);
            auto b = Tensor::zeros({config.char_channels}, true);
            b->name = "char_filter_b" + std::to_string(w);
            char_params.filters.push_back(f);
            char_params.biases.push_back(b);
        }
    }

    lstm_params.dropout = config.bilstm_dropout;
    int h = config.bilstm_size;
    for (int layer = 0; layer < config.bilstm_layers; ++layer) {
        int in_dim = layer == 0 ? config.input_dim() : 2 * h;
        for (const char* dir : {"fwd", "bwd"}) {
            LstmDirParams p;
            p.input_dim = in_dim;
            p.hidden = h;
            std::string base = "lstm_l" + std::to_string(layer) + "_" + dir;
            p.weight_x = Tensor::zeros({in_dim, 4 * h}, true);
            p.weight_x->name = base + "_wx";
            uniform_fill(p.weight_x);
            p.weight_h = Tensor::zeros({h, 4 * h}, true);
            p.weight_h->name = base + "_wh";
            uniform_fill(p.weight_h);
            p.bias = Tensor::zeros({4 * h}, true);
            p.bias->name = base + "_b";
            for (int i = h; i < 2 * h; ++i) p.bias->at(i) = 1.0;  // forget gate bias
            (dir[0] == 'f' ? lstm_params.forward : lstm_params.backward).push_back(std::move(p));
        }
    }

    auto make_head = [&](const char* tag) {
        FfnnHeadParams head;
        head.dropout = config.ffnn_dropout;
        int in_dim = 2 * h;
        for (int d = 0; d < config.ffnn_depth; ++d) {
            auto w = Tensor::zeros({in_dim, config.ffnn_size}, true);
            w->name = std::string("ffnn_") + tag + "_w" + std::to_string(d);
            uniform_fill(w);
            auto b = Tensor::zeros({config.ffnn_size}, true);
            b->name = std::string("ffnn_") + tag + "_b" + std::to_string(d);
            head.weights.push_back(w);
            head.biases.push_back(b);
            in_dim = config.ffnn_size;
        }
        return head;
    };
    head_start = make_head("s");
    head_end = make_head("e");

    int d = config.ffnn_size;
    int c = num_classes();
    biaffine.use_bilinear = config.use_bilinear;
    biaffine.u = Tensor::zeros({d, c, d}, true);
    biaffine.u->name = "biaffine_u";
    uniform_fill(biaffine.u);
    biaffine.w = Tensor::zeros({2 * d, c}, true);
    biaffine.w->name = "biaffine_w";
    uniform_fill(biaffine.w);
    biaffine.b = Tensor::zeros({c}, true);
    biaffine.b->name = "biaffine_b";

    if (config.use_static && config.finetune_static) {
        static_table_->matrix()->requires_grad = true;
    }
}

void Model::register_params() {
    params_.clear();
    if (config.use_char) {
        params_.push_back(char_params.char_table);
        for (std::size_t i = 0; i < char_params.filters.size(); ++i) {
            params_.push_back(char_params.filters[i]);
            params_.push_back(char_params.biases[i]);
        }
    }
    for (int layer = 0; layer < lstm_params.layers(); ++layer) {
        for (auto* bank : {&lstm_params.forward, &lstm_params.backward}) {
            auto& dir = (*bank)[static_cast<std::size_t>(layer)];
            params_.push_back(dir.weight_x);
            params_.push_back(dir.weight_h);
            params_.push_back(dir.bias);
        }
    }
    for (const auto& head : {&head_start, &head_end})
        for (std::size_t d = 0; d < head->weights.size(); ++d) {
            params_.push_back(head->weights[d]);
            params_.push_back(head->biases[d]);
        }
    params_.push_back(biaffine.u);
    params_.push_back(biaffine.w);
    params_.push_back(biaffine.b);
    if (config.use_static && config.finetune_static) params_.push_back(static_table_->matrix());
}

TensorPtr Model::forward(Graph& g, const Sentence& sentence, bool train_mode,
                         Rng* dropout_rng) const {
    int l = sentence.length();
    if (l == 0) throw DataError("cannot score an empty sentence (id " +
                                std::to_string(sentence.id) + ")");
    if (train_mode && dropout_rng == nullptr)
        throw ShapeError("train-mode forward requires a dropout rng");

    std::vector<TensorPtr> rows;
    rows.reserve(static_cast<std::size_t>(l));
    for (int t = 0; t < l; ++t) {
        const std::string& tok = sentence.tokens[static_cast<std::size_t>(t)];
        std::vector<TensorPtr> parts;
        if (config.use_contextual)
            parts.push_back(Tensor::of({config.contextual_dim},
                                       contextual_->tokens_vector(sentence.id, t, l)));
        if (config.use_static) {
            int row_idx = static_table_->row_of(tok);
            if (config.finetune_static && row_idx >= 0)
                parts.push_back(g.row(static_table_->matrix(), row_idx));
            else
                parts.push_back(Tensor::of({config.static_dim}, static_table_->lookup(tok)));
        }
        if (config.use_char) {
            std::vector<int> idx;
            for (std::uint32_t cp : utf8_codepoints(tok))
                idx.push_back(char_vocab_.index_of(cp));
            if (idx.empty()) throw DataError("empty token in sentence " +
                                             std::to_string(sentence.id));
            parts.push_back(char_cnn(g, idx, char_params));
        }
        auto vec = parts.size() == 1 ? parts[0] : g.concat(parts);
        if (train_mode && config.emb_dropout > 0.0)
            vec = g.dropout(vec, config.emb_dropout, *dropout_rng);
        rows.push_back(vec);
    }

    auto x = g.stack_rows(rows);
    auto encoded = bilstm_encode(g, x, lstm_params, train_mode, dropout_rng);
    auto hs = ffnn_head(g, encoded, head_start, train_mode, dropout_rng);
    auto he = ffnn_head(g, encoded, head_end, train_mode, dropout_rng);
    return g.biaffine_scores(hs, he, biaffine.u, biaffine.w, biaffine.b, biaffine.use_bilinear);
}

ScoreTensor Model::score(const Sentence& sentence) const {
    Graph g;
    return to_score_tensor(forward(g, sentence, false, nullptr));
}

std::vector<LabeledSpan> Model::predict(const Sentence& sentence, DecodeMode mode) const {
    return decode(score(sentence), mode);
}

AnnotatedSentence Model::predict_annotated(const Sentence& sentence, DecodeMode mode) const {
    AnnotatedSentence out;
    out.sentence = sentence;
    for (const auto& ls : predict(sentence, mode))
        out.gold.insert({ls.span.start, ls.span.end, category_name(ls.category)});
    return out;
}

std::vector<std::vector<double>> Model::snapshot() const {
    std::vector<std::vector<double>> snap;
    snap.reserve(params_.size());
    for (const auto& p : params_) snap.push_back(p->data);
    return snap;
}

void Model::restore(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != params_.size()) throw ShapeError("snapshot size mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) params_[i]->data = snap[i];
}

void Model::save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write("BNER", 4);
    put_u32(out, kCheckpointVersion);

    std::ostringstream blob;
    blob << config.to_text();
    blob << "categories=" << nlohmann::json(categories_).dump() << '\n';
    blob << "char_vocab=" << nlohmann::json(char_vocab_.codepoints()).dump() << '\n';
    if (config.use_static && config.finetune_static)
        blob << "static_vocab=" << nlohmann::json(static_vocab_order_).dump() << '\n';
    std::string blob_str = blob.str();
    put_u32(out, static_cast<std::uint32_t>(blob_str.size()));
    out.write(blob_str.data(), static_cast<std::streamsize>(blob_str.size()));

    for (const auto& p : params_) {
        put_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u32(out, static_cast<std::uint32_t>(p->rank()));
        for (int d : p->shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : p->data) put_f64(out, v);
    }
}

Model Model::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "BNER")
        throw DataError("bad magic in checkpoint: " + path);
    std::uint32_t version = get_u32(in, path);
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));

    std::uint32_t blob_len = get_u32(in, path);
    std::string blob(blob_len, '\0');
    if (!in.read(blob.data(), blob_len)) throw DataError("truncated checkpoint: " + path);

    Model m;
    std::vector<std::uint32_t> char_cps;
    std::ostringstream config_text;
    std::istringstream blob_in(blob);
    std::string line;
    while (std::getline(blob_in, line)) {
        if (line.rfind("categories=", 0) == 0) {
            m.categories_ = nlohmann::json::parse(line.substr(11)).get<std::vector<std::string>>();
        } else if (line.rfind("char_vocab=", 0) == 0) {
            char_cps = nlohmann::json::parse(line.substr(11)).get<std::vector<std::uint32_t>>();
        } else if (line.rfind("static_vocab=", 0) == 0) {
            m.static_vocab_order_ =
                nlohmann::json::parse(line.substr(13)).get<std::vector<std::string>>();
        } else {
            config_text << line << '\n';
        }
    }
    m.config = Config::from_text(config_text.str());
    m.char_vocab_ = CharVocab::from_codepoints(char_cps);

    // Allocate parameter tensors (shapes implied by the config), then fill
    // them from the file in declaration order.
    if (m.config.use_static && m.config.finetune_static) {
        if (m.static_vocab_order_.empty())
            throw DataError("finetune_static checkpoint lacks a static_vocab record: " + path);
        m.static_table_ =
            StaticEmbeddingTable::from_rows(m.static_vocab_order_, m.config.static_dim);
    }
    Rng rng(0);
    m.init_params(rng);
    m.register_params();

    for (const auto& p : m.params_) {
        std::uint32_t name_len = get_u32(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw DataError("truncated checkpoint: " + path);
        if (name != p->name)
            throw DataError("checkpoint parameter order mismatch: expected " + p->name + ", got " +
                            name);
        std::uint32_t rank = get_u32(in, path);
        if (rank != static_cast<std::uint32_t>(p->rank()))
            throw DataError("checkpoint rank mismatch for " + name);
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            std::uint32_t d = get_u32(in, path);
            if (d != static_cast<std::uint32_t>(p->dim(static_cast<int>(i))))
                throw DataError("checkpoint shape mismatch for " + name);
            count *= d;
        }
        for (std::size_t i = 0; i < count; ++i) p->data[i] = get_f64(in, path);
    }
    return m;
}

}  // namespace bner
