#include "bner/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bner/common.hpp"

namespace bner {

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("bad boolean for " + key + ": " + v);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + v);
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": " + v);
    }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(parse_int(key, item));
    if (out.empty()) throw ConfigError("empty list for " + key);
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
    if (key == "bilstm_size") bilstm_size = parse_int(key, value);
    else if (key == "bilstm_layers") bilstm_layers = parse_int(key, value);
    else if (key == "bilstm_dropout") bilstm_dropout = parse_double(key, value);
    else if (key == "lstm_dropout_mode") lstm_dropout_mode = value;
    else if (key == "ffnn_size") ffnn_size = parse_int(key, value);
    else if (key == "ffnn_depth") ffnn_depth = parse_int(key, value);
    else if (key == "ffnn_dropout") ffnn_dropout = parse_double(key, value);
    else if (key == "ffnn_activation") ffnn_activation = value;
    else if (key == "contextual_dim") contextual_dim = parse_int(key, value);
    else if (key == "static_dim") static_dim = parse_int(key, value);
    else if (key == "char_channels") char_channels = parse_int(key, value);
    else if (key == "char_filter_widths") char_filter_widths = parse_int_list(key, value);
    else if (key == "char_emb_size") char_emb_size = parse_int(key, value);
    else if (key == "emb_dropout") emb_dropout = parse_double(key, value);
    else if (key == "use_contextual") use_contextual = parse_bool(key, value);
    else if (key == "use_static") use_static = parse_bool(key, value);
    else if (key == "use_char") use_char = parse_bool(key, value);
    else if (key == "finetune_static") finetune_static = parse_bool(key, value);
    else if (key == "static_embeddings") static_embeddings = value;
    else if (key == "contextual_vectors") contextual_vectors = value;
    else if (key == "use_bilinear") use_bilinear = parse_bool(key, value);
    else if (key == "optimizer") optimizer = value;
    else if (key == "learning_rate") learning_rate = parse_double(key, value);
    else if (key == "adam_beta1") adam_beta1 = parse_double(key, value);
    else if (key == "adam_beta2") adam_beta2 = parse_double(key, value);
    else if (key == "adam_eps") adam_eps = parse_double(key, value);
    else if (key == "clip_norm") clip_norm = parse_double(key, value);
    else if (key == "epochs") epochs = parse_int(key, value);
    else if (key == "batch_size") batch_size = parse_int(key, value);
    else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "early_stop_train_f1") early_stop_train_f1 = parse_double(key, value);
    else if (key == "eval_train") eval_train = parse_bool(key, value);
    else if (key == "decode_mode") decode_mode = value;
    else throw ConfigError("unknown configuration key: " + key);
}

std::string Config::to_text() const {
    std::ostringstream os;
    os << "bilstm_size=" << bilstm_size << '\n';
    os << "bilstm_layers=" << bilstm_layers << '\n';
    os << "bilstm_dropout=" << fmt_double(bilstm_dropout) << '\n';
    os << "lstm_dropout_mode=" << lstm_dropout_mode << '\n';
    os << "ffnn_size=" << ffnn_size << '\n';
    os << "ffnn_depth=" << ffnn_depth << '\n';
    os << "ffnn_dropout=" << fmt_double(ffnn_dropout) << '\n';
    os << "ffnn_activation=" << ffnn_activation << '\n';
    os << "contextual_dim=" << contextual_dim << '\n';
    os << "static_dim=" << static_dim << '\n';
    os << "char_channels=" << char_channels << '\n';
    os << "char_filter_widths=";
    for (std::size_t i = 0; i < char_filter_widths.size(); ++i)
        os << (i ? "," : "") << char_filter_widths[i];
    os << '\n';
    os << "char_emb_size=" << char_emb_size << '\n';
    os << "emb_dropout=" << fmt_double(emb_dropout) << '\n';
    os << "use_contextual=" << (use_contextual ? "true" : "false") << '\n';
    os << "use_static=" << (use_static ? "true" : "false") << '\n';
    os << "use_char=" << (use_char ? "true" : "false") << '\n';
    os << "finetune_static=" << (finetune_static ? "true" : "false") << '\n';
    os << "static_embeddings=" << static_embeddings << '\n';
    os << "contextual_vectors=" << contextual_vectors << '\n';
    os << "use_bilinear=" << (use_bilinear ? "true" : "false") << '\n';
    os << "optimizer=" << optimizer << '\n';
    os << "learning_rate=" << fmt_double(learning_rate) << '\n';
    os << "adam_beta1=" << fmt_double(adam_beta1) << '\n';
    os << "adam_beta2=" << fmt_double(adam_beta2) << '\n';
    os << "adam_eps=" << fmt_double(adam_eps) << '\n';
    os << "clip_norm=" << fmt_double(clip_norm) << '\n';
    os << "epochs=" << epochs << '\n';
    os << "batch_size=" << batch_size << '\n';
    os << "seed=" << seed << '\n';
    os << "early_stop_train_f1=" << fmt_double(early_stop_train_f1) << '\n';
    os << "eval_train=" << (eval_train ? "true" : "false") << '\n';
    os << "decode_mode=" << decode_mode << '\n';
    return os.str();
}

Config Config::from_text(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key=value, got: " + line);
        std::string key = line.substr(first, eq - first);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        c.set(key, line.substr(eq + 1));
    }
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

void Config::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write config file: " + path);
    out << to_text();
}

void Config::validate() const {
    if (!use_contextual && !use_static && !use_char)
        throw ConfigError("all embedding sources disabled; input dimension would be 0");
    if (use_contextual && contextual_vectors.empty())
        throw ConfigError("use_contextual=true requires contextual_vectors=<path>");
    if (use_static && static_embeddings.empty())
        throw ConfigError("use_static=true requires static_embeddings=<path>");
    if (bilstm_size <= 0 || bilstm_layers <= 0 || ffnn_size <= 0 || ffnn_depth <= 0)
        throw ConfigError("encoder/head sizes must be positive");
    if (use_char && (char_emb_size <= 0 || char_channels <= 0 || char_filter_widths.empty()))
        throw ConfigError("char CNN sizes must be positive");
    if (decode_mode != "nested" && decode_mode != "flat")
        throw ConfigError("decode_mode must be nested or flat, got " + decode_mode);
    if (lstm_dropout_mode != "inter_layer")
        throw ConfigError("unsupported lstm_dropout_mode: " + lstm_dropout_mode);
    if (ffnn_activation != "tanh")
        throw ConfigError("unsupported ffnn_activation: " + ffnn_activation);
    if (optimizer != "adam") throw ConfigError("unsupported optimizer: " + optimizer);
    if (batch_size <= 0 || epochs < 0) throw ConfigError("bad batch_size/epochs");
}

}  // namespace bner
