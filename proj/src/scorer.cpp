#include "bner/scorer.hpp"

#include <cstring>
#include <fstream>

#include "bner/common.hpp"

namespace bner {

TensorPtr ffnn_head(Graph& g, const TensorPtr& x, const FfnnHeadParams& params, bool train_mode,
                    Rng* dropout_rng) {
    if (params.weights.empty() || params.weights.size() != params.biases.size())
        throw ShapeError("ffnn head has no layers");
    TensorPtr h = x;
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
        h = g.tanh(g.add_row_broadcast(g.matmul(h, params.weights[i]), params.biases[i]));
        if (train_mode && params.dropout > 0.0) h = g.dropout(h, params.dropout, *dropout_rng);
    }
    return h;
}

ScoreTensor to_score_tensor(const TensorPtr& scores) {
    if (scores->rank() != 3 || scores->dim(0) != scores->dim(1))
        throw ShapeError("score tensor must be l x l x c, got " + scores->shape_str());
    ScoreTensor t;
    t.length = scores->dim(0);
    t.categories = scores->dim(2);
    t.values = scores->data;
    return t;
}

long long count_valid_spans(int length) {
    if (length < 0) throw ShapeError("negative sentence length");
    return static_cast<long long>(length) * (length + 1) / 2;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated score dump: " + path);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

void write_scor(const std::string& path, const ScoreTensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write score dump: " + path);
    out.write("SCOR", 4);
    put_u32(out, static_cast<std::uint32_t>(t.length));
    put_u32(out, static_cast<std::uint32_t>(t.categories));
    for (double v : t.values) {
        float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
}

ScoreTensor read_scor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open score dump: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "SCOR")
        throw DataError("bad magic in score dump: " + path);
    ScoreTensor t;
    t.length = static_cast<int>(get_u32(in, path));
    t.categories = static_cast<int>(get_u32(in, path));
    if (t.length <= 0 || t.categories <= 0)
        throw DataError("score dump has empty dimensions: " + path);
    std::size_t n = static_cast<std::size_t>(t.length) * t.length * t.categories;
    t.values.resize(n);
    for (auto& v : t.values) {
        std::uint32_t bits = get_u32(in, path);
        float f;
        std::memcpy(&f, &bits, 4);
        v = f;
    }
    return t;
}

}  // namespace bner
