#pragma once

#include <string>
#include <vector>

#include "bner/tensor.hpp"

namespace bner {

// Start/end head networks; distinct parameter stacks per head.
struct FfnnHeadParams {
    std::vector<TensorPtr> weights;  // depth entries: in x out
    std::vector<TensorPtr> biases;   // depth entries: out
    double dropout = 0.0;
};

struct BiaffineParams {
    TensorPtr u;  // d x c x d
    TensorPtr w;  // 2d x c
    TensorPtr b;  // c
    bool use_bilinear = true;
};

// tanh FFNN applied row-wise; dropout on the output rows in train mode.
TensorPtr ffnn_head(Graph& g, const TensorPtr& x, const FfnnHeadParams& params, bool train_mode,
                    Rng* dropout_rng);

// Plain value view of the l x l x c span scores. Cells with start > end are
// stored but never read downstream.
struct ScoreTensor {
    int length = 0;
    int categories = 0;
    std::vector<double> values;  // row-major l x l x c

    double at(int s, int e, int k) const {
        return values[(static_cast<std::size_t>(s) * length + e) * categories +
                      static_cast<std::size_t>(k)];
    }
    double& at(int s, int e, int k) {
        return values[(static_cast<std::size_t>(s) * length + e) * categories +
                      static_cast<std::size_t>(k)];
    }
    bool valid(int s, int e) const { return 0 <= s && s <= e && e < length; }
};

ScoreTensor to_score_tensor(const TensorPtr& scores);

// Number of (s, e) pairs with s <= e: l(l+1)/2.
long long count_valid_spans(int length);

// "SCOR" dump: magic, u32 l, u32 c, float32 little-endian row-major values.
void write_scor(const std::string& path, const ScoreTensor& t);
ScoreTensor read_scor(const std::string& path);

}  // namespace bner
