#pragma once

#include <vector>

#include "bner/tensor.hpp"

namespace bner {

// One LSTM direction. Input and recurrent weights are kept separate so the
// input projection runs as a single sequence-level matmul; gate order i,f,o,g.
struct LstmDirParams {
    TensorPtr weight_x;  // input_dim x 4*hidden
    TensorPtr weight_h;  // hidden x 4*hidden
    TensorPtr bias;      // 4*hidden
    int input_dim = 0;
    int hidden = 0;
};

struct BiLstmParams {
    std::vector<LstmDirParams> forward;   // one per layer
    std::vector<LstmDirParams> backward;  // one per layer
    double dropout = 0.0;                 // between layers, train mode only

    int layers() const { return static_cast<int>(forward.size()); }
    int output_dim() const { return forward.empty() ? 0 : 2 * forward.back().hidden; }
};

// Maps l x D token vectors to l x 2H contextual representations. Inter-layer
// dropout uses one mask per layer boundary shared across time steps.
TensorPtr bilstm_encode(Graph& g, const TensorPtr& token_matrix, const BiLstmParams& params,
                        bool train_mode, Rng* dropout_rng);

}  // namespace bner
