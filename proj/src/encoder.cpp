#include "bner/encoder.hpp"

#include <cmath>
#include <numeric>

#include "bner/common.hpp"

namespace bner {

namespace {

// Fused scan over one LSTM direction. `pre` is l x 4H and already carries
// x_t . W_x + b; rows are visited in `order`. Returns the l x H hidden states
// indexed by processing step. Fusing the recurrence keeps the backward pass to
// one matmul per weight instead of an outer product per time step.
TensorPtr lstm_scan(Graph& g, const TensorPtr& pre, const TensorPtr& wh,
                    std::vector<int> order) {
    int l = pre->dim(0);
    int h4 = pre->dim(1);
    int h = h4 / 4;
    if (wh->rank() != 2 || wh->dim(0) != h || wh->dim(1) != h4 || h4 % 4 != 0 ||
        static_cast<int>(order.size()) != l)
        throw ShapeError("lstm_scan shapes: pre " + pre->shape_str() + ", wh " + wh->shape_str());

    auto out = g.make_output({l, h}, pre->requires_grad || wh->requires_grad);

    // Saved activations, step-indexed: gate outputs i,f,o,u plus c, tanh(c)
    // and the incoming hidden state of every step.
    auto saved = std::make_shared<std::vector<double>>(static_cast<std::size_t>(l) * h * 7);
    double* sv = saved->data();
    auto at = [&](int what, int s) { return sv + (static_cast<std::size_t>(what) * l + s) * h; };

    std::vector<double> gates(static_cast<std::size_t>(h4));
    std::vector<double> h_prev(static_cast<std::size_t>(h), 0.0);
    std::vector<double> c_prev(static_cast<std::size_t>(h), 0.0);
    for (int s = 0; s < l; ++s) {
        const double* prow = pre->data.data() + static_cast<std::size_t>(order[static_cast<std::size_t>(s)]) * h4;
        std::copy(prow, prow + h4, gates.begin());
        for (int p = 0; p < h; ++p) {
            double hv = h_prev[static_cast<std::size_t>(p)];
            if (hv == 0.0) continue;
            const double* wrow = wh->data.data() + static_cast<std::size_t>(p) * h4;
            for (int j = 0; j < h4; ++j) gates[static_cast<std::size_t>(j)] += hv * wrow[j];
        }
        double* gi = at(0, s);
        double* gf = at(1, s);
        double* go = at(2, s);
        double* gu = at(3, s);
        double* gc = at(4, s);
        double* gtc = at(5, s);
        double* ghp = at(6, s);
        std::copy(h_prev.begin(), h_prev.end(), ghp);
        for (int j = 0; j < h; ++j) {
            gi[j] = 1.0 / (1.0 + std::exp(-gates[static_cast<std::size_t>(j)]));
            gf[j] = 1.0 / (1.0 + std::exp(-gates[static_cast<std::size_t>(h + j)]));
            go[j] = 1.0 / (1.0 + std::exp(-gates[static_cast<std::size_t>(2 * h + j)]));
            gu[j] = std::tanh(gates[static_cast<std::size_t>(3 * h + j)]);
            gc[j] = gf[j] * c_prev[static_cast<std::size_t>(j)] + gi[j] * gu[j];
            gtc[j] = std::tanh(gc[j]);
            double ht = go[j] * gtc[j];
            out->data[static_cast<std::size_t>(s) * h + j] = ht;
            h_prev[static_cast<std::size_t>(j)] = ht;
            c_prev[static_cast<std::size_t>(j)] = gc[j];
        }
    }

    Graph* gp = &g;
    auto order_ptr = std::make_shared<std::vector<int>>(std::move(order));
    g.record_custom(out, [gp, pre, wh, out, saved, order_ptr, l, h, h4] {
        const double* sv = saved->data();
        auto at = [&](int what, int s) {
            return sv + (static_cast<std::size_t>(what) * l + s) * h;
        };
        double* dpre = gp->grad_buffer(pre);
        double* dwh = gp->grad_buffer(wh);

        std::vector<double> dgates(static_cast<std::size_t>(l) * h4, 0.0);
        std::vector<double> dh(static_cast<std::size_t>(h), 0.0);
        std::vector<double> dc(static_cast<std::size_t>(h), 0.0);
        for (int s = l - 1; s >= 0; --s) {
            const double* gi = at(0, s);
            const double* gf = at(1, s);
            const double* go = at(2, s);
            const double* gu = at(3, s);
            const double* gtc = at(5, s);
            const double* c_in = s > 0 ? at(4, s - 1) : nullptr;
            double* drow = dgates.data() + static_cast<std::size_t>(s) * h4;
            for (int j = 0; j < h; ++j) {
                double dout = dh[static_cast<std::size_t>(j)] +
                              out->grad[static_cast<std::size_t>(s) * h + j];
                double dov = dout * gtc[j];
                double dcv = dc[static_cast<std::size_t>(j)] +
                             dout * go[j] * (1.0 - gtc[j] * gtc[j]);
                double cprev = c_in ? c_in[j] : 0.0;
                double div = dcv * gu[j];
                double dfv = dcv * cprev;
                double duv = dcv * gi[j];
                dc[static_cast<std::size_t>(j)] = dcv * gf[j];
                drow[j] = div * gi[j] * (1.0 - gi[j]);
                drow[h + j] = dfv * gf[j] * (1.0 - gf[j]);
                drow[2 * h + j] = dov * go[j] * (1.0 - go[j]);
                drow[3 * h + j] = duv * (1.0 - gu[j] * gu[j]);
            }
            // Carry into the previous hidden state: dgates_s . Wh^T.
            std::fill(dh.begin(), dh.end(), 0.0);
            if (s > 0)
                for (int p = 0; p < h; ++p) {
                    const double* wrow = wh->data.data() + static_cast<std::size_t>(p) * h4;
                    double sum = 0.0;
                    for (int j = 0; j < h4; ++j) sum += wrow[j] * drow[j];
                    dh[static_cast<std::size_t>(p)] = sum;
                }
        }

        if (dpre)
            for (int s = 0; s < l; ++s) {
                double* dst = dpre + static_cast<std::size_t>(
                                         (*order_ptr)[static_cast<std::size_t>(s)]) * h4;
                const double* src = dgates.data() + static_cast<std::size_t>(s) * h4;
                for (int j = 0; j < h4; ++j) dst[j] += src[j];
            }
        if (dwh)
            // dWh = Hprev^T . dGates, one pass over the weight-shaped buffer.
            for (int p = 0; p < h; ++p) {
                double* dst = dwh + static_cast<std::size_t>(p) * h4;
                for (int s = 0; s < l; ++s) {
                    double hv = at(6, s)[p];
                    if (hv == 0.0) continue;
                    const double* src = dgates.data() + static_cast<std::size_t>(s) * h4;
                    for (int j = 0; j < h4; ++j) dst[j] += hv * src[j];
                }
            }
    });
    return out;
}

}  // namespace

TensorPtr bilstm_encode(Graph& g, const TensorPtr& token_matrix, const BiLstmParams& params,
                        bool train_mode, Rng* dropout_rng) {
    if (token_matrix->rank() != 2 || token_matrix->dim(0) < 1)
        throw ShapeError("encoder expects a non-empty l x D matrix, got " +
                         token_matrix->shape_str());
    if (params.layers() == 0) throw ShapeError("encoder has no layers");

    int l = token_matrix->dim(0);
    std::vector<int> fwd_order(static_cast<std::size_t>(l));
    std::iota(fwd_order.begin(), fwd_order.end(), 0);
    std::vector<int> bwd_order(fwd_order.rbegin(), fwd_order.rend());

    TensorPtr layer_in = token_matrix;
    for (int layer = 0; layer < params.layers(); ++layer) {
        const auto& pf = params.forward[static_cast<std::size_t>(layer)];
        const auto& pb = params.backward[static_cast<std::size_t>(layer)];
        if (layer_in->dim(1) != pf.input_dim)
            throw ShapeError("layer " + std::to_string(layer) + " expects input dim " +
                             std::to_string(pf.input_dim) + ", got " + layer_in->shape_str());

        auto pre_f = g.add_row_broadcast(g.matmul(layer_in, pf.weight_x), pf.bias);
        auto pre_b = g.add_row_broadcast(g.matmul(layer_in, pb.weight_x), pb.bias);
        auto fwd = lstm_scan(g, pre_f, pf.weight_h, fwd_order);
        auto bwd = lstm_scan(g, pre_b, pb.weight_h, bwd_order);

        // fwd row t pairs with bwd row l-1-t (the same token).
        std::vector<TensorPtr> rows;
        rows.reserve(static_cast<std::size_t>(l));
        for (int t = 0; t < l; ++t)
            rows.push_back(g.concat({g.row(fwd, t), g.row(bwd, l - 1 - t)}));
        auto out = g.stack_rows(rows);

        if (train_mode && params.dropout > 0.0 && layer + 1 < params.layers()) {
            // Variational mask: one per-feature draw tiled over all time steps.
            int cols = out->dim(1);
            std::vector<double> mask(static_cast<std::size_t>(l) * cols);
            double keep = 1.0 - params.dropout;
            for (int j = 0; j < cols; ++j) {
                double v = dropout_rng->unit() < keep ? 1.0 / keep : 0.0;
                for (int t = 0; t < l; ++t)
                    mask[static_cast<std::size_t>(t) * cols + static_cast<std::size_t>(j)] = v;
            }
            out = g.apply_mask(out, std::move(mask));
        }
        layer_in = out;
    }
    return layer_in;
}

}  // namespace bner
