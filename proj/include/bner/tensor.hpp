#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "bner/rng.hpp"

namespace bner {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major float64 tensor. Immutable after forward construction except
// for the grad buffer; `leaf` marks externally owned tensors (parameters and
// constants) as opposed to graph-produced intermediates.
class Tensor {
public:
    Tensor(std::vector<int> shape, bool requires_grad);

    static TensorPtr zeros(std::vector<int> shape, bool requires_grad = false);
    static TensorPtr of(std::vector<int> shape, std::vector<double> values,
                        bool requires_grad = false);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int size() const { return static_cast<int>(data.size()); }

    double& at(int i) { return data[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return data[static_cast<std::size_t>(i * dim(1) + j)]; }
    double at(int i) const { return data[static_cast<std::size_t>(i)]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i * dim(1) + j)]; }

    std::string shape_str() const;

    std::vector<double> data;
    std::vector<double> grad;  // allocated by Graph::backward for intermediates
    bool requires_grad = false;
    bool leaf = true;
    std::string name;  // parameter name; empty for intermediates

private:
    std::vector<int> shape_;
};

// Reusable leaf-gradient storage. Buffers persist across graphs (allocating
// and faulting tens of megabytes per sentence dominates backward otherwise);
// a generation counter zeroes them lazily on first touch after reset().
class GradStore {
public:
    void reset() { ++generation_; }

    std::vector<double>& acquire(const Tensor* t);
    // Buffer written in the current generation, or nullptr.
    const std::vector<double>* current(const Tensor* t) const;

private:
    struct Slot {
        std::uint64_t generation = 0;
        std::vector<double> buf;
    };
    std::unordered_map<const Tensor*, Slot> slots_;
    std::uint64_t generation_ = 1;
};

// Tape of recorded operations. Ops append a node as they produce their output,
// so the tape order is already topological; backward walks it once in reverse.
// Gradients of leaf tensors go to a graph-local map (or an external GradStore)
// so that several graphs can run on different threads against the same
// (read-only) parameters.
class Graph {
public:
    Graph() = default;
    explicit Graph(GradStore* store) : store_(store) {}
    // out = a . b for ranks (2,2)->2, (1,2)->1 (row vector), (2,1)->1.
    TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
    TensorPtr transpose(const TensorPtr& a);
    TensorPtr add(const TensorPtr& a, const TensorPtr& b);
    // m: r x k, v: k, added to every row.
    TensorPtr add_row_broadcast(const TensorPtr& m, const TensorPtr& v);
    TensorPtr mul(const TensorPtr& a, const TensorPtr& b);  // elementwise
    TensorPtr tanh(const TensorPtr& a);
    TensorPtr sigmoid(const TensorPtr& a);
    TensorPtr concat(const std::vector<TensorPtr>& parts);  // rank-1, last axis
    TensorPtr slice(const TensorPtr& v, int start, int len);  // rank-1
    TensorPtr row(const TensorPtr& m, int i);                 // rank-2 -> rank-1
    TensorPtr stack_rows(const std::vector<TensorPtr>& rows);
    TensorPtr max_over_rows(const TensorPtr& m);  // column max, ties -> lowest row
    // Elementwise product with a constant mask (inverted-dropout values).
    TensorPtr apply_mask(const TensorPtr& a, std::vector<double> mask);
    // Draws a keep/drop mask from rng; rate 0 is the identity.
    TensorPtr dropout(const TensorPtr& a, double rate, Rng& rng);
    // out[k] = sum_{p,q} h1[p] U[p,k,q] h2[q];  U: d1 x c x d2.
    TensorPtr bilinear(const TensorPtr& h1, const TensorPtr& u, const TensorPtr& h2);
    // Scalar sum_i a[i] * weights[i] over the flattened tensor.
    TensorPtr sum_weighted(const TensorPtr& a, std::vector<double> weights);
    // -log softmax(logits)[gold], max-subtraction stabilized. Scalar {1}.
    TensorPtr softmax_cross_entropy(const TensorPtr& logits, int gold);

    // Full span scoring map: hs, he: l x d; u: d x c x d; w: 2d x c; b: c.
    // out[s,e,k] = hs[s]^T U_k he[e] (if use_bilinear) + W(hs[s] (+) he[e])[k] + b[k].
    TensorPtr biaffine_scores(const TensorPtr& hs, const TensorPtr& he,
                              const TensorPtr& u, const TensorPtr& w,
                              const TensorPtr& b, bool use_bilinear);

    // Sum of softmax cross-entropy over all cells with s <= e; gold is an
    // l*l row-major category map (entries with s > e are ignored).
    TensorPtr span_cross_entropy(const TensorPtr& scores, const std::vector<int>& gold);

    void backward(const TensorPtr& loss);

    // Extension hooks for fused operations defined outside this library:
    // allocate a graph-owned output, fetch the gradient buffer of any tensor
    // inside a backward closure (nullptr if no gradient is needed), and
    // register the closure on the tape.
    TensorPtr make_output(std::vector<int> shape, bool requires_grad);
    double* grad_buffer(const TensorPtr& t) { return grad_dst(t); }
    void record_custom(TensorPtr out, std::function<void()> back);

    // Gradient of `loss` w.r.t. a leaf tensor; empty vector if untouched.
    const std::vector<double>& leaf_grad(const TensorPtr& t) const;

private:
    struct Node {
        TensorPtr out;
        std::function<void()> back;
    };

    TensorPtr make(std::vector<int> shape, bool requires_grad);
    void record(TensorPtr out, std::function<void()> back);
    // Destination buffer for a tensor's gradient, or nullptr if none is needed.
    double* grad_dst(const TensorPtr& t);

    std::vector<Node> tape_;
    std::unordered_map<const Tensor*, std::vector<double>> leaf_grads_;
    GradStore* store_ = nullptr;
};

}  // namespace bner
