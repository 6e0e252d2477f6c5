#include "bner/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bner/common.hpp"

namespace bner {

namespace {

std::size_t shape_product(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("non-positive dimension in tensor shape");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, bool rg)
    : data(shape_product(shape), 0.0), requires_grad(rg), shape_(std::move(shape)) {}

TensorPtr Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

TensorPtr Tensor::of(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    auto t = std::make_shared<Tensor>(std::move(shape), requires_grad);
    if (values.size() != t->data.size())
        throw ShapeError("tensor data length does not match shape " + t->shape_str());
    t->data = std::move(values);
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
}

TensorPtr Graph::make(std::vector<int> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>(std::move(shape), requires_grad);
    t->leaf = false;
    return t;
}

void Graph::record(TensorPtr out, std::function<void()> back) {
    if (out->requires_grad) tape_.push_back({std::move(out), std::move(back)});
}

TensorPtr Graph::make_output(std::vector<int> shape, bool requires_grad) {
    return make(std::move(shape), requires_grad);
}

void Graph::record_custom(TensorPtr out, std::function<void()> back) {
    record(std::move(out), std::move(back));
}

std::vector<double>& GradStore::acquire(const Tensor* t) {
    auto& slot = slots_[t];
    if (slot.generation != generation_) {
        slot.generation = generation_;
        slot.buf.assign(t->data.size(), 0.0);
    }
    return slot.buf;
}

const std::vector<double>* GradStore::current(const Tensor* t) const {
    auto it = slots_.find(t);
    if (it == slots_.end() || it->second.generation != generation_) return nullptr;
    return &it->second.buf;
}

double* Graph::grad_dst(const TensorPtr& t) {
    if (!t->requires_grad) return nullptr;
    if (t->leaf) {
        if (store_) return store_->acquire(t.get()).data();
        auto& buf = leaf_grads_[t.get()];
        if (buf.empty()) buf.assign(t->data.size(), 0.0);
        return buf.data();
    }
    if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
    return t->grad.data();
}

void Graph::backward(const TensorPtr& loss) {
    if (loss->size() != 1) throw ShapeError("backward expects a scalar, got " + loss->shape_str());
    if (loss->grad.empty()) loss->grad.assign(1, 0.0);
    loss->grad[0] += 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        if (it->out->grad.empty()) continue;  // no gradient flowed into this node
        it->back();
    }
}

const std::vector<double>& Graph::leaf_grad(const TensorPtr& t) const {
    static const std::vector<double> kEmpty;
    if (store_) {
        const auto* buf = store_->current(t.get());
        return buf ? *buf : kEmpty;
    }
    auto it = leaf_grads_.find(t.get());
    return it == leaf_grads_.end() ? kEmpty : it->second;
}

TensorPtr Graph::matmul(const TensorPtr& a, const TensorPtr& b) {
    int ra = a->rank(), rb = b->rank();
    if ((ra != 1 && ra != 2) || (rb != 1 && rb != 2) || (ra == 1 && rb == 1))
        throw ShapeError("matmul on shapes " + a->shape_str() + " and " + b->shape_str());
    int m = ra == 2 ? a->dim(0) : 1;
    int k = ra == 2 ? a->dim(1) : a->dim(0);
    int k2 = rb == 2 ? b->dim(0) : b->dim(0);
    int n = rb == 2 ? b->dim(1) : 1;
    if (k != k2)
        throw ShapeError("matmul inner dimension mismatch: " + a->shape_str() + " vs " +
                         b->shape_str());

    std::vector<int> out_shape;
    if (ra == 2 && rb == 2) out_shape = {m, n};
    else if (ra == 1) out_shape = {n};
    else out_shape = {m};

    auto out = make(out_shape, a->requires_grad || b->requires_grad);
    const double* pa = a->data.data();
    const double* pb = b->data.data();
    double* pc = out->data.data();
    // k-outer keeps each row of b in cache while m stays small (the common
    // shape here is a handful of sequence rows against a large weight matrix).
    for (int p = 0; p < k; ++p) {
        const double* brow = pb + p * n;
        for (int i = 0; i < m; ++i) {
            double av = pa[i * k + p];
            if (av == 0.0) continue;
            double* crow = pc + i * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }

    Graph* g = this;
    record(out, [g, a, b, out, m, k, n] {
        const double* gout = out->grad.data();
        if (double* ga = g->grad_dst(a)) {
            // dA = G . B^T, one pass over B
            const double* pb = b->data.data();
            for (int p = 0; p < k; ++p) {
                const double* brow = pb + p * n;
                for (int i = 0; i < m; ++i) {
                    const double* grow = gout + i * n;
                    double s = 0.0;
                    for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                    ga[i * k + p] += s;
                }
            }
        }
        if (double* gb = g->grad_dst(b)) {
            // dB = A^T . G, one pass over the B-shaped gradient
            const double* pa = a->data.data();
            for (int p = 0; p < k; ++p) {
                double* brow = gb + p * n;
                for (int i = 0; i < m; ++i) {
                    double av = pa[i * k + p];
                    if (av == 0.0) continue;
                    const double* grow = gout + i * n;
                    for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
                }
            }
        }
    });
    return out;
}

TensorPtr Graph::transpose(const TensorPtr& a) {
    if (a->rank() != 2) throw ShapeError("transpose expects rank 2, got " + a->shape_str());
    int r = a->dim(0), c = a->dim(1);
    auto out = make({c, r}, a->requires_grad);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out->data[static_cast<std::size_t>(j * r + i)] = a->at(i, j);
    Graph* g = this;
    record(out, [g, a, out, r, c] {
        if (double* ga = g->grad_dst(a))
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) ga[i * c + j] += out->grad[static_cast<std::size_t>(j * r + i)];
    });
    return out;
}

TensorPtr Graph::add(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape() != b->shape())
        throw ShapeError("add shape mismatch: " + a->shape_str() + " vs " + b->shape_str());
    auto out = make(a->shape(), a->requires_grad || b->requires_grad);
    for (int i = 0; i < out->size(); ++i) out->at(i) = a->at(i) + b->at(i);
    Graph* g = this;
    record(out, [g, a, b, out] {
        if (double* ga = g->grad_dst(a))
            for (int i = 0; i < out->size(); ++i) ga[i] += out->grad[static_cast<std::size_t>(i)];
        if (double* gb = g->grad_dst(b))
            for (int i = 0; i < out->size(); ++i) gb[i] += out->grad[static_cast<std::size_t>(i)];
    });
    return out;
}

TensorPtr Graph::add_row_broadcast(const TensorPtr& m, const TensorPtr& v) {
    if (m->rank() != 2 || v->rank() != 1 || m->dim(1) != v->dim(0))
        throw ShapeError("add_row_broadcast on " + m->shape_str() + " and " + v->shape_str());
    int r = m->dim(0), c = m->dim(1);
    auto out = make({r, c}, m->requires_grad || v->requires_grad);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out->at(i, j) = m->at(i, j) + v->at(j);
    Graph* g = this;
    record(out, [g, m, v, out, r, c] {
        if (double* gm = g->grad_dst(m))
            for (int i = 0; i < r * c; ++i) gm[i] += out->grad[static_cast<std::size_t>(i)];
        if (double* gv = g->grad_dst(v))
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) gv[j] += out->grad[static_cast<std::size_t>(i * c + j)];
    });
    return out;
}

TensorPtr Graph::mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape() != b->shape())
        throw ShapeError("mul shape mismatch: " + a->shape_str() + " vs " + b->shape_str());
    auto out = make(a->shape(), a->requires_grad || b->requires_grad);
    for (int i = 0; i < out->size(); ++i) out->at(i) = a->at(i) * b->at(i);
    Graph* g = this;
    record(out, [g, a, b, out] {
        if (double* ga = g->grad_dst(a))
            for (int i = 0; i < out->size(); ++i)
                ga[i] += out->grad[static_cast<std::size_t>(i)] * b->at(i);
        if (double* gb = g->grad_dst(b))
            for (int i = 0; i < out->size(); ++i)
                gb[i] += out->grad[static_cast<std::size_t>(i)] * a->at(i);
    });
    return out;
}

TensorPtr Graph::tanh(const TensorPtr& a) {
    auto out = make(a->shape(), a->requires_grad);
    for (int i = 0; i < out->size(); ++i) out->at(i) = std::tanh(a->at(i));
    Graph* g = this;
    record(out, [g, a, out] {
        if (double* ga = g->grad_dst(a))
            for (int i = 0; i < out->size(); ++i) {
                double y = out->at(i);
                ga[i] += out->grad[static_cast<std::size_t>(i)] * (1.0 - y * y);
            }
    });
    return out;
}

TensorPtr Graph::sigmoid(const TensorPtr& a) {
    auto out = make(a->shape(), a->requires_grad);
    for (int i = 0; i < out->size(); ++i) out->at(i) = 1.0 / (1.0 + std::exp(-a->at(i)));
    Graph* g = this;
    record(out, [g, a, out] {
        if (double* ga = g->grad_dst(a))
            for (int i = 0; i < out->size(); ++i) {
                double y = out->at(i);
                ga[i] += out->grad[static_cast<std::size_t>(i)] * y * (1.0 - y);
            }
    });
    return out;
}

TensorPtr Graph::concat(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    int total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p->rank() != 1) throw ShapeError("concat expects rank-1 parts, got " + p->shape_str());
        total += p->dim(0);
        rg = rg || p->requires_grad;
    }
    auto out = make({total}, rg);
    int off = 0;
    for (const auto& p : parts) {
        std::copy(p->data.begin(), p->data.end(), out->data.begin() + off);
        off += p->dim(0);
    }
    Graph* g = this;
    record(out, [g, parts, out] {
        int off = 0;
        for (const auto& p : parts) {
            if (double* gp = g->grad_dst(p))
                for (int i = 0; i < p->size(); ++i)
                    gp[i] += out->grad[static_cast<std::size_t>(off + i)];
            off += p->dim(0);
        }
    });
    return out;
}

TensorPtr Graph::slice(const TensorPtr& v, int start, int len) {
    if (v->rank() != 1 || start < 0 || len <= 0 || start + len > v->dim(0))
        throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of range for " + v->shape_str());
    auto out = make({len}, v->requires_grad);
    std::copy(v->data.begin() + start, v->data.begin() + start + len, out->data.begin());
    Graph* g = this;
    record(out, [g, v, out, start, len] {
        if (double* gv = g->grad_dst(v))
            for (int i = 0; i < len; ++i) gv[start + i] += out->grad[static_cast<std::size_t>(i)];
    });
    return out;
}

TensorPtr Graph::row(const TensorPtr& m, int i) {
    if (m->rank() != 2 || i < 0 || i >= m->dim(0))
        throw ShapeError("row " + std::to_string(i) + " out of range for " + m->shape_str());
    int c = m->dim(1);
    auto out = make({c}, m->requires_grad);
    std::copy(m->data.begin() + static_cast<std::size_t>(i) * c,
              m->data.begin() + static_cast<std::size_t>(i + 1) * c, out->data.begin());
    Graph* g = this;
    record(out, [g, m, out, i, c] {
        if (double* gm = g->grad_dst(m))
            for (int j = 0; j < c; ++j)
                gm[i * c + j] += out->grad[static_cast<std::size_t>(j)];
    });
    return out;
}

TensorPtr Graph::stack_rows(const std::vector<TensorPtr>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows of zero rows");
    int c = rows[0]->dim(0);
    bool rg = false;
    for (const auto& r : rows) {
        if (r->rank() != 1 || r->dim(0) != c)
            throw ShapeError("stack_rows with inconsistent row shape " + r->shape_str());
        rg = rg || r->requires_grad;
    }
    int n = static_cast<int>(rows.size());
    auto out = make({n, c}, rg);
    for (int i = 0; i < n; ++i)
        std::copy(rows[static_cast<std::size_t>(i)]->data.begin(),
                  rows[static_cast<std::size_t>(i)]->data.end(),
                  out->data.begin() + static_cast<std::size_t>(i) * c);
    Graph* g = this;
    record(out, [g, rows, out, c] {
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (double* gr = g->grad_dst(rows[i]))
                for (int j = 0; j < c; ++j)
                    gr[j] += out->grad[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(j)];
    });
    return out;
}

TensorPtr Graph::max_over_rows(const TensorPtr& m) {
    if (m->rank() != 2) throw ShapeError("max_over_rows expects rank 2, got " + m->shape_str());
    int r = m->dim(0), c = m->dim(1);
    auto out = make({c}, m->requires_grad);
    auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(c), 0);
    for (int j = 0; j < c; ++j) {
        double best = m->at(0, j);
        int bi = 0;
        for (int i = 1; i < r; ++i)
            if (m->at(i, j) > best) {
                best = m->at(i, j);
                bi = i;
            }
        out->at(j) = best;
        (*argmax)[static_cast<std::size_t>(j)] = bi;
    }
    Graph* g = this;
    record(out, [g, m, out, argmax, c] {
        if (double* gm = g->grad_dst(m))
            for (int j = 0; j < c; ++j)
                gm[(*argmax)[static_cast<std::size_t>(j)] * c + j] +=
                    out->grad[static_cast<std::size_t>(j)];
    });
    return out;
}

TensorPtr Graph::apply_mask(const TensorPtr& a, std::vector<double> mask) {
    if (static_cast<int>(mask.size()) != a->size())
        throw ShapeError("mask length does not match tensor " + a->shape_str());
    auto out = make(a->shape(), a->requires_grad);
    for (int i = 0; i < out->size(); ++i) out->at(i) = a->at(i) * mask[static_cast<std::size_t>(i)];
    Graph* g = this;
    auto mk = std::make_shared<std::vector<double>>(std::move(mask));
    record(out, [g, a, out, mk] {
        if (double* ga = g->grad_dst(a))
            for (int i = 0; i < out->size(); ++i)
                ga[i] += out->grad[static_cast<std::size_t>(i)] * (*mk)[static_cast<std::size_t>(i)];
    });
    return out;
}

TensorPtr Graph::dropout(const TensorPtr& a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw ShapeError("dropout rate must be < 1");
    std::vector<double> mask(static_cast<std::size_t>(a->size()));
    double keep = 1.0 - rate;
    for (auto& v : mask) v = rng.unit() < keep ? 1.0 / keep : 0.0;
    return apply_mask(a, std::move(mask));
}

TensorPtr Graph::bilinear(const TensorPtr& h1, const TensorPtr& u, const TensorPtr& h2) {
    if (h1->rank() != 1 || h2->rank() != 1 || u->rank() != 3 || u->dim(0) != h1->dim(0) ||
        u->dim(2) != h2->dim(0))
        throw ShapeError("bilinear dims: h1 " + h1->shape_str() + ", U " + u->shape_str() +
                         ", h2 " + h2->shape_str());
    int d1 = h1->dim(0), c = u->dim(1), d2 = h2->dim(0);
    auto out = make({c}, h1->requires_grad || u->requires_grad || h2->requires_grad);
    const double* pu = u->data.data();
    for (int p = 0; p < d1; ++p) {
        double hv = h1->at(p);
        if (hv == 0.0) continue;
        for (int k = 0; k < c; ++k) {
            const double* urow = pu + (p * c + k) * d2;
            double s = 0.0;
            for (int q = 0; q < d2; ++q) s += urow[q] * h2->at(q);
            out->at(k) += hv * s;
        }
    }
    Graph* g = this;
    record(out, [g, h1, u, h2, out, d1, c, d2] {
        const double* pu = u->data.data();
        const double* gout = out->grad.data();
        double* g1 = g->grad_dst(h1);
        double* gu = g->grad_dst(u);
        double* g2 = g->grad_dst(h2);
        for (int p = 0; p < d1; ++p)
            for (int k = 0; k < c; ++k) {
                const double* urow = pu + (p * c + k) * d2;
                double gk = gout[k];
                if (g1) {
                    double s = 0.0;
                    for (int q = 0; q < d2; ++q) s += urow[q] * h2->at(q);
                    g1[p] += gk * s;
                }
                double h1p = h1->at(p);
                if (gu)
                    for (int q = 0; q < d2; ++q)
                        gu[(p * c + k) * d2 + q] += gk * h1p * h2->at(q);
                if (g2)
                    for (int q = 0; q < d2; ++q) g2[q] += gk * h1p * urow[q];
            }
    });
    return out;
}

namespace {

// Stable softmax of `logits` into `probs`; returns log(sum exp(x - max)) + max.
double log_sum_exp(const double* logits, int c, std::vector<double>& probs) {
    double mx = logits[0];
    for (int i = 1; i < c; ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    probs.resize(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) {
        probs[static_cast<std::size_t>(i)] = std::exp(logits[i] - mx);
        z += probs[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < c; ++i) probs[static_cast<std::size_t>(i)] /= z;
    return std::log(z) + mx;
}

}  // namespace

TensorPtr Graph::sum_weighted(const TensorPtr& a, std::vector<double> weights) {
    if (static_cast<int>(weights.size()) != a->size())
        throw ShapeError("weight length does not match tensor " + a->shape_str());
    auto out = make({1}, a->requires_grad);
    double s = 0.0;
    for (int i = 0; i < a->size(); ++i) s += a->at(i) * weights[static_cast<std::size_t>(i)];
    out->at(0) = s;
    Graph* g = this;
    auto wk = std::make_shared<std::vector<double>>(std::move(weights));
    record(out, [g, a, out, wk] {
        if (double* ga = g->grad_dst(a)) {
            double go = out->grad[0];
            for (int i = 0; i < a->size(); ++i) ga[i] += go * (*wk)[static_cast<std::size_t>(i)];
        }
    });
    return out;
}

TensorPtr Graph::softmax_cross_entropy(const TensorPtr& logits, int gold) {
    if (logits->rank() != 1) throw ShapeError("softmax_cross_entropy expects rank 1 logits");
    int c = logits->dim(0);
    if (gold < 0 || gold >= c)
        throw ShapeError("gold index " + std::to_string(gold) + " out of range for " +
                         std::to_string(c) + " categories");
    std::vector<double> probs;
    double lse = log_sum_exp(logits->data.data(), c, probs);
    auto out = make({1}, logits->requires_grad);
    out->at(0) = lse - logits->at(gold);
    Graph* g = this;
    auto pk = std::make_shared<std::vector<double>>(std::move(probs));
    record(out, [g, logits, out, pk, gold, c] {
        if (double* gl = g->grad_dst(logits)) {
            double go = out->grad[0];
            for (int i = 0; i < c; ++i)
                gl[i] += go * ((*pk)[static_cast<std::size_t>(i)] - (i == gold ? 1.0 : 0.0));
        }
    });
    return out;
}

TensorPtr Graph::biaffine_scores(const TensorPtr& hs, const TensorPtr& he, const TensorPtr& u,
                                 const TensorPtr& w, const TensorPtr& b, bool use_bilinear) {
    if (hs->rank() != 2 || he->rank() != 2 || hs->dim(1) != he->dim(1) ||
        hs->dim(0) != he->dim(0))
        throw ShapeError("biaffine_scores heads: " + hs->shape_str() + " vs " + he->shape_str());
    int l = hs->dim(0), d = hs->dim(1);
    if (u->rank() != 3 || u->dim(0) != d || u->dim(2) != d)
        throw ShapeError("biaffine_scores U shape " + u->shape_str());
    int c = u->dim(1);
    if (w->rank() != 2 || w->dim(0) != 2 * d || w->dim(1) != c || b->rank() != 1 || b->dim(0) != c)
        throw ShapeError("biaffine_scores W/b shapes " + w->shape_str() + ", " + b->shape_str());

    bool rg = hs->requires_grad || he->requires_grad || u->requires_grad || w->requires_grad ||
              b->requires_grad;
    auto out = make({l, l, c}, rg);

    // Linear term decomposes: W(hs (+) he)[k] = (Hs Ws)[s,k] + (He We)[e,k].
    std::vector<double> a_lin(static_cast<std::size_t>(l) * c, 0.0);
    std::vector<double> b_lin(static_cast<std::size_t>(l) * c, 0.0);
    for (int i = 0; i < l; ++i)
        for (int p = 0; p < d; ++p) {
            double hv = hs->at(i, p), ev = he->at(i, p);
            const double* ws = w->data.data() + p * c;
            const double* we = w->data.data() + (d + p) * c;
            for (int k = 0; k < c; ++k) {
                a_lin[static_cast<std::size_t>(i * c + k)] += hv * ws[k];
                b_lin[static_cast<std::size_t>(i * c + k)] += ev * we[k];
            }
        }

    // Bilinear term per category: S_k = Hs M_k He^T with M_k = U[:,k,:].
    std::vector<double> hsm;  // l x d buffer for Hs M_k
    if (use_bilinear) hsm.assign(static_cast<std::size_t>(l) * d, 0.0);
    for (int k = 0; k < c; ++k) {
        if (use_bilinear) {
            std::fill(hsm.begin(), hsm.end(), 0.0);
            for (int i = 0; i < l; ++i)
                for (int p = 0; p < d; ++p) {
                    double hv = hs->at(i, p);
                    if (hv == 0.0) continue;
                    const double* urow = u->data.data() + (p * c + k) * d;
                    double* dst = hsm.data() + static_cast<std::size_t>(i) * d;
                    for (int q = 0; q < d; ++q) dst[q] += hv * urow[q];
                }
        }
        for (int s = 0; s < l; ++s)
            for (int e = 0; e < l; ++e) {
                double v = a_lin[static_cast<std::size_t>(s * c + k)] +
                           b_lin[static_cast<std::size_t>(e * c + k)] + b->at(k);
                if (use_bilinear) {
                    const double* hrow = hsm.data() + static_cast<std::size_t>(s) * d;
                    double dot = 0.0;
                    for (int q = 0; q < d; ++q) dot += hrow[q] * he->at(e, q);
                    v += dot;
                }
                out->data[(static_cast<std::size_t>(s) * l + e) * c + k] = v;
            }
    }

    Graph* g = this;
    record(out, [g, hs, he, u, w, b, out, l, d, c, use_bilinear] {
        const double* go = out->grad.data();
        double* ghs = g->grad_dst(hs);
        double* ghe = g->grad_dst(he);
        double* gu = use_bilinear ? g->grad_dst(u) : nullptr;
        double* gw = g->grad_dst(w);
        double* gb = g->grad_dst(b);

        // Row/column sums of G_k feed the linear and bias terms.
        std::vector<double> gs_sum(static_cast<std::size_t>(l) * c, 0.0);  // sum_e g[s,e,k]
        std::vector<double> ge_sum(static_cast<std::size_t>(l) * c, 0.0);  // sum_s g[s,e,k]
        for (int s = 0; s < l; ++s)
            for (int e = 0; e < l; ++e) {
                const double* cell = go + (static_cast<std::size_t>(s) * l + e) * c;
                for (int k = 0; k < c; ++k) {
                    gs_sum[static_cast<std::size_t>(s * c + k)] += cell[k];
                    ge_sum[static_cast<std::size_t>(e * c + k)] += cell[k];
                }
            }
        if (gb)
            for (int s = 0; s < l; ++s)
                for (int k = 0; k < c; ++k) gb[k] += gs_sum[static_cast<std::size_t>(s * c + k)];
        if (gw)
            for (int i = 0; i < l; ++i)
                for (int p = 0; p < d; ++p)
                    for (int k = 0; k < c; ++k) {
                        gw[p * c + k] += hs->at(i, p) * gs_sum[static_cast<std::size_t>(i * c + k)];
                        gw[(d + p) * c + k] +=
                            he->at(i, p) * ge_sum[static_cast<std::size_t>(i * c + k)];
                    }
        if (ghs)
            for (int i = 0; i < l; ++i)
                for (int k = 0; k < c; ++k) {
                    double gv = gs_sum[static_cast<std::size_t>(i * c + k)];
                    if (gv == 0.0) continue;
                    const double* ws = w->data.data();
                    for (int p = 0; p < d; ++p) ghs[i * d + p] += gv * ws[p * c + k];
                }
        if (ghe)
            for (int i = 0; i < l; ++i)
                for (int k = 0; k < c; ++k) {
                    double gv = ge_sum[static_cast<std::size_t>(i * c + k)];
                    if (gv == 0.0) continue;
                    const double* we = w->data.data();
                    for (int p = 0; p < d; ++p) ghe[i * d + p] += gv * we[(d + p) * c + k];
                }

        if (!use_bilinear) return;

        // Per category k: dHs += G_k He M_k^T, dHe += G_k^T Hs M_k, dM_k = Hs^T G_k He.
        std::vector<double> gkhe(static_cast<std::size_t>(l) * d);   // G_k . He
        std::vector<double> gkths(static_cast<std::size_t>(l) * d);  // G_k^T . Hs
        for (int k = 0; k < c; ++k) {
            std::fill(gkhe.begin(), gkhe.end(), 0.0);
            std::fill(gkths.begin(), gkths.end(), 0.0);
            for (int s = 0; s < l; ++s)
                for (int e = 0; e < l; ++e) {
                    double gv = go[(static_cast<std::size_t>(s) * l + e) * c + k];
                    if (gv == 0.0) continue;
                    for (int q = 0; q < d; ++q)
                        gkhe[static_cast<std::size_t>(s * d + q)] += gv * he->at(e, q);
                    for (int p = 0; p < d; ++p)
                        gkths[static_cast<std::size_t>(e * d + p)] += gv * hs->at(s, p);
                }
            if (ghs)
                for (int s = 0; s < l; ++s)
                    for (int p = 0; p < d; ++p) {
                        const double* urow = u->data.data() + (p * c + k) * d;
                        double sum = 0.0;
                        for (int q = 0; q < d; ++q)
                            sum += gkhe[static_cast<std::size_t>(s * d + q)] * urow[q];
                        ghs[s * d + p] += sum;
                    }
            if (ghe)
                for (int e = 0; e < l; ++e)
                    for (int q = 0; q < d; ++q) {
                        double sum = 0.0;
                        for (int p = 0; p < d; ++p)
                            sum += gkths[static_cast<std::size_t>(e * d + p)] *
                                   u->data[static_cast<std::size_t>((p * c + k) * d + q)];
                        ghe[e * d + q] += sum;
                    }
            if (gu)
                for (int p = 0; p < d; ++p)
                    for (int e = 0; e < l; ++e) {
                        double hv = gkths[static_cast<std::size_t>(e * d + p)];
                        if (hv == 0.0) continue;
                        double* urow = gu + (p * c + k) * d;
                        for (int q = 0; q < d; ++q) urow[q] += hv * he->at(e, q);
                    }
        }
    });
    return out;
}

TensorPtr Graph::span_cross_entropy(const TensorPtr& scores, const std::vector<int>& gold) {
    if (scores->rank() != 3 || scores->dim(0) != scores->dim(1))
        throw ShapeError("span_cross_entropy expects l x l x c scores, got " + scores->shape_str());
    int l = scores->dim(0), c = scores->dim(2);
    if (static_cast<int>(gold.size()) != l * l)
        throw ShapeError("gold map size does not match sentence length");

    double total = 0.0;
    auto probs = std::make_shared<std::vector<double>>(scores->data.size(), 0.0);
    std::vector<double> cell;
    for (int s = 0; s < l; ++s)
        for (int e = s; e < l; ++e) {
            int gidx = gold[static_cast<std::size_t>(s * l + e)];
            if (gidx < 0 || gidx >= c)
                throw ShapeError("gold category " + std::to_string(gidx) + " out of range at span (" +
                                 std::to_string(s) + "," + std::to_string(e) + ")");
            const double* logits = scores->data.data() + (static_cast<std::size_t>(s) * l + e) * c;
            double lse = log_sum_exp(logits, c, cell);
            total += lse - logits[gidx];
            std::copy(cell.begin(), cell.end(),
                      probs->begin() + (static_cast<std::size_t>(s) * l + e) * c);
        }

    auto out = make({1}, scores->requires_grad);
    out->at(0) = total;
    Graph* g = this;
    auto gold_copy = std::make_shared<std::vector<int>>(gold);
    record(out, [g, scores, out, probs, gold_copy, l, c] {
        if (double* gs = g->grad_dst(scores)) {
            double go = out->grad[0];
            for (int s = 0; s < l; ++s)
                for (int e = s; e < l; ++e) {
                    std::size_t base = (static_cast<std::size_t>(s) * l + e) * c;
                    int gidx = (*gold_copy)[static_cast<std::size_t>(s * l + e)];
                    for (int k = 0; k < c; ++k)
                        gs[base + k] += go * ((*probs)[base + k] - (k == gidx ? 1.0 : 0.0));
                }
        }
    });
    return out;
}

}  // namespace bner
