#include "remm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "remm/kernels.hpp"

namespace remm {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

float* Tensor::Node::grad_data() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
    return grad.data();
}

namespace {

using Node = Tensor::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_leaf(std::vector<int> shape, std::vector<float> data,
                  bool requires_grad) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw std::invalid_argument("tensor data length " +
                                    std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return n;
}

// Result node of an op; backward_fn is attached only when a parent needs it.
Tensor make_op(std::vector<int> shape, std::vector<float> data,
               std::vector<NodePtr> parents,
               std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->is_leaf = false;
    bool need = false;
    for (const auto& p : parents) need = need || p->requires_grad;
    n->requires_grad = need;
    if (need) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(n);
}

struct BroadcastPlan {
    std::vector<int> out_shape;
    std::vector<std::int64_t> stride_a, stride_b;  // 0 on broadcast axes
    bool same = false;
};

BroadcastPlan broadcast_shapes(const std::vector<int>& a,
                               const std::vector<int>& b) {
    BroadcastPlan plan;
    if (a == b) {
        plan.out_shape = a;
        plan.same = true;
        return plan;
    }
    const int rank = static_cast<int>(std::max(a.size(), b.size()));
    plan.out_shape.resize(rank);
    plan.stride_a.resize(rank);
    plan.stride_b.resize(rank);
    std::vector<std::int64_t> full_a(rank, 1), full_b(rank, 1);
    for (int i = 0; i < rank; ++i) {
        const int da = i < rank - static_cast<int>(a.size())
                           ? 1
                           : a[i - (rank - static_cast<int>(a.size()))];
        const int db = i < rank - static_cast<int>(b.size())
                           ? 1
                           : b[i - (rank - static_cast<int>(b.size()))];
        if (da != db && da != 1 && db != 1)
            throw std::invalid_argument("shapes not broadcastable: " +
                                        shape_str(a) + " vs " + shape_str(b));
        plan.out_shape[i] = std::max(da, db);
        full_a[i] = da;
        full_b[i] = db;
    }
    std::int64_t sa = 1, sb = 1;
    for (int i = rank - 1; i >= 0; --i) {
        plan.stride_a[i] = full_a[i] == 1 ? 0 : sa;
        plan.stride_b[i] = full_b[i] == 1 ? 0 : sb;
        sa *= full_a[i];
        sb *= full_b[i];
    }
    return plan;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename F>
void for_broadcast(const BroadcastPlan& plan, F&& fn) {
    const std::int64_t total = shape_numel(plan.out_shape);
    if (plan.same) {
        for (std::int64_t i = 0; i < total; ++i) fn(i, i, i);
        return;
    }
    const int rank = static_cast<int>(plan.out_shape.size());
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t io = 0; io < total; ++io) {
        fn(io, ia, ib);
        for (int d = rank - 1; d >= 0; --d) {
            ++idx[d];
            ia += plan.stride_a[d];
            ib += plan.stride_b[d];
            if (idx[d] < plan.out_shape[d]) break;
            ia -= plan.stride_a[d] * plan.out_shape[d];
            ib -= plan.stride_b[d] * plan.out_shape[d];
            idx[d] = 0;
        }
    }
}

Tensor binary_op(const Tensor& a, const Tensor& b, auto value_fn,
                 auto grad_fn) {
    const auto plan = broadcast_shapes(a.shape(), b.shape());
    std::vector<float> out(shape_numel(plan.out_shape));
    const float* pa = a.data();
    const float* pb = b.data();
    for_broadcast(plan, [&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
        out[io] = value_fn(pa[ia], pb[ib]);
    });
    auto an = a.node();
    auto bn = b.node();
    return make_op(
        plan.out_shape, std::move(out), {an, bn},
        [an, bn, plan, grad_fn](Node& self) {
            float* ga = an->requires_grad ? an->grad_data() : nullptr;
            float* gb = bn->requires_grad ? bn->grad_data() : nullptr;
            const float* pa = an->data.data();
            const float* pb = bn->data.data();
            const float* go = self.grad.data();
            for_broadcast(plan, [&](std::int64_t io, std::int64_t ia,
                                    std::int64_t ib) {
                const auto [da, db] = grad_fn(pa[ia], pb[ib]);
                if (ga) ga[ia] += go[io] * da;
                if (gb) gb[ib] += go[io] * db;
            });
        });
}

Tensor unary_op(const Tensor& a, auto value_fn, auto grad_fn) {
    std::vector<float> out(a.size());
    const float* pa = a.data();
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = value_fn(pa[i]);
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an, grad_fn](Node& self) {
        float* ga = an->grad_data();
        const float* pa = an->data.data();
        const float* po = self.data.data();
        const float* go = self.grad.data();
        for (std::int64_t i = 0; i < self.size(); ++i)
            ga[i] += go[i] * grad_fn(pa[i], po[i]);
    });
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape),
                            std::vector<float>(static_cast<std::size_t>(n)),
                            requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(make_leaf(
        std::move(shape),
        std::vector<float>(static_cast<std::size_t>(n), value), requires_grad));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data,
                         bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return from_data({}, {value}, requires_grad);
}

float Tensor::item() const {
    if (size() != 1)
        throw std::invalid_argument("item() on non-scalar tensor " +
                                    shape_str(shape()));
    return n_->data[0];
}

void Tensor::zero_grad() { n_->grad.clear(); }

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](float x, float y) { return x + y; },
        [](float, float) { return std::pair<float, float>{1.0f, 1.0f}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](float x, float y) { return x - y; },
        [](float, float) { return std::pair<float, float>{1.0f, -1.0f}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](float x, float y) { return x * y; },
        [](float x, float y) { return std::pair<float, float>{y, x}; });
}

Tensor scale(const Tensor& a, float c) {
    return unary_op(
        a, [c](float x) { return c * x; }, [c](float, float) { return c; });
}

Tensor add_const(const Tensor& a, float c) {
    return unary_op(
        a, [c](float x) { return x + c; }, [](float, float) { return 1.0f; });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, [](float x) { return x > 0.0f ? x : 0.0f; },
        [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor exp_(const Tensor& a) {
    return unary_op(
        a, [](float x) { return std::exp(x); },
        [](float, float y) { return y; });
}

Tensor log_(const Tensor& a) {
    return unary_op(
        a, [](float x) { return std::log(x); },
        [](float x, float) { return 1.0f / x; });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    const float* pa = a.data();
    for (std::int64_t i = 0; i < a.size(); ++i) acc += pa[i];
    auto an = a.node();
    return make_op({}, {static_cast<float>(acc)}, {an}, [an](Node& self) {
        const float g = self.grad[0];
        float* ga = an->grad_data();
        for (std::int64_t i = 0; i < an->size(); ++i) ga[i] += g;
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("mean of empty tensor");
    return scale(sum(a), 1.0f / static_cast<float>(a.size()));
}

Tensor l2norm_lastdim(const Tensor& a) {
    if (a.shape().empty())
        throw std::invalid_argument("l2norm_lastdim needs rank >= 1");
    const int dim = a.shape().back();
    const std::int64_t rows = a.size() / dim;
    constexpr float kEps = 1e-12f;
    std::vector<float> out(a.size());
    std::vector<float> norms(static_cast<std::size_t>(rows));
    const float* pa = a.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* row = pa + r * dim;
        float n = std::sqrt(kernels::dot(row, row, dim));
        norms[static_cast<std::size_t>(r)] = n;
        float* orow = out.data() + r * dim;
        if (n < kEps) {
            std::memcpy(orow, row, sizeof(float) * dim);
        } else {
            for (int i = 0; i < dim; ++i) orow[i] = row[i] / n;
        }
    }
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an},
                   [an, dim, rows, norms](Node& self) {
                       float* ga = an->grad_data();
                       const float* po = self.data.data();
                       const float* go = self.grad.data();
                       for (std::int64_t r = 0; r < rows; ++r) {
                           const float n = norms[static_cast<std::size_t>(r)];
                           const float* y = po + r * dim;
                           const float* g = go + r * dim;
                           float* gr = ga + r * dim;
                           if (n < kEps) {
                               for (int i = 0; i < dim; ++i) gr[i] += g[i];
                               continue;
                           }
                           const float gy = kernels::dot(g, y, dim);
                           for (int i = 0; i < dim; ++i)
                               gr[i] += (g[i] - gy * y[i]) / n;
                       }
                   });
}

Tensor l2norm_channels(const Tensor& a) {
    if (a.shape().size() != 3)
        throw std::invalid_argument("l2norm_channels expects [C,H,W], got " +
                                    shape_str(a.shape()));
    const int c = a.shape()[0];
    const std::int64_t plane =
        static_cast<std::int64_t>(a.shape()[1]) * a.shape()[2];
    constexpr float kEps = 1e-12f;
    std::vector<float> out(a.size());
    std::vector<float> norms(static_cast<std::size_t>(plane));
    const float* pa = a.data();
    for (std::int64_t p = 0; p < plane; ++p) {
        double sq = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            const float v = pa[ch * plane + p];
            sq += static_cast<double>(v) * v;
        }
        const float n = static_cast<float>(std::sqrt(sq));
        norms[static_cast<std::size_t>(p)] = n;
        for (int ch = 0; ch < c; ++ch)
            out[ch * plane + p] =
                n < kEps ? pa[ch * plane + p] : pa[ch * plane + p] / n;
    }
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an},
                   [an, c, plane, norms](Node& self) {
                       float* ga = an->grad_data();
                       const float* po = self.data.data();
                       const float* go = self.grad.data();
                       for (std::int64_t p = 0; p < plane; ++p) {
                           const float n = norms[static_cast<std::size_t>(p)];
                           if (n < kEps) {
                               for (int ch = 0; ch < c; ++ch)
                                   ga[ch * plane + p] += go[ch * plane + p];
                               continue;
                           }
                           double gy = 0.0;
                           for (int ch = 0; ch < c; ++ch)
                               gy += static_cast<double>(go[ch * plane + p]) *
                                     po[ch * plane + p];
                           for (int ch = 0; ch < c; ++ch)
                               ga[ch * plane + p] +=
                                   (go[ch * plane + p] -
                                    static_cast<float>(gy) * po[ch * plane + p]) /
                                   n;
                       }
                   });
}

Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != a.size())
        throw std::invalid_argument("reshape numel mismatch: " +
                                    shape_str(a.shape()) + " -> " +
                                    shape_str(new_shape));
    auto an = a.node();
    return make_op(std::move(new_shape), a.vec(), {an}, [an](Node& self) {
        float* ga = an->grad_data();
        const float* go = self.grad.data();
        for (std::int64_t i = 0; i < self.size(); ++i) ga[i] += go[i];
    });
}

// ---------------------------------------------------------------------------
// conv2d via im2col + sgemm

namespace {

struct ConvDims {
    int n, cin, h, w, cout, kh, kw, oh, ow;
};

void im2col(const float* img, const ConvDims& d, int stride, int pad,
            float* col) {
    // col is [cin*kh*kw, oh*ow]
    const int plane = d.h * d.w;
    for (int c = 0; c < d.cin; ++c) {
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj) {
                float* row = col + (static_cast<std::size_t>(c) * d.kh * d.kw +
                                    ki * d.kw + kj) *
                                       (d.oh * d.ow);
                for (int oy = 0; oy < d.oh; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= d.h) {
                        std::memset(row + static_cast<std::size_t>(oy) * d.ow,
                                    0, sizeof(float) * d.ow);
                        continue;
                    }
                    const float* src = img + c * plane + iy * d.w;
                    float* dst = row + static_cast<std::size_t>(oy) * d.ow;
                    if (stride == 1) {
                        // ix = ox + kj - pad; copy the in-bounds span,
                        // zero-fill the padded edges.
                        const int off = kj - pad;
                        const int ox0 = std::max(0, -off);
                        const int ox1 = std::min(d.ow, d.w - off);
                        if (ox0 > 0)
                            std::memset(dst, 0, sizeof(float) * ox0);
                        if (ox1 > ox0)
                            std::memcpy(dst + ox0, src + ox0 + off,
                                        sizeof(float) * (ox1 - ox0));
                        if (ox1 < d.ow)
                            std::memset(dst + ox1, 0,
                                        sizeof(float) * (d.ow - ox1));
                        continue;
                    }
                    for (int ox = 0; ox < d.ow; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const float* col, const ConvDims& d, int stride, int pad,
                float* img) {
    const int plane = d.h * d.w;
    for (int c = 0; c < d.cin; ++c) {
        for (int ki = 0; ki < d.kh; ++ki) {
            for (int kj = 0; kj < d.kw; ++kj) {
                const float* row =
                    col + (static_cast<std::size_t>(c) * d.kh * d.kw +
                           ki * d.kw + kj) *
                              (d.oh * d.ow);
                for (int oy = 0; oy < d.oh; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= d.h) continue;
                    float* dst = img + c * plane + iy * d.w;
                    const float* src = row + static_cast<std::size_t>(oy) * d.ow;
                    if (stride == 1) {
                        const int off = kj - pad;
                        const int ox0 = std::max(0, -off);
                        const int ox1 = std::min(d.ow, d.w - off);
                        for (int ox = ox0; ox < ox1; ++ox)
                            dst[ox + off] += src[ox];
                        continue;
                    }
                    for (int ox = 0; ox < d.ow; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
    if (input.shape().size() != 4 || weight.shape().size() != 4)
        throw std::invalid_argument("conv2d expects input [N,C,H,W] " +
                                    shape_str(input.shape()) +
                                    " and weight [O,I,kh,kw] " +
                                    shape_str(weight.shape()));
    if (stride < 1) throw std::invalid_argument("conv2d stride must be >= 1");
    ConvDims d;
    d.n = input.shape()[0];
    d.cin = input.shape()[1];
    d.h = input.shape()[2];
    d.w = input.shape()[3];
    d.cout = weight.shape()[0];
    d.kh = weight.shape()[2];
    d.kw = weight.shape()[3];
    if (weight.shape()[1] != d.cin)
        throw std::invalid_argument(
            "conv2d channel mismatch: input " + shape_str(input.shape()) +
            " vs kernel " + shape_str(weight.shape()));
    d.oh = (d.h + 2 * padding - d.kh) / stride + 1;
    d.ow = (d.w + 2 * padding - d.kw) / stride + 1;
    if (d.oh < 1 || d.ow < 1)
        throw std::invalid_argument("conv2d output would be empty for input " +
                                    shape_str(input.shape()));
    const int krows = d.cin * d.kh * d.kw;
    const int osz = d.oh * d.ow;
    const bool has_bias = bias.defined();
    if (has_bias && (bias.shape() != std::vector<int>{d.cout}))
        throw std::invalid_argument("conv2d bias must be [O]");

    auto col = std::make_shared<std::vector<float>>(
        static_cast<std::size_t>(d.n) * krows * osz);
    std::vector<float> out(static_cast<std::size_t>(d.n) * d.cout * osz);
    for (int b = 0; b < d.n; ++b) {
        float* colb = col->data() + static_cast<std::size_t>(b) * krows * osz;
        im2col(input.data() + static_cast<std::size_t>(b) * d.cin * d.h * d.w,
               d, stride, padding, colb);
        float* outb = out.data() + static_cast<std::size_t>(b) * d.cout * osz;
        kernels::sgemm(d.cout, osz, krows, weight.data(), krows, colb, osz,
                       outb, osz);
        if (has_bias) {
            for (int o = 0; o < d.cout; ++o) {
                const float bv = bias.data()[o];
                float* row = outb + static_cast<std::size_t>(o) * osz;
                for (int i = 0; i < osz; ++i) row[i] += bv;
            }
        }
    }

    auto in_n = input.node();
    auto w_n = weight.node();
    std::vector<NodePtr> parents{in_n, w_n};
    NodePtr b_n = has_bias ? bias.node() : nullptr;
    if (has_bias) parents.push_back(b_n);

    return make_op(
        {d.n, d.cout, d.oh, d.ow}, std::move(out), std::move(parents),
        [in_n, w_n, b_n, col, d, stride, padding, krows, osz](Node& self) {
            std::vector<float> dcol;
            if (in_n->requires_grad)
                dcol.resize(static_cast<std::size_t>(krows) * osz);
            for (int b = 0; b < d.n; ++b) {
                const float* go =
                    self.grad.data() + static_cast<std::size_t>(b) * d.cout * osz;
                const float* colb =
                    col->data() + static_cast<std::size_t>(b) * krows * osz;
                if (w_n->requires_grad)
                    kernels::sgemm_nt(d.cout, krows, osz, go, osz, colb, osz,
                                      w_n->grad_data(), krows, true);
                if (b_n && b_n->requires_grad) {
                    float* gb = b_n->grad_data();
                    for (int o = 0; o < d.cout; ++o) {
                        double acc = 0.0;
                        const float* row = go + static_cast<std::size_t>(o) * osz;
                        for (int i = 0; i < osz; ++i) acc += row[i];
                        gb[o] += static_cast<float>(acc);
                    }
                }
                if (in_n->requires_grad) {
                    kernels::sgemm_tn(krows, osz, d.cout, w_n->data.data(),
                                      krows, go, osz, dcol.data(), osz);
                    col2im_add(dcol.data(), d, stride, padding,
                               in_n->grad_data() +
                                   static_cast<std::size_t>(b) * d.cin * d.h *
                                       d.w);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// cell (non-overlapping window) reductions on [H,W] maps

namespace {

struct CellDims {
    int h, w, win, hc, wc;
};

CellDims cell_dims(const Tensor& x, int win) {
    if (x.shape().size() != 2)
        throw std::invalid_argument("cell op expects [H,W] tensor, got " +
                                    shape_str(x.shape()));
    if (win < 1) throw std::invalid_argument("cell window must be >= 1");
    CellDims d;
    d.h = x.shape()[0];
    d.w = x.shape()[1];
    d.win = win;
    d.hc = (d.h + win - 1) / win;
    d.wc = (d.w + win - 1) / win;
    return d;
}

template <typename F>
void for_cell(const CellDims& d, int cy, int cx, F&& fn) {
    const int y0 = cy * d.win, x0 = cx * d.win;
    const int y1 = std::min(y0 + d.win, d.h), x1 = std::min(x0 + d.win, d.w);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) fn(y * d.w + x);
}

}  // namespace

Tensor cell_max(const Tensor& x, int win) {
    const CellDims d = cell_dims(x, win);
    std::vector<float> out(static_cast<std::size_t>(d.hc) * d.wc);
    auto argmax = std::make_shared<std::vector<int>>(out.size());
    const float* px = x.data();
    for (int cy = 0; cy < d.hc; ++cy) {
        for (int cx = 0; cx < d.wc; ++cx) {
            float best = -std::numeric_limits<float>::infinity();
            int bi = -1;
            for_cell(d, cy, cx, [&](int i) {
                if (px[i] > best) {
                    best = px[i];
                    bi = i;
                }
            });
            out[static_cast<std::size_t>(cy) * d.wc + cx] = best;
            (*argmax)[static_cast<std::size_t>(cy) * d.wc + cx] = bi;
        }
    }
    auto xn = x.node();
    return make_op({d.hc, d.wc}, std::move(out), {xn},
                   [xn, argmax](Node& self) {
                       float* gx = xn->grad_data();
                       const float* go = self.grad.data();
                       for (std::size_t i = 0; i < self.data.size(); ++i)
                           gx[(*argmax)[i]] += go[i];
                   });
}

Tensor cell_mean(const Tensor& x, int win) {
    const CellDims d = cell_dims(x, win);
    std::vector<float> out(static_cast<std::size_t>(d.hc) * d.wc);
    const float* px = x.data();
    for (int cy = 0; cy < d.hc; ++cy) {
        for (int cx = 0; cx < d.wc; ++cx) {
            double acc = 0.0;
            int cnt = 0;
            for_cell(d, cy, cx, [&](int i) {
                acc += px[i];
                ++cnt;
            });
            out[static_cast<std::size_t>(cy) * d.wc + cx] =
                static_cast<float>(acc / cnt);
        }
    }
    auto xn = x.node();
    return make_op({d.hc, d.wc}, std::move(out), {xn}, [xn, d](Node& self) {
        float* gx = xn->grad_data();
        const float* go = self.grad.data();
        for (int cy = 0; cy < d.hc; ++cy) {
            for (int cx = 0; cx < d.wc; ++cx) {
                int cnt = 0;
                for_cell(d, cy, cx, [&](int) { ++cnt; });
                const float g =
                    go[static_cast<std::size_t>(cy) * d.wc + cx] / cnt;
                for_cell(d, cy, cx, [&](int i) { gx[i] += g; });
            }
        }
    });
}

Tensor cell_softmax(const Tensor& x, int win) {
    const CellDims d = cell_dims(x, win);
    std::vector<float> out(x.size());
    const float* px = x.data();
    // Denominator is area-normalized (win^2 / count) so constant maps score
    // 1/win^2 uniformly, including in partial border cells.
    for (int cy = 0; cy < d.hc; ++cy) {
        for (int cx = 0; cx < d.wc; ++cx) {
            float m = -std::numeric_limits<float>::infinity();
            int cnt = 0;
            for_cell(d, cy, cx, [&](int i) {
                m = std::max(m, px[i]);
                ++cnt;
            });
            double t = 0.0;
            for_cell(d, cy, cx, [&](int i) { t += std::exp(px[i] - m); });
            const double denom = t * (static_cast<double>(win) * win / cnt);
            for_cell(d, cy, cx, [&](int i) {
                out[i] = static_cast<float>(std::exp(px[i] - m) / denom);
            });
        }
    }
    auto xn = x.node();
    return make_op(x.shape(), std::move(out), {xn}, [xn, d, win](Node& self) {
        float* gx = xn->grad_data();
        const float* po = self.data.data();
        const float* go = self.grad.data();
        for (int cy = 0; cy < d.hc; ++cy) {
            for (int cx = 0; cx < d.wc; ++cx) {
                int cnt = 0;
                double gs = 0.0;
                for_cell(d, cy, cx, [&](int i) {
                    gs += static_cast<double>(go[i]) * po[i];
                    ++cnt;
                });
                const float alpha = static_cast<float>(win) * win / cnt;
                const float ags = static_cast<float>(gs) * alpha;
                for_cell(d, cy, cx,
                         [&](int i) { gx[i] += po[i] * (go[i] - ags); });
            }
        }
    });
}

// ---------------------------------------------------------------------------
// sampling / indexing

Tensor grid_sample(const Tensor& x, const std::vector<float>& grid, int out_h,
                   int out_w) {
    if (x.shape().size() != 3)
        throw std::invalid_argument("grid_sample expects [C,H,W], got " +
                                    shape_str(x.shape()));
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    if (h < 2 || w < 2)
        throw std::invalid_argument("grid_sample input must be at least 2x2");
    const std::size_t npix = static_cast<std::size_t>(out_h) * out_w;
    if (grid.size() != npix * 2)
        throw std::invalid_argument("grid size mismatch");
    const int plane = h * w;
    std::vector<float> out(static_cast<std::size_t>(c) * npix, 0.0f);
    const float* px = x.data();

    // [-1,1] spans the image extent; pixel center x sits at (2x+1)/W - 1.
    auto sample = [w, h](const std::vector<float>& g, std::size_t p,
                         auto&& emit) {
        const float fx = (g[p * 2] + 1.0f) * 0.5f * w - 0.5f;
        const float fy = (g[p * 2 + 1] + 1.0f) * 0.5f * h - 0.5f;
        const int x0 = static_cast<int>(std::floor(fx));
        const int y0 = static_cast<int>(std::floor(fy));
        const float ax = fx - x0, ay = fy - y0;
        const float ws[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay,
                             ax * ay};
        const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
        const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int k = 0; k < 4; ++k) {
            if (xs[k] < 0 || xs[k] >= w || ys[k] < 0 || ys[k] >= h) continue;
            emit(ys[k] * w + xs[k], ws[k]);
        }
    };

    for (std::size_t p = 0; p < npix; ++p) {
        sample(grid, p, [&](int src, float wt) {
            for (int ch = 0; ch < c; ++ch)
                out[static_cast<std::size_t>(ch) * npix + p] +=
                    wt * px[ch * plane + src];
        });
    }
    auto xn = x.node();
    return make_op({c, out_h, out_w}, std::move(out), {xn},
                   [xn, grid, sample, c, plane, npix](Node& self) {
                       float* gx = xn->grad_data();
                       const float* go = self.grad.data();
                       for (std::size_t p = 0; p < npix; ++p) {
                           sample(grid, p, [&](int src, float wt) {
                               for (int ch = 0; ch < c; ++ch)
                                   gx[ch * plane + src] +=
                                       wt * go[static_cast<std::size_t>(ch) *
                                                   npix +
                                               p];
                           });
                       }
                   });
}

Tensor gather_pixels(const Tensor& x,
                     const std::vector<std::pair<int, int>>& pts) {
    if (x.shape().size() != 3)
        throw std::invalid_argument("gather_pixels expects [C,H,W]");
    const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
    const int n = static_cast<int>(pts.size());
    const int plane = h * w;
    std::vector<float> out(static_cast<std::size_t>(n) * c);
    const float* px = x.data();
    for (int i = 0; i < n; ++i) {
        const auto [xi, yi] = pts[static_cast<std::size_t>(i)];
        if (xi < 0 || xi >= w || yi < 0 || yi >= h)
            throw std::invalid_argument("gather_pixels point out of bounds");
        for (int ch = 0; ch < c; ++ch)
            out[static_cast<std::size_t>(i) * c + ch] =
                px[ch * plane + yi * w + xi];
    }
    auto xn = x.node();
    return make_op({n, c}, std::move(out), {xn},
                   [xn, pts, c, w, plane](Node& self) {
                       float* gx = xn->grad_data();
                       const float* go = self.grad.data();
                       for (std::size_t i = 0; i < pts.size(); ++i) {
                           const auto [xi, yi] = pts[i];
                           for (int ch = 0; ch < c; ++ch)
                               gx[ch * plane + yi * w + xi] += go[i * c + ch];
                       }
                   });
}

Tensor permute_lastdim(const Tensor& x, const std::vector<int>& perm) {
    if (x.shape().empty())
        throw std::invalid_argument("permute_lastdim needs rank >= 1");
    const int dim = x.shape().back();
    if (static_cast<int>(perm.size()) != dim)
        throw std::invalid_argument("permutation length mismatch");
    const std::int64_t rows = x.size() / dim;
    std::vector<float> out(x.size());
    const float* px = x.data();
    for (std::int64_t r = 0; r < rows; ++r)
        for (int i = 0; i < dim; ++i)
            out[r * dim + i] = px[r * dim + perm[static_cast<std::size_t>(i)]];
    auto xn = x.node();
    return make_op(x.shape(), std::move(out), {xn},
                   [xn, perm, dim, rows](Node& self) {
                       float* gx = xn->grad_data();
                       const float* go = self.grad.data();
                       for (std::int64_t r = 0; r < rows; ++r)
                           for (int i = 0; i < dim; ++i)
                               gx[r * dim + perm[static_cast<std::size_t>(i)]] +=
                                   go[r * dim + i];
                   });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 ||
        a.shape()[1] != b.shape()[1])
        throw std::invalid_argument("matmul_nt expects [N,D] x [M,D], got " +
                                    shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    const int n = a.shape()[0], m = b.shape()[0], d = a.shape()[1];
    std::vector<float> out(static_cast<std::size_t>(n) * m);
    kernels::sgemm_nt(n, m, d, a.data(), d, b.data(), d, out.data(), m);
    auto an = a.node();
    auto bn = b.node();
    return make_op({n, m}, std::move(out), {an, bn},
                   [an, bn, n, m, d](Node& self) {
                       const float* go = self.grad.data();
                       if (an->requires_grad)  // dA = dC * B
                           kernels::sgemm(n, d, m, go, m, bn->data.data(), d,
                                          an->grad_data(), d, true);
                       if (bn->requires_grad)  // dB = dC^T * A
                           kernels::sgemm_tn(m, d, n, go, m, an->data.data(),
                                             d, bn->grad_data(), d, true);
                   });
}

Tensor logsumexp_lastdim(const Tensor& a) {
    if (a.shape().size() != 2)
        throw std::invalid_argument("logsumexp_lastdim expects [N,M]");
    const int n = a.shape()[0], m = a.shape()[1];
    std::vector<float> out(static_cast<std::size_t>(n));
    const float* pa = a.data();
    for (int r = 0; r < n; ++r) {
        const float* row = pa + static_cast<std::size_t>(r) * m;
        const float mx = *std::max_element(row, row + m);
        double t = 0.0;
        for (int j = 0; j < m; ++j) t += std::exp(row[j] - mx);
        out[static_cast<std::size_t>(r)] =
            mx + static_cast<float>(std::log(t));
    }
    auto an = a.node();
    return make_op({n}, std::move(out), {an}, [an, n, m](Node& self) {
        float* ga = an->grad_data();
        const float* pa = an->data.data();
        const float* po = self.data.data();
        const float* go = self.grad.data();
        for (int r = 0; r < n; ++r) {
            const float lse = po[r];
            const float g = go[r];
            for (int j = 0; j < m; ++j)
                ga[static_cast<std::size_t>(r) * m + j] +=
                    g * std::exp(pa[static_cast<std::size_t>(r) * m + j] - lse);
        }
    });
}

Tensor take_diag(const Tensor& a) {
    if (a.shape().size() != 2 || a.shape()[0] != a.shape()[1])
        throw std::invalid_argument("take_diag expects square [N,N]");
    const int n = a.shape()[0];
    std::vector<float> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] =
            a.data()[static_cast<std::size_t>(i) * n + i];
    auto an = a.node();
    return make_op({n}, std::move(out), {an}, [an, n](Node& self) {
        float* ga = an->grad_data();
        const float* go = self.grad.data();
        for (int i = 0; i < n; ++i)
            ga[static_cast<std::size_t>(i) * n + i] += go[i];
    });
}

// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw std::invalid_argument("backward requires a scalar loss, got " +
                                    shape_str(loss.shape()));
    auto root = loss.node();
    if (!root->requires_grad) return;

    // Iterative post-order topological sort.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Node* p = node->parents[child++].get();
            if (p->requires_grad && visited.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    // Intermediate gradients are per-sweep; leaves accumulate across sweeps.
    for (Node* n : topo) {
        if (!n->is_leaf) n->grad.assign(n->data.size(), 0.0f);
    }
    root->grad_data()[0] += 1.0f;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

}  // namespace remm
