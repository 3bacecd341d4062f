#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace remm {

// Dense float32 tensor with define-by-run reverse-mode autodiff.
// The tape is rebuilt on every forward pass; backward() walks it once.
class Tensor {
  public:
    struct Node {
        std::vector<int> shape;
        std::vector<float> data;
        std::vector<float> grad;  // allocated lazily
        bool requires_grad = false;
        bool is_leaf = true;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward_fn;  // accumulates into parents

        std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
        float* grad_data();  // allocates zeroed grad on first use
    };

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value,
                       bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                            bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return n_ != nullptr; }
    const std::vector<int>& shape() const { return n_->shape; }
    std::int64_t size() const { return n_->size(); }
    float* data() { return n_->data.data(); }
    const float* data() const { return n_->data.data(); }
    std::vector<float>& vec() { return n_->data; }
    const std::vector<float>& vec() const { return n_->data; }
    bool requires_grad() const { return n_->requires_grad; }
    bool is_leaf() const { return n_->is_leaf; }
    float item() const;

    // Gradient buffer; null until the first backward touches this tensor.
    const float* grad() const {
        return n_->grad.empty() ? nullptr : n_->grad.data();
    }
    std::vector<float>& grad_vec() { return n_->grad; }
    void zero_grad();

    std::shared_ptr<Node> node() const { return n_; }

  private:
    std::shared_ptr<Node> n_;
};

// --- elementwise / reduction ops (trailing-axis broadcasting) ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor add_const(const Tensor& a, float c);
Tensor relu(const Tensor& a);
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);
Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar

// Rescale each last-axis vector to unit L2 norm; zero vectors pass through.
Tensor l2norm_lastdim(const Tensor& a);

// Normalize across the channel axis of a [C,H,W] map, one vector per pixel.
Tensor l2norm_channels(const Tensor& a);

// Same data, new shape (numel must match).
Tensor reshape(const Tensor& a, std::vector<int> new_shape);

// --- conv / pooling ---
// input [N,C,H,W], weight [O,I,kh,kw], optional bias [O] (pass undefined
// Tensor for none).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);

// Non-overlapping w x w cells over a [H,W] map. Partial border cells are
// handled by count (max/mean over present elements; softmax denominator is
// area-normalized so a constant map scores uniformly).
Tensor cell_max(const Tensor& x, int w);   // -> [ceil(H/w), ceil(W/w)]
Tensor cell_mean(const Tensor& x, int w);  // -> [ceil(H/w), ceil(W/w)]
Tensor cell_softmax(const Tensor& x, int w);  // -> [H,W], values in (0,1)

// --- warping / indexing ---
// grid: row-major [outH*outW*2] normalized coords in [-1,1] spanning the
// image extent; x is [C,H,W]; zero padding outside; differentiable w.r.t. x.
Tensor grid_sample(const Tensor& x, const std::vector<float>& grid, int out_h,
                   int out_w);

// x [C,H,W], integer pixels (xi, yi) -> [N,C] rows.
Tensor gather_pixels(const Tensor& x,
                     const std::vector<std::pair<int, int>>& pts);

// out[:, i] = in[:, perm[i]] over the last axis of a [N,D] tensor.
Tensor permute_lastdim(const Tensor& x, const std::vector<int>& perm);

// --- similarity / softmax building blocks ---
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [N,D]x[M,D] -> [N,M]
Tensor logsumexp_lastdim(const Tensor& a);           // [N,M] -> [N]
Tensor take_diag(const Tensor& a);                   // [N,N] -> [N]

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls; intermediate gradients are reset per call.
void backward(const Tensor& loss);

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace remm
