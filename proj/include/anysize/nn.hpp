#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anysize/tensor.hpp"

namespace anysize {

/// A learnable tensor plus its gradient accumulator. Names must be unique
/// within a model; checkpoints are keyed on them.
template <class S>
struct ParameterT {
    std::string name;
    TensorT<S> value;
    TensorT<S> grad;

    ParameterT() = default;
    ParameterT(std::string n, TensorT<S> v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

using Parameter = ParameterT<float>;

enum class Activation { relu, leaky_relu, tanh, sigmoid };

/// Leaky slope is fixed at 0.2 across the project.
inline constexpr double kLeakySlope = 0.2;

// ---- convolution -----------------------------------------------------------
// SAME zero padding of (k-1)/2 per side, odd kernels only, stride 1 or 2.
// Stride 1 preserves spatial dims; stride 2 yields ceil(H/2) x ceil(W/2).
// input B x Ci x H x W, weight Co x Ci x kh x kw, bias Co.

template <class S>
TensorT<S> conv2d_same(const TensorT<S>& input, const TensorT<S>& weight,
                       const TensorT<S>& bias, int stride);

template <class S>
struct Conv2dGrads {
    TensorT<S> input;  // empty when input grad was not requested
    TensorT<S> weight;
    TensorT<S> bias;
};

template <class S>
Conv2dGrads<S> conv2d_same_backward(const TensorT<S>& grad_out, const TensorT<S>& input,
                                    const TensorT<S>& weight, int stride,
                                    bool need_input_grad = true);

// ---- dense -----------------------------------------------------------------
// input B x N, weight N x M, bias M -> output B x M.

template <class S>
TensorT<S> dense(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias);

template <class S>
struct DenseGrads {
    TensorT<S> input;
    TensorT<S> weight;
    TensorT<S> bias;
};

template <class S>
DenseGrads<S> dense_backward(const TensorT<S>& grad_out, const TensorT<S>& input,
                             const TensorT<S>& weight, bool need_input_grad = true);

// ---- global average pooling -------------------------------------------------
// B x C x H x W -> B x C; output shape is independent of H and W.

template <class S>
TensorT<S> global_average_pool(const TensorT<S>& input);

template <class S>
TensorT<S> global_average_pool_backward(const TensorT<S>& grad_out, int in_h, int in_w);

// ---- activations ------------------------------------------------------------

template <class S>
TensorT<S> activate(const TensorT<S>& input, Activation kind);

/// Needs the forward input for relu/leaky_relu and the forward output for
/// tanh/sigmoid; pass both.
template <class S>
TensorT<S> activate_backward(const TensorT<S>& grad_out, const TensorT<S>& input,
                             const TensorT<S>& output, Activation kind);

// ---- losses ------------------------------------------------------------------

/// Clamp applied to predictions inside the binary cross entropy.
inline constexpr double kBceEps = 1e-7;

/// Mean of -[t log p + (1-t) log(1-p)] with p clamped to [eps, 1-eps].
template <class S>
S bce_loss(const TensorT<S>& pred, const TensorT<S>& target);

template <class S>
TensorT<S> bce_loss_backward(const TensorT<S>& pred, const TensorT<S>& target);

template <class S>
TensorT<S> softmax_rows(const TensorT<S>& logits);

template <class S>
S softmax_cross_entropy(const TensorT<S>& logits, const std::vector<int>& labels);

template <class S>
TensorT<S> softmax_cross_entropy_backward(const TensorT<S>& logits,
                                          const std::vector<int>& labels);

// ---- elementwise helpers ------------------------------------------------------

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b);

template <class S>
void add_inplace(TensorT<S>& a, const TensorT<S>& b);

template <class S>
bool all_finite(const TensorT<S>& t);

// ---- Adam ----------------------------------------------------------------------

template <class S>
struct AdamStateT {
    TensorT<S> m;
    TensorT<S> v;
};

/// Standard Adam with bias correction over an attached parameter list.
/// States are zero-initialized on attach; step() consumes param.grad and
/// leaves it untouched (call zero_grads between steps).
template <class S>
class AdamT {
public:
    AdamT() = default;
    AdamT(double lr, double beta1, double beta2, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(std::vector<ParameterT<S>*> params);
    void step();

    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }
    double lr() const { return lr_; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }

    std::size_t size() const { return states_.size(); }
    AdamStateT<S>& state(std::size_t i) { return states_[i]; }
    const AdamStateT<S>& state(std::size_t i) const { return states_[i]; }
    const std::vector<ParameterT<S>*>& params() const { return params_; }

private:
    double lr_ = 2e-4, beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
    std::int64_t t_ = 0;
    std::vector<ParameterT<S>*> params_;
    std::vector<AdamStateT<S>> states_;
};

using Adam = AdamT<float>;

template <class S>
void zero_grads(const std::vector<ParameterT<S>*>& params) {
    for (auto* p : params) p->grad.fill(S(0));
}

}  // namespace anysize
