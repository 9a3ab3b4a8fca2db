#include "anysize/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "anysize/threading.hpp"
#include "gemm.hpp"

namespace anysize {

namespace {

void check_conv_args(const std::vector<int>& in_shape, const std::vector<int>& w_shape,
                     const std::vector<int>& b_shape, int stride) {
    if (in_shape.size() != 4) throw std::invalid_argument("conv2d: input must be BCHW");
    if (w_shape.size() != 4) throw std::invalid_argument("conv2d: weight must be OIHW");
    if (b_shape.size() != 1 || b_shape[0] != w_shape[0])
        throw std::invalid_argument("conv2d: bias length must equal output channels");
    if (w_shape[1] != in_shape[1])
        throw std::invalid_argument("conv2d: input channels (" + std::to_string(in_shape[1]) +
                                    ") do not match weight channels (" +
                                    std::to_string(w_shape[1]) + ")");
    if (w_shape[2] % 2 == 0 || w_shape[3] % 2 == 0)
        throw std::invalid_argument("conv2d: kernel extents must be odd for SAME padding");
    if (stride != 1 && stride != 2)
        throw std::invalid_argument("conv2d: stride must be 1 or 2");
}

inline int conv_out_dim(int in, int stride) { return (in - 1) / stride + 1; }

// Expands one batch item into a (Ci*kh*kw) x (out_h*out_w) patch matrix.
// Out-of-range taps are written as zero; every slot is written.
template <class S>
void im2col(const S* src, int channels, int in_h, int in_w, int kh, int kw, int stride,
            int out_h, int out_w, S* cols) {
    const int pad_y = (kh - 1) / 2;
    const int pad_x = (kw - 1) / 2;
    std::int64_t row = 0;
    for (int c = 0; c < channels; ++c) {
        const S* plane = src + static_cast<std::int64_t>(c) * in_h * in_w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++row) {
                S* dst = cols + row * out_h * out_w;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - pad_y + ky;
                    if (iy < 0 || iy >= in_h) {
                        for (int ox = 0; ox < out_w; ++ox) *dst++ = S(0);
                        continue;
                    }
                    const S* src_row = plane + static_cast<std::int64_t>(iy) * in_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - pad_x + kx;
                        *dst++ = (ix < 0 || ix >= in_w) ? S(0) : src_row[ix];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds patch-matrix gradients back to the image.
template <class S>
void col2im(const S* cols, int channels, int in_h, int in_w, int kh, int kw, int stride,
            int out_h, int out_w, S* dst) {
    const int pad_y = (kh - 1) / 2;
    const int pad_x = (kw - 1) / 2;
    std::int64_t row = 0;
    for (int c = 0; c < channels; ++c) {
        S* plane = dst + static_cast<std::int64_t>(c) * in_h * in_w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++row) {
                const S* src = cols + row * out_h * out_w;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - pad_y + ky;
                    if (iy < 0 || iy >= in_h) {
                        src += out_w;
                        continue;
                    }
                    S* dst_row = plane + static_cast<std::int64_t>(iy) * in_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - pad_x + kx;
                        if (ix >= 0 && ix < in_w) dst_row[ix] += src[ox];
                        ++src;
                    }
                }
            }
        }
    }
}

}  // namespace

template <class S>
TensorT<S> conv2d_same(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias,
                       int stride) {
    check_conv_args(input.shape(), weight.shape(), bias.shape(), stride);
    const int batch = input.dim(0), ci = input.dim(1), in_h = input.dim(2), in_w = input.dim(3);
    const int co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    const int out_h = conv_out_dim(in_h, stride), out_w = conv_out_dim(in_w, stride);
    const std::int64_t k = static_cast<std::int64_t>(ci) * kh * kw;
    const std::int64_t n = static_cast<std::int64_t>(out_h) * out_w;

    TensorT<S> out({batch, co, out_h, out_w});
    parallel_for(batch, [&](std::int64_t b0, std::int64_t b1) {
        std::vector<S> cols(static_cast<std::size_t>(k * n));
        for (std::int64_t b = b0; b < b1; ++b) {
            const S* src = input.data() + b * ci * in_h * in_w;
            im2col(src, ci, in_h, in_w, kh, kw, stride, out_h, out_w, cols.data());
            S* dst = out.data() + b * co * n;
            detail::gemm(false, false, co, static_cast<int>(n), static_cast<int>(k), S(1),
                         weight.data(), static_cast<int>(k), cols.data(), static_cast<int>(n),
                         S(0), dst, static_cast<int>(n));
            for (int c = 0; c < co; ++c) {
                const S bv = bias[c];
                S* row = dst + static_cast<std::int64_t>(c) * n;
                for (std::int64_t i = 0; i < n; ++i) row[i] += bv;
            }
        }
    });
    return out;
}

template <class S>
Conv2dGrads<S> conv2d_same_backward(const TensorT<S>& grad_out, const TensorT<S>& input,
                                    const TensorT<S>& weight, int stride, bool need_input_grad) {
    const int batch = input.dim(0), ci = input.dim(1), in_h = input.dim(2), in_w = input.dim(3);
    const int co = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    const int out_h = conv_out_dim(in_h, stride), out_w = conv_out_dim(in_w, stride);
    if (grad_out.shape() != std::vector<int>{batch, co, out_h, out_w})
        throw std::invalid_argument("conv2d backward: grad_out shape mismatch");
    const std::int64_t k = static_cast<std::int64_t>(ci) * kh * kw;
    const std::int64_t n = static_cast<std::int64_t>(out_h) * out_w;

    Conv2dGrads<S> grads;
    grads.weight = TensorT<S>(weight.shape());
    grads.bias = TensorT<S>({co});
    if (need_input_grad) grads.input = TensorT<S>(input.shape());

    // Weight/bias grads accumulate over the batch in index order so results
    // do not depend on the thread count.
    std::vector<S> cols(static_cast<std::size_t>(k * n));
    for (int b = 0; b < batch; ++b) {
        const S* src = input.data() + static_cast<std::int64_t>(b) * ci * in_h * in_w;
        const S* gout = grad_out.data() + static_cast<std::int64_t>(b) * co * n;
        im2col(src, ci, in_h, in_w, kh, kw, stride, out_h, out_w, cols.data());
        detail::gemm(false, true, co, static_cast<int>(k), static_cast<int>(n), S(1), gout,
                     static_cast<int>(n), cols.data(), static_cast<int>(n), S(1),
                     grads.weight.data(), static_cast<int>(k));
        for (int c = 0; c < co; ++c) {
            const S* row = gout + static_cast<std::int64_t>(c) * n;
            S sum = 0;
            for (std::int64_t i = 0; i < n; ++i) sum += row[i];
            grads.bias[c] += sum;
        }
    }

    if (need_input_grad) {
        parallel_for(batch, [&](std::int64_t b0, std::int64_t b1) {
            std::vector<S> dcols(static_cast<std::size_t>(k * n));
            for (std::int64_t b = b0; b < b1; ++b) {
                const S* gout = grad_out.data() + b * co * n;
                detail::gemm(true, false, static_cast<int>(k), static_cast<int>(n), co, S(1),
                             weight.data(), static_cast<int>(k), gout, static_cast<int>(n), S(0),
                             dcols.data(), static_cast<int>(n));
                col2im(dcols.data(), ci, in_h, in_w, kh, kw, stride, out_h, out_w,
                       grads.input.data() + b * ci * in_h * in_w);
            }
        });
    }
    return grads;
}

template <class S>
TensorT<S> dense(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias) {
    if (input.rank() != 2 || weight.rank() != 2)
        throw std::invalid_argument("dense: input and weight must be rank 2");
    const int batch = input.dim(0), in_features = input.dim(1);
    const int out_features = weight.dim(1);
    if (weight.dim(0) != in_features)
        throw std::invalid_argument("dense: inner dimensions disagree (" +
                                    std::to_string(in_features) + " vs " +
                                    std::to_string(weight.dim(0)) + ")");
    if (bias.rank() != 1 || bias.dim(0) != out_features)
        throw std::invalid_argument("dense: bias length must equal output features");

    TensorT<S> out({batch, out_features});
    detail::gemm(false, false, batch, out_features, in_features, S(1), input.data(), in_features,
                 weight.data(), out_features, S(0), out.data(), out_features);
    for (int b = 0; b < batch; ++b)
        for (int j = 0; j < out_features; ++j) out.at2(b, j) += bias[j];
    return out;
}

template <class S>
DenseGrads<S> dense_backward(const TensorT<S>& grad_out, const TensorT<S>& input,
                             const TensorT<S>& weight, bool need_input_grad) {
    const int batch = input.dim(0), in_features = input.dim(1);
    const int out_features = weight.dim(1);
    if (grad_out.shape() != std::vector<int>{batch, out_features})
        throw std::invalid_argument("dense backward: grad_out shape mismatch");

    DenseGrads<S> grads;
    grads.weight = TensorT<S>(weight.shape());
    detail::gemm(true, false, in_features, out_features, batch, S(1), input.data(), in_features,
                 grad_out.data(), out_features, S(0), grads.weight.data(), out_features);
    grads.bias = TensorT<S>({out_features});
    for (int b = 0; b < batch; ++b)
        for (int j = 0; j < out_features; ++j) grads.bias[j] += grad_out.at2(b, j);
    if (need_input_grad) {
        grads.input = TensorT<S>(input.shape());
        detail::gemm(false, true, batch, in_features, out_features, S(1), grad_out.data(),
                     out_features, weight.data(), out_features, S(0), grads.input.data(),
                     in_features);
    }
    return grads;
}

template <class S>
TensorT<S> global_average_pool(const TensorT<S>& input) {
    if (input.rank() != 4) throw std::invalid_argument("global_average_pool: input must be BCHW");
    const int batch = input.dim(0), channels = input.dim(1);
    const std::int64_t area = static_cast<std::int64_t>(input.dim(2)) * input.dim(3);
    TensorT<S> out({batch, channels});
    for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < channels; ++c) {
            const S* plane = input.data() + (static_cast<std::int64_t>(b) * channels + c) * area;
            double sum = 0;
            for (std::int64_t i = 0; i < area; ++i) sum += plane[i];
            out.at2(b, c) = static_cast<S>(sum / static_cast<double>(area));
        }
    }
    return out;
}

template <class S>
TensorT<S> global_average_pool_backward(const TensorT<S>& grad_out, int in_h, int in_w) {
    if (grad_out.rank() != 2)
        throw std::invalid_argument("global_average_pool backward: grad must be B x C");
    const int batch = grad_out.dim(0), channels = grad_out.dim(1);
    const std::int64_t area = static_cast<std::int64_t>(in_h) * in_w;
    TensorT<S> grad_in({batch, channels, in_h, in_w});
    for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < channels; ++c) {
            const S g = static_cast<S>(static_cast<double>(grad_out.at2(b, c)) /
                                       static_cast<double>(area));
            S* plane = grad_in.data() + (static_cast<std::int64_t>(b) * channels + c) * area;
            for (std::int64_t i = 0; i < area; ++i) plane[i] = g;
        }
    }
    return grad_in;
}

template <class S>
TensorT<S> activate(const TensorT<S>& input, Activation kind) {
    TensorT<S> out(input.shape());
    const std::int64_t n = input.numel();
    switch (kind) {
        case Activation::relu:
            for (std::int64_t i = 0; i < n; ++i) out[i] = input[i] > S(0) ? input[i] : S(0);
            break;
        case Activation::leaky_relu:
            for (std::int64_t i = 0; i < n; ++i)
                out[i] = input[i] > S(0) ? input[i] : static_cast<S>(kLeakySlope) * input[i];
            break;
        case Activation::tanh:
            for (std::int64_t i = 0; i < n; ++i) out[i] = std::tanh(input[i]);
            break;
        case Activation::sigmoid:
            for (std::int64_t i = 0; i < n; ++i) out[i] = S(1) / (S(1) + std::exp(-input[i]));
            break;
    }
    return out;
}

template <class S>
TensorT<S> activate_backward(const TensorT<S>& grad_out, const TensorT<S>& input,
                             const TensorT<S>& output, Activation kind) {
    TensorT<S> grad_in(grad_out.shape());
    const std::int64_t n = grad_out.numel();
    switch (kind) {
        case Activation::relu:
            for (std::int64_t i = 0; i < n; ++i)
                grad_in[i] = input[i] > S(0) ? grad_out[i] : S(0);
            break;
        case Activation::leaky_relu:
            for (std::int64_t i = 0; i < n; ++i)
                grad_in[i] = input[i] > S(0) ? grad_out[i]
                                             : static_cast<S>(kLeakySlope) * grad_out[i];
            break;
        case Activation::tanh:
            for (std::int64_t i = 0; i < n; ++i)
                grad_in[i] = grad_out[i] * (S(1) - output[i] * output[i]);
            break;
        case Activation::sigmoid:
            for (std::int64_t i = 0; i < n; ++i)
                grad_in[i] = grad_out[i] * output[i] * (S(1) - output[i]);
            break;
    }
    return grad_in;
}

template <class S>
S bce_loss(const TensorT<S>& pred, const TensorT<S>& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("bce_loss: shape mismatch");
    const std::int64_t n = pred.numel();
    const double eps = kBceEps;
    double sum = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        double p = static_cast<double>(pred[i]);
        p = std::min(std::max(p, eps), 1.0 - eps);
        const double t = static_cast<double>(target[i]);
        sum += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    }
    return static_cast<S>(sum / static_cast<double>(n));
}

template <class S>
TensorT<S> bce_loss_backward(const TensorT<S>& pred, const TensorT<S>& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("bce_loss: shape mismatch");
    const std::int64_t n = pred.numel();
    const double eps = kBceEps;
    TensorT<S> grad(pred.shape());
    for (std::int64_t i = 0; i < n; ++i) {
        const double p = static_cast<double>(pred[i]);
        if (p < eps || p > 1.0 - eps) {
            grad[i] = S(0);  // clamp is active, derivative is zero
            continue;
        }
        const double t = static_cast<double>(target[i]);
        grad[i] = static_cast<S>((p - t) / (p * (1.0 - p)) / static_cast<double>(n));
    }
    return grad;
}

template <class S>
TensorT<S> softmax_rows(const TensorT<S>& logits) {
    if (logits.rank() != 2) throw std::invalid_argument("softmax: input must be B x C");
    const int batch = logits.dim(0), classes = logits.dim(1);
    TensorT<S> out(logits.shape());
    for (int b = 0; b < batch; ++b) {
        S max_v = logits.at2(b, 0);
        for (int c = 1; c < classes; ++c) max_v = std::max(max_v, logits.at2(b, c));
        double sum = 0;
        for (int c = 0; c < classes; ++c) {
            const double e = std::exp(static_cast<double>(logits.at2(b, c) - max_v));
            out.at2(b, c) = static_cast<S>(e);
            sum += e;
        }
        for (int c = 0; c < classes; ++c) out.at2(b, c) = static_cast<S>(out.at2(b, c) / sum);
    }
    return out;
}

template <class S>
S softmax_cross_entropy(const TensorT<S>& logits, const std::vector<int>& labels) {
    const int batch = logits.dim(0);
    if (static_cast<int>(labels.size()) != batch)
        throw std::invalid_argument("softmax_cross_entropy: one label per row required");
    TensorT<S> probs = softmax_rows(logits);
    double sum = 0;
    for (int b = 0; b < batch; ++b)
        sum += -std::log(std::max(static_cast<double>(probs.at2(b, labels[b])), 1e-30));
    return static_cast<S>(sum / batch);
}

template <class S>
TensorT<S> softmax_cross_entropy_backward(const TensorT<S>& logits,
                                          const std::vector<int>& labels) {
    const int batch = logits.dim(0), classes = logits.dim(1);
    TensorT<S> grad = softmax_rows(logits);
    for (int b = 0; b < batch; ++b) {
        grad.at2(b, labels[b]) -= S(1);
        for (int c = 0; c < classes; ++c) grad.at2(b, c) /= static_cast<S>(batch);
    }
    return grad;
}

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
    TensorT<S> out(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <class S>
void add_inplace(TensorT<S>& a, const TensorT<S>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("add_inplace: shape mismatch");
    for (std::int64_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

template <class S>
bool all_finite(const TensorT<S>& t) {
    for (std::int64_t i = 0; i < t.numel(); ++i)
        if (!std::isfinite(static_cast<double>(t[i]))) return false;
    return true;
}

template <class S>
void AdamT<S>::attach(std::vector<ParameterT<S>*> params) {
    params_ = std::move(params);
    states_.clear();
    states_.reserve(params_.size());
    for (auto* p : params_) states_.push_back({TensorT<S>(p->value.shape()),
                                               TensorT<S>(p->value.shape())});
}

template <class S>
void AdamT<S>::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        ParameterT<S>& p = *params_[i];
        AdamStateT<S>& st = states_[i];
        const std::int64_t n = p.value.numel();
        for (std::int64_t j = 0; j < n; ++j) {
            const double g = static_cast<double>(p.grad[j]);
            const double m = beta1_ * st.m[j] + (1.0 - beta1_) * g;
            const double v = beta2_ * st.v[j] + (1.0 - beta2_) * g * g;
            st.m[j] = static_cast<S>(m);
            st.v[j] = static_cast<S>(v);
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            p.value[j] = static_cast<S>(p.value[j] - lr_ * m_hat / (std::sqrt(v_hat) + eps_));
        }
    }
}

#define ANYSIZE_INSTANTIATE(S)                                                                 \
    template TensorT<S> conv2d_same<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&, \
                                       int);                                                   \
    template Conv2dGrads<S> conv2d_same_backward<S>(const TensorT<S>&, const TensorT<S>&,      \
                                                    const TensorT<S>&, int, bool);             \
    template TensorT<S> dense<S>(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&);     \
    template DenseGrads<S> dense_backward<S>(const TensorT<S>&, const TensorT<S>&,             \
                                             const TensorT<S>&, bool);                         \
    template TensorT<S> global_average_pool<S>(const TensorT<S>&);                             \
    template TensorT<S> global_average_pool_backward<S>(const TensorT<S>&, int, int);          \
    template TensorT<S> activate<S>(const TensorT<S>&, Activation);                            \
    template TensorT<S> activate_backward<S>(const TensorT<S>&, const TensorT<S>&,             \
                                             const TensorT<S>&, Activation);                   \
    template S bce_loss<S>(const TensorT<S>&, const TensorT<S>&);                              \
    template TensorT<S> bce_loss_backward<S>(const TensorT<S>&, const TensorT<S>&);            \
    template TensorT<S> softmax_rows<S>(const TensorT<S>&);                                    \
    template S softmax_cross_entropy<S>(const TensorT<S>&, const std::vector<int>&);           \
    template TensorT<S> softmax_cross_entropy_backward<S>(const TensorT<S>&,                   \
                                                          const std::vector<int>&);            \
    template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&);                          \
    template void add_inplace<S>(TensorT<S>&, const TensorT<S>&);                              \
    template bool all_finite<S>(const TensorT<S>&);                                            \
    template class AdamT<S>;

ANYSIZE_INSTANTIATE(float)
ANYSIZE_INSTANTIATE(double)

#undef ANYSIZE_INSTANTIATE

}  // namespace anysize
