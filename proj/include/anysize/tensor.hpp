#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace anysize {

/// Spatial extent, height-first to match BCHW layout.
struct Size2d {
    int h = 0;
    int w = 0;

    bool operator==(const Size2d&) const = default;
};

/// Dense rank-N array of scalars, row-major. Images are batch x channel x
/// height x width. Once produced by an operation a tensor is treated as an
/// immutable value; only the optimizer mutates parameter tensors in place.
template <class S>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), S(0)) {}

    TensorT(std::vector<int> shape, std::vector<S> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != checked_numel(shape_))
            throw std::invalid_argument("tensor: data length does not match shape");
    }

    static TensorT full(std::vector<int> shape, S value) {
        TensorT t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    std::vector<S>& raw() { return data_; }
    const std::vector<S>& raw() const { return data_; }

    S& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const S& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // BCHW element access.
    S& at4(int b, int c, int y, int x) {
        return data_[static_cast<std::size_t>(index4(b, c, y, x))];
    }
    const S& at4(int b, int c, int y, int x) const {
        return data_[static_cast<std::size_t>(index4(b, c, y, x))];
    }
    std::int64_t index4(int b, int c, int y, int x) const {
        return ((static_cast<std::int64_t>(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
    }

    S& at2(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    const S& at2(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

    /// Reinterpret the buffer under a new shape with identical element count.
    TensorT reshaped(std::vector<int> new_shape) const& {
        TensorT t(std::move(new_shape), data_);
        return t;
    }
    TensorT reshaped(std::vector<int> new_shape) && {
        TensorT t(std::move(new_shape), std::move(data_));
        return t;
    }

    void fill(S value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

private:
    static std::int64_t checked_numel(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d < 1) throw std::invalid_argument("tensor: extents must be >= 1");
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<S> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <class S>
TensorT<S> zeros_like(const TensorT<S>& t) {
    return TensorT<S>(t.shape());
}

template <class S, class T>
TensorT<T> cast_tensor(const TensorT<S>& t) {
    std::vector<T> out(t.raw().begin(), t.raw().end());
    return TensorT<T>(t.shape(), std::move(out));
}

}  // namespace anysize
