#pragma once

#include <array>

#include "anysize/tensor.hpp"

namespace anysize {

/// Source/target dims of one resize call. Width ratios follow
/// xRatio = in_w / out_w (and likewise for height).
struct ResizeSpec {
    enum class Mode { bilinear, nearest };
    int in_h = 0, in_w = 0;
    int out_h = 0, out_w = 0;
    Mode mode = Mode::bilinear;
};

// Runtime-sized resampling layers. The output dims are call arguments, not
// construction-time constants, so one layer instance serves every target
// size. Coordinates use half-pixel centers with edge clamping:
//     src = (dst + 0.5) * (in / out) - 0.5, clamped to [0, in - 1]
// which maps identity-size resizes to an exact copy.

template <class S>
TensorT<S> resize_bilinear(const TensorT<S>& input, int out_h, int out_w);

/// Exact transpose of resize_bilinear's linear map: scatter-adds each output
/// gradient into its four source neighbours with the forward weights.
template <class S>
TensorT<S> resize_bilinear_backward(const TensorT<S>& grad_out, int in_h, int in_w);

template <class S>
TensorT<S> resize_nearest(const TensorT<S>& input, int out_h, int out_w);

/// Adjoint of the nearest-neighbour selection: each output gradient is added
/// to the single source pixel it copied from.
template <class S>
TensorT<S> resize_nearest_backward(const TensorT<S>& grad_out, int in_h, int in_w);

/// The per-stage (height, width) targets for the five progressive resizes.
struct SizeSchedule {
    static constexpr int kStages = 5;
    Size2d base;
    Size2d target;
    std::array<Size2d, kStages> stages;
};

/// Geometric interpolation from base to target: stage k gets
/// round(base * (target/base)^(k/5)), clamped monotone, final stage forced to
/// the target exactly. Targets below base are rejected.
SizeSchedule compute_schedule(Size2d base, Size2d target);

}  // namespace anysize
