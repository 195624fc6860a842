#ifndef SEXPLAIN_LAYERS_HPP
#define SEXPLAIN_LAYERS_HPP

#include "sexplain/tensor.hpp"

#include <cmath>
#include <span>
#include <utility>

namespace sexplain {

template <typename Scalar>
struct LayerGrad {
    Tensor<Scalar> input_grad;
    std::vector<Tensor<Scalar>> param_grads;
};

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Vector<Scalar, Eigen::Dynamic>;

namespace detail {

inline int conv_out_extent(int in, int k, int stride, int padding) {
    return (in + 2 * padding - k) / stride + 1;
}

// One sample -> column matrix: rows index (c, ky, kx), columns index output pixels.
template <typename Scalar>
void im2col(const Tensor<Scalar>& input, int sample, int k, int stride, int padding,
            MatrixX<Scalar>& cols) {
    const int C = input.c(), H = input.h(), W = input.w();
    const int oh = conv_out_extent(H, k, stride, padding);
    const int ow = conv_out_extent(W, k, stride, padding);
    cols.setZero(static_cast<Eigen::Index>(C) * k * k, static_cast<Eigen::Index>(oh) * ow);
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - padding;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - padding;
                        if (ix < 0 || ix >= W) continue;
                        cols(row, static_cast<Eigen::Index>(oy) * ow + ox) = input.at(sample, c, iy, ix);
                    }
                }
            }
        }
    }
}

template <typename Scalar>
void col2im_add(const MatrixX<Scalar>& cols, int sample, int k, int stride, int padding,
                Tensor<Scalar>& out) {
    const int C = out.c(), H = out.h(), W = out.w();
    const int oh = conv_out_extent(H, k, stride, padding);
    const int ow = conv_out_extent(W, k, stride, padding);
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - padding;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - padding;
                        if (ix < 0 || ix >= W) continue;
                        out.at(sample, c, iy, ix) += cols(row, static_cast<Eigen::Index>(oy) * ow + ox);
                    }
                }
            }
        }
    }
}

template <typename Scalar>
void check_conv_args(const Tensor<Scalar>& input, const Tensor<Scalar>& weights, int stride,
                     int padding) {
    if (input.shape.size() != 4) throw ShapeError("conv2d: input must be rank 4 (NCHW)");
    if (weights.shape.size() != 4) throw ShapeError("conv2d: weights must be rank 4");
    if (weights.shape[2] != weights.shape[3]) throw ShapeError("conv2d: kernel must be square");
    if (stride < 1) throw ShapeError("conv2d: stride must be positive");
    if (padding < 0) throw ShapeError("conv2d: padding must be non-negative");
    if (weights.shape[1] != input.shape[1])
        throw ShapeError("conv2d: channel axis mismatch, input C=" + std::to_string(input.shape[1]) +
                         " weights C_in=" + std::to_string(weights.shape[1]));
    const int k = weights.shape[2];
    if (k > input.h() + 2 * padding || k > input.w() + 2 * padding)
        throw ShapeError("conv2d: kernel k=" + std::to_string(k) +
                         " exceeds padded spatial extent on axis 2/3");
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                              const VectorX<Scalar>& bias, int stride, int padding) {
    detail::check_conv_args(input, weights, stride, padding);
    const int N = input.n(), k = weights.shape[2], cout = weights.shape[0];
    if (bias.size() != cout) throw ShapeError("conv2d: bias length must equal C_out");
    const int oh = detail::conv_out_extent(input.h(), k, stride, padding);
    const int ow = detail::conv_out_extent(input.w(), k, stride, padding);
    Tensor<Scalar> out({N, cout, oh, ow});

    const Eigen::Index K = static_cast<Eigen::Index>(weights.shape[1]) * k * k;
    const Eigen::Index L = static_cast<Eigen::Index>(oh) * ow;
    Eigen::Map<const RowMatrixX<Scalar>> wm(weights.data.data(), cout, K);
    MatrixX<Scalar> cols;
    for (int n = 0; n < N; ++n) {
        detail::im2col(input, n, k, stride, padding, cols);
        Eigen::Map<RowMatrixX<Scalar>> ym(out.data.data() + static_cast<Eigen::Index>(n) * cout * L,
                                          cout, L);
        ym.noalias() = wm * cols;
        ym.colwise() += bias;
    }
    return out;
}

template <typename Scalar>
LayerGrad<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                                  const Tensor<Scalar>& output_grad, int stride, int padding) {
    detail::check_conv_args(input, weights, stride, padding);
    const int N = input.n(), k = weights.shape[2], cout = weights.shape[0];
    const int oh = detail::conv_out_extent(input.h(), k, stride, padding);
    const int ow = detail::conv_out_extent(input.w(), k, stride, padding);
    require_shape(output_grad, {N, cout, oh, ow}, "conv2d_backward output_grad");

    const Eigen::Index K = static_cast<Eigen::Index>(weights.shape[1]) * k * k;
    const Eigen::Index L = static_cast<Eigen::Index>(oh) * ow;
    Eigen::Map<const RowMatrixX<Scalar>> wm(weights.data.data(), cout, K);

    LayerGrad<Scalar> g;
    g.input_grad = Tensor<Scalar>(input.shape);
    Tensor<Scalar> dweights(weights.shape);
    Tensor<Scalar> dbias({cout});
    Eigen::Map<RowMatrixX<Scalar>> dwm(dweights.data.data(), cout, K);

    MatrixX<Scalar> cols, dcols;
    for (int n = 0; n < N; ++n) {
        Eigen::Map<const RowMatrixX<Scalar>> dym(
            output_grad.data.data() + static_cast<Eigen::Index>(n) * cout * L, cout, L);
        detail::im2col(input, n, k, stride, padding, cols);
        dwm.noalias() += dym * cols.transpose();
        dbias.data += dym.rowwise().sum();
        dcols.noalias() = wm.transpose() * dym;
        detail::col2im_add(dcols, n, k, stride, padding, g.input_grad);
    }
    g.param_grads.push_back(std::move(dweights));
    g.param_grads.push_back(std::move(dbias));
    return g;
}

template <typename Scalar>
Tensor<Scalar> relu_forward(const Tensor<Scalar>& input) {
    Tensor<Scalar> out(input.shape);
    out.data = input.data.cwiseMax(Scalar(0));
    return out;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& output_grad) {
    if (!input.same_shape(output_grad)) throw ShapeError("relu_backward: shape mismatch");
    Tensor<Scalar> g(input.shape);
    g.data = (input.data.array() > Scalar(0))
                 .select(output_grad.data.array(), Scalar(0))
                 .matrix();
    return g;
}

// 2x2 max pooling, stride 2. Ties resolve to the first cell in row-major scan order.
template <typename Scalar>
Tensor<Scalar> maxpool2_forward(const Tensor<Scalar>& input) {
    if (input.shape.size() != 4) throw ShapeError("maxpool2: input must be rank 4");
    if (input.h() % 2 != 0 || input.w() % 2 != 0)
        throw ShapeError("maxpool2: spatial extents must be even, got H=" +
                         std::to_string(input.h()) + " W=" + std::to_string(input.w()));
    Tensor<Scalar> out({input.n(), input.c(), input.h() / 2, input.w() / 2});
    for (int n = 0; n < input.n(); ++n)
        for (int c = 0; c < input.c(); ++c)
            for (int oy = 0; oy < out.h(); ++oy)
                for (int ox = 0; ox < out.w(); ++ox) {
                    Scalar best = input.at(n, c, 2 * oy, 2 * ox);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const Scalar v = input.at(n, c, 2 * oy + dy, 2 * ox + dx);
                            if (v > best) best = v;
                        }
                    out.at(n, c, oy, ox) = best;
                }
    return out;
}

template <typename Scalar>
Tensor<Scalar> maxpool2_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& output_grad) {
    require_shape(output_grad, {input.n(), input.c(), input.h() / 2, input.w() / 2},
                  "maxpool2_backward output_grad");
    Tensor<Scalar> g(input.shape);
    for (int n = 0; n < input.n(); ++n)
        for (int c = 0; c < input.c(); ++c)
            for (int oy = 0; oy < output_grad.h(); ++oy)
                for (int ox = 0; ox < output_grad.w(); ++ox) {
                    int by = 2 * oy, bx = 2 * ox;
                    Scalar best = input.at(n, c, by, bx);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const Scalar v = input.at(n, c, 2 * oy + dy, 2 * ox + dx);
                            if (v > best) {
                                best = v;
                                by = 2 * oy + dy;
                                bx = 2 * ox + dx;
                            }
                        }
                    g.at(n, c, by, bx) += output_grad.at(n, c, oy, ox);
                }
    return g;
}

// Global average pool: (N,C,H,W) -> (N,C)
template <typename Scalar>
Tensor<Scalar> gap_forward(const Tensor<Scalar>& input) {
    if (input.shape.size() != 4) throw ShapeError("gap: input must be rank 4");
    Tensor<Scalar> out({input.n(), input.c()});
    const Scalar inv = Scalar(1) / static_cast<Scalar>(static_cast<std::int64_t>(input.h()) * input.w());
    for (int n = 0; n < input.n(); ++n)
        for (int c = 0; c < input.c(); ++c)
            out.data[static_cast<Eigen::Index>(n) * input.c() + c] = input.plane(n, c).sum() * inv;
    return out;
}

template <typename Scalar>
Tensor<Scalar> gap_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& output_grad) {
    require_shape(output_grad, {input.n(), input.c()}, "gap_backward output_grad");
    Tensor<Scalar> g(input.shape);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(static_cast<std::int64_t>(input.h()) * input.w());
    for (int n = 0; n < input.n(); ++n)
        for (int c = 0; c < input.c(); ++c)
            g.plane(n, c).setConstant(output_grad.data[static_cast<Eigen::Index>(n) * input.c() + c] *
                                      inv);
    return g;
}

// Dense layer: x (N,C_in), weights (C_out,C_in), bias C_out -> (N,C_out)
template <typename Scalar>
Tensor<Scalar> fc_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                          const VectorX<Scalar>& bias) {
    if (x.shape.size() != 2 || weights.shape.size() != 2)
        throw ShapeError("fc: input and weights must be rank 2");
    if (x.shape[1] != weights.shape[1])
        throw ShapeError("fc: feature axis mismatch, input C=" + std::to_string(x.shape[1]) +
                         " weights C_in=" + std::to_string(weights.shape[1]));
    const int N = x.shape[0], cout = weights.shape[0];
    if (bias.size() != cout) throw ShapeError("fc: bias length must equal C_out");
    Tensor<Scalar> out({N, cout});
    Eigen::Map<const RowMatrixX<Scalar>> xm(x.data.data(), N, x.shape[1]);
    Eigen::Map<const RowMatrixX<Scalar>> wm(weights.data.data(), cout, weights.shape[1]);
    Eigen::Map<RowMatrixX<Scalar>> ym(out.data.data(), N, cout);
    ym.noalias() = xm * wm.transpose();
    ym.rowwise() += bias.transpose();
    return out;
}

template <typename Scalar>
LayerGrad<Scalar> fc_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                              const Tensor<Scalar>& output_grad) {
    const int N = x.shape[0], cout = weights.shape[0];
    require_shape(output_grad, {N, cout}, "fc_backward output_grad");
    LayerGrad<Scalar> g;
    g.input_grad = Tensor<Scalar>(x.shape);
    Tensor<Scalar> dw(weights.shape);
    Tensor<Scalar> db({cout});
    Eigen::Map<const RowMatrixX<Scalar>> xm(x.data.data(), N, x.shape[1]);
    Eigen::Map<const RowMatrixX<Scalar>> wm(weights.data.data(), cout, weights.shape[1]);
    Eigen::Map<const RowMatrixX<Scalar>> dym(output_grad.data.data(), N, cout);
    Eigen::Map<RowMatrixX<Scalar>> dxm(g.input_grad.data.data(), N, x.shape[1]);
    Eigen::Map<RowMatrixX<Scalar>> dwm(dw.data.data(), cout, weights.shape[1]);
    dxm.noalias() = dym * wm;
    dwm.noalias() = dym.transpose() * xm;
    db.data = dym.colwise().sum();
    g.param_grads.push_back(std::move(dw));
    g.param_grads.push_back(std::move(db));
    return g;
}

// Mean cross-entropy over the batch with max-shifted softmax.
// Returned gradient is d(mean loss)/d(logits).
template <typename Scalar>
std::pair<Scalar, Tensor<Scalar>> softmax_cross_entropy(const Tensor<Scalar>& logits,
                                                        std::span<const int> labels) {
    if (logits.shape.size() != 2) throw ShapeError("softmax_cross_entropy: logits must be rank 2");
    const int N = logits.shape[0], K = logits.shape[1];
    if (static_cast<int>(labels.size()) != N)
        throw ShapeError("softmax_cross_entropy: label count must equal batch size");
    Tensor<Scalar> grad(logits.shape);
    Scalar loss = 0;
    for (int n = 0; n < N; ++n) {
        if (labels[n] < 0 || labels[n] >= K)
            throw ShapeError("softmax_cross_entropy: label " + std::to_string(labels[n]) +
                             " outside [0," + std::to_string(K) + ")");
        auto row = logits.data.segment(static_cast<Eigen::Index>(n) * K, K);
        const Scalar m = row.maxCoeff();
        VectorX<Scalar> e = (row.array() - m).exp();
        const Scalar z = e.sum();
        loss -= std::log(e[labels[n]] / z);
        auto grow = grad.data.segment(static_cast<Eigen::Index>(n) * K, K);
        grow = e / (z * static_cast<Scalar>(N));
        grow[labels[n]] -= Scalar(1) / static_cast<Scalar>(N);
    }
    return {loss / static_cast<Scalar>(N), std::move(grad)};
}

template <typename Scalar>
VectorX<Scalar> softmax(const VectorX<Scalar>& logits) {
    const Scalar m = logits.maxCoeff();
    VectorX<Scalar> e = (logits.array() - m).exp();
    return e / e.sum();
}

}  // namespace sexplain

#endif
