#ifndef SEXPLAIN_SE_HPP
#define SEXPLAIN_SE_HPP

#include "sexplain/layers.hpp"
#include "sexplain/rng.hpp"
#include "sexplain/stats.hpp"
#include "sexplain/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace sexplain {

// Excitation bottleneck: s = sigmoid(W2 * relu(W1 * z)). No bias terms.
template <typename Scalar>
struct SEBlockParams {
    int reduction = 16;
    RowMatrixX<Scalar> w1;  // B x C
    RowMatrixX<Scalar> w2;  // C x B

    int channels() const { return static_cast<int>(w1.cols()); }
    int bottleneck() const { return static_cast<int>(w1.rows()); }

    static int bottleneck_width(int channels, int reduction) {
        const int r_eff = std::max(1, std::min(reduction, channels));
        return std::max(1, channels / r_eff);
    }

    static SEBlockParams make(int channels, int reduction) {
        SEBlockParams p;
        p.reduction = reduction;
        const int b = bottleneck_width(channels, reduction);
        p.w1.setZero(b, channels);
        p.w2.setZero(channels, b);
        return p;
    }

    // Glorot-uniform init keeps the initial gate near 0.5.
    void init(Rng& rng) {
        const double l1 = std::sqrt(6.0 / (w1.cols() + w1.rows()));
        const double l2 = std::sqrt(6.0 / (w2.cols() + w2.rows()));
        for (Eigen::Index j = 0; j < w1.cols(); ++j)
            for (Eigen::Index i = 0; i < w1.rows(); ++i)
                w1(i, j) = static_cast<Scalar>(rng.uniform(-l1, l1));
        for (Eigen::Index j = 0; j < w2.cols(); ++j)
            for (Eigen::Index i = 0; i < w2.rows(); ++i)
                w2(i, j) = static_cast<Scalar>(rng.uniform(-l2, l2));
    }

    template <typename Other>
    SEBlockParams<Other> cast() const {
        SEBlockParams<Other> p;
        p.reduction = reduction;
        p.w1 = w1.template cast<Other>();
        p.w2 = w2.template cast<Other>();
        return p;
    }
};

template <typename Scalar>
struct SEVector {
    VectorX<Scalar> z;  // squeezed channel descriptors
    VectorX<Scalar> s;  // channel importance weights, each in (0,1)
};

struct ChannelSelection {
    std::vector<int> indices;  // strictly increasing
    double threshold = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
    bool fallback_used = false;
};

// z_c = mean over H*W of channel c for one sample.
template <typename Scalar>
VectorX<Scalar> squeeze(const Tensor<Scalar>& u, int sample) {
    if (u.shape.size() != 4) throw ShapeError("squeeze: input must be rank 4");
    if (sample < 0 || sample >= u.n()) throw ShapeError("squeeze: sample index out of range");
    VectorX<Scalar> z(u.c());
    const Scalar inv = Scalar(1) / static_cast<Scalar>(static_cast<std::int64_t>(u.h()) * u.w());
    for (int c = 0; c < u.c(); ++c) z[c] = u.plane(sample, c).sum() * inv;
    return z;
}

template <typename Scalar>
VectorX<Scalar> excite(const VectorX<Scalar>& z, const SEBlockParams<Scalar>& params) {
    if (z.size() != params.channels())
        throw ShapeError("excite: descriptor length " + std::to_string(z.size()) +
                         " does not match block channels " + std::to_string(params.channels()));
    VectorX<Scalar> hidden = (params.w1 * z).cwiseMax(Scalar(0));
    VectorX<Scalar> pre = params.w2 * hidden;
    return pre.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
}

// x_c = s_c * u_c for one sample's feature map (N=1 slice handled by caller loop).
template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& u, const VectorX<Scalar>& s) {
    if (u.shape.size() != 4) throw ShapeError("scale: input must be rank 4");
    if (s.size() != u.c()) throw ShapeError("scale: weight length does not match channels");
    Tensor<Scalar> x(u.shape);
    for (int n = 0; n < u.n(); ++n)
        for (int c = 0; c < u.c(); ++c) x.plane(n, c) = u.plane(n, c) * s[c];
    return x;
}

template <typename Scalar>
struct SEForwardResult {
    Tensor<Scalar> x;
    std::vector<SEVector<Scalar>> se;  // one per sample
};

template <typename Scalar>
SEForwardResult<Scalar> se_forward(const Tensor<Scalar>& u, const SEBlockParams<Scalar>& params) {
    if (u.shape.size() != 4) throw ShapeError("se_forward: input must be rank 4");
    if (u.c() != params.channels()) throw ShapeError("se_forward: channel count mismatch");
    SEForwardResult<Scalar> r;
    r.x = Tensor<Scalar>(u.shape);
    r.se.resize(u.n());
    for (int n = 0; n < u.n(); ++n) {
        r.se[n].z = squeeze(u, n);
        r.se[n].s = excite(r.se[n].z, params);
        for (int c = 0; c < u.c(); ++c) r.x.plane(n, c) = u.plane(n, c) * r.se[n].s[c];
    }
    return r;
}

// Gradients of the composed squeeze->excite->scale block.
// input_grad carries the direct path (s_c scaling) plus the indirect path
// through the squeezed descriptor z.
template <typename Scalar>
LayerGrad<Scalar> se_backward(const Tensor<Scalar>& u, const SEBlockParams<Scalar>& params,
                              const Tensor<Scalar>& output_grad) {
    if (!u.same_shape(output_grad)) throw ShapeError("se_backward: output_grad shape mismatch");
    if (u.c() != params.channels()) throw ShapeError("se_backward: channel count mismatch");

    LayerGrad<Scalar> g;
    g.input_grad = Tensor<Scalar>(u.shape);
    RowMatrixX<Scalar> dw1 = RowMatrixX<Scalar>::Zero(params.w1.rows(), params.w1.cols());
    RowMatrixX<Scalar> dw2 = RowMatrixX<Scalar>::Zero(params.w2.rows(), params.w2.cols());
    const Scalar inv_hw = Scalar(1) / static_cast<Scalar>(static_cast<std::int64_t>(u.h()) * u.w());

    for (int n = 0; n < u.n(); ++n) {
        const VectorX<Scalar> z = squeeze(u, n);
        const VectorX<Scalar> pre1 = params.w1 * z;
        const VectorX<Scalar> hidden = pre1.cwiseMax(Scalar(0));
        const VectorX<Scalar> pre2 = params.w2 * hidden;
        const VectorX<Scalar> s =
            pre2.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });

        VectorX<Scalar> ds(u.c());
        for (int c = 0; c < u.c(); ++c) {
            ds[c] = output_grad.plane(n, c).dot(u.plane(n, c));
            g.input_grad.plane(n, c) = output_grad.plane(n, c) * s[c];
        }
        const VectorX<Scalar> dpre2 =
            ds.cwiseProduct(s.cwiseProduct(VectorX<Scalar>::Ones(s.size()) - s));
        dw2.noalias() += dpre2 * hidden.transpose();
        VectorX<Scalar> dhidden = params.w2.transpose() * dpre2;
        const VectorX<Scalar> dpre1 =
            (pre1.array() > Scalar(0)).select(dhidden.array(), Scalar(0)).matrix();
        dw1.noalias() += dpre1 * z.transpose();
        const VectorX<Scalar> dz = params.w1.transpose() * dpre1;
        for (int c = 0; c < u.c(); ++c)
            g.input_grad.plane(n, c).array() += dz[c] * inv_hw;
    }

    Tensor<Scalar> tw1({static_cast<int>(params.w1.rows()), static_cast<int>(params.w1.cols())});
    Tensor<Scalar> tw2({static_cast<int>(params.w2.rows()), static_cast<int>(params.w2.cols())});
    Eigen::Map<RowMatrixX<Scalar>>(tw1.data.data(), params.w1.rows(), params.w1.cols()) = dw1;
    Eigen::Map<RowMatrixX<Scalar>>(tw2.data.data(), params.w2.rows(), params.w2.cols()) = dw2;
    g.param_grads.push_back(std::move(tw1));
    g.param_grads.push_back(std::move(tw2));
    return g;
}

// Top-fraction channel selection assuming near-normal s values:
// threshold = mu + Phi^{-1}(1 - fraction) * sigma (population sigma).
// Degenerate cases (flat s, empty selection, fraction == 1) fall back to a
// straight top-k by value with lower-index tie-break.
template <typename Scalar>
ChannelSelection select_top_channels(const VectorX<Scalar>& s, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("select_top_channels: fraction must be in (0,1]");
    const int c = static_cast<int>(s.size());
    if (c < 2) throw std::invalid_argument("select_top_channels: need at least 2 channels");

    ChannelSelection sel;
    double mu = 0.0;
    for (int i = 0; i < c; ++i) mu += static_cast<double>(s[i]);
    mu /= c;
    double var = 0.0;
    for (int i = 0; i < c; ++i) {
        const double d = static_cast<double>(s[i]) - mu;
        var += d * d;
    }
    var /= c;
    sel.mu = mu;
    sel.sigma = std::sqrt(var);

    auto fallback_topk = [&](int k) {
        std::vector<int> order(c);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return s[a] > s[b]; });
        order.resize(k);
        std::sort(order.begin(), order.end());
        sel.indices = std::move(order);
        sel.fallback_used = true;
    };

    if (fraction >= 1.0) {
        sel.threshold = -std::numeric_limits<double>::infinity();
        fallback_topk(c);
        return sel;
    }

    sel.threshold = sel.mu + normal_quantile(1.0 - fraction) * sel.sigma;
    if (sel.sigma >= 1e-8) {
        for (int i = 0; i < c; ++i)
            if (static_cast<double>(s[i]) > sel.threshold) sel.indices.push_back(i);
    }
    if (sel.indices.empty()) {
        const int k = std::min(c, static_cast<int>(std::ceil(fraction * c)));
        fallback_topk(std::max(1, k));
    }
    return sel;
}

}  // namespace sexplain

#endif
