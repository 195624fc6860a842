// Independent brute-force oracles used by the test suites. These stay
// loop-based on purpose and must not share code with the library kernels
// they check.
#ifndef SEXPLAIN_TESTS_ORACLES_HPP
#define SEXPLAIN_TESTS_ORACLES_HPP

#include "sexplain/rng.hpp"
#include "sexplain/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using sexplain::Rng;
using sexplain::Tensor;

// Six-nested-loop direct cross-correlation.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& in, const Tensor<S>& w, const std::vector<S>& bias, int stride,
                 int padding) {
    const int n = in.shape[0], cin = in.shape[1], h = in.shape[2], wd = in.shape[3];
    const int cout = w.shape[0], k = w.shape[2];
    const int oh = (h + 2 * padding - k) / stride + 1;
    const int ow = (wd + 2 * padding - k) / stride + 1;
    Tensor<S> out({n, cout, oh, ow});
    for (int b = 0; b < n; ++b)
        for (int oc = 0; oc < cout; ++oc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias[oc];
                    for (int ic = 0; ic < cin; ++ic)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = oy * stride + ky - padding;
                                const int ix = ox * stride + kx - padding;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                acc += static_cast<double>(in.at(b, ic, iy, ix)) *
                                       static_cast<double>(w.at(oc, ic, ky, kx));
                            }
                    out.at(b, oc, oy, ox) = static_cast<S>(acc);
                }
    return out;
}

template <typename S>
Tensor<S> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<S> t(std::move(shape));
    for (Eigen::Index i = 0; i < t.data.size(); ++i)
        t.data[i] = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

// 2x2/stride-2 max pooling by direct scan.
template <typename S>
Tensor<S> maxpool2(const Tensor<S>& in) {
    Tensor<S> out({in.shape[0], in.shape[1], in.shape[2] / 2, in.shape[3] / 2});
    for (int n = 0; n < out.shape[0]; ++n)
        for (int c = 0; c < out.shape[1]; ++c)
            for (int y = 0; y < out.shape[2]; ++y)
                for (int x = 0; x < out.shape[3]; ++x) {
                    S best = in.at(n, c, 2 * y, 2 * x);
                    best = std::max(best, in.at(n, c, 2 * y, 2 * x + 1));
                    best = std::max(best, in.at(n, c, 2 * y + 1, 2 * x));
                    best = std::max(best, in.at(n, c, 2 * y + 1, 2 * x + 1));
                    out.at(n, c, y, x) = best;
                }
    return out;
}

template <typename S>
Tensor<S> gap(const Tensor<S>& in) {
    Tensor<S> out({in.shape[0], in.shape[1]});
    for (int n = 0; n < in.shape[0]; ++n)
        for (int c = 0; c < in.shape[1]; ++c) {
            double acc = 0.0;
            for (int y = 0; y < in.shape[2]; ++y)
                for (int x = 0; x < in.shape[3]; ++x) acc += in.at(n, c, y, x);
            out.data[static_cast<Eigen::Index>(n) * in.shape[1] + c] =
                static_cast<S>(acc / (static_cast<double>(in.shape[2]) * in.shape[3]));
        }
    return out;
}

template <typename S>
Tensor<S> fc(const Tensor<S>& x, const Tensor<S>& w, const std::vector<S>& bias) {
    const int n = x.shape[0], cin = x.shape[1], cout = w.shape[0];
    Tensor<S> out({n, cout});
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < cout; ++o) {
            double acc = bias[o];
            for (int i = 0; i < cin; ++i)
                acc += static_cast<double>(x.data[static_cast<Eigen::Index>(b) * cin + i]) *
                       static_cast<double>(w.data[static_cast<Eigen::Index>(o) * cin + i]);
            out.data[static_cast<Eigen::Index>(b) * cout + o] = static_cast<S>(acc);
        }
    return out;
}

// Squeeze/excite/scale for one sample with w1 (B x C) and w2 (C x B) given as
// flat row-major vectors.
template <typename S>
std::vector<double> squeeze(const Tensor<S>& u, int sample) {
    std::vector<double> z(u.shape[1], 0.0);
    for (int c = 0; c < u.shape[1]; ++c) {
        for (int y = 0; y < u.shape[2]; ++y)
            for (int x = 0; x < u.shape[3]; ++x) z[c] += u.at(sample, c, y, x);
        z[c] /= static_cast<double>(u.shape[2]) * u.shape[3];
    }
    return z;
}

inline std::vector<double> excite(const std::vector<double>& z, const std::vector<double>& w1,
                                  const std::vector<double>& w2, int bottleneck) {
    const int c = static_cast<int>(z.size());
    std::vector<double> hidden(bottleneck, 0.0);
    for (int b = 0; b < bottleneck; ++b) {
        for (int i = 0; i < c; ++i) hidden[b] += w1[static_cast<std::size_t>(b) * c + i] * z[i];
        hidden[b] = std::max(hidden[b], 0.0);
    }
    std::vector<double> s(c, 0.0);
    for (int i = 0; i < c; ++i) {
        double pre = 0.0;
        for (int b = 0; b < bottleneck; ++b)
            pre += w2[static_cast<std::size_t>(i) * bottleneck + b] * hidden[b];
        s[i] = 1.0 / (1.0 + std::exp(-pre));
    }
    return s;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& u, int sample, const std::vector<double>& s) {
    Tensor<S> out({1, u.shape[1], u.shape[2], u.shape[3]});
    for (int c = 0; c < u.shape[1]; ++c)
        for (int y = 0; y < u.shape[2]; ++y)
            for (int x = 0; x < u.shape[3]; ++x)
                out.at(0, c, y, x) = static_cast<S>(s[c] * u.at(sample, c, y, x));
    return out;
}

// Direct 16-tap cubic convolution (a = -0.5), half-pixel aligned, clamped.
inline double bicubic_at(const std::vector<double>& src, int h, int w, int oy, int ox, int out_h,
                         int out_w) {
    auto kern = [](double t) {
        t = std::abs(t);
        if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
        if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
        return 0.0;
    };
    const double sy = (oy + 0.5) * static_cast<double>(h) / out_h - 0.5;
    const double sx = (ox + 0.5) * static_cast<double>(w) / out_w - 0.5;
    const int by = static_cast<int>(std::floor(sy)), bx = static_cast<int>(std::floor(sx));
    double acc = 0.0;
    for (int i = -1; i <= 2; ++i)
        for (int j = -1; j <= 2; ++j) {
            const int yy = std::clamp(by + i, 0, h - 1);
            const int xx = std::clamp(bx + j, 0, w - 1);
            acc += kern(sy - (by + i)) * kern(sx - (bx + j)) *
                   src[static_cast<std::size_t>(yy) * w + xx];
        }
    return acc;
}

// Standard normal CDF inverse via plain bisection (reference for the
// threshold constant).
inline double normal_quantile_bisect(double p, double tol = 1e-7) {
    auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    double lo = -10.0, hi = 10.0;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace oracle

#endif
