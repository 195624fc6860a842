#include "sexplain/explain.hpp"

#include <algorithm>
#include <cmath>

namespace sexplain {

namespace {

// cubic convolution kernel, a = -0.5
double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

}  // namespace

Eigen::MatrixXf bicubic_upsample(const Eigen::MatrixXf& src, int out_h, int out_w) {
    const int h = static_cast<int>(src.rows()), w = static_cast<int>(src.cols());
    if (h < 2 || w < 2) throw std::invalid_argument("bicubic_upsample: source must be >= 2x2");
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("bicubic_upsample: output extents must be >= 1");

    Eigen::MatrixXf out(out_h, out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        const double sy = (oy + 0.5) * static_cast<double>(h) / out_h - 0.5;
        const int by = static_cast<int>(std::floor(sy));
        double wy[4];
        for (int i = 0; i < 4; ++i) wy[i] = cubic_weight(sy - (by - 1 + i));
        for (int ox = 0; ox < out_w; ++ox) {
            const double sx = (ox + 0.5) * static_cast<double>(w) / out_w - 0.5;
            const int bx = static_cast<int>(std::floor(sx));
            double wx[4];
            for (int j = 0; j < 4; ++j) wx[j] = cubic_weight(sx - (bx - 1 + j));
            double acc = 0.0;
            for (int i = 0; i < 4; ++i) {
                const int yy = std::clamp(by - 1 + i, 0, h - 1);
                for (int j = 0; j < 4; ++j) {
                    const int xx = std::clamp(bx - 1 + j, 0, w - 1);
                    acc += wy[i] * wx[j] * static_cast<double>(src(yy, xx));
                }
            }
            out(oy, ox) = static_cast<float>(acc);
        }
    }
    return out;
}

Eigen::MatrixXf minmax_normalize(const Eigen::MatrixXf& raw) {
    const float lo = raw.minCoeff(), hi = raw.maxCoeff();
    if (hi - lo <= 0.0f) return Eigen::MatrixXf::Constant(raw.rows(), raw.cols(), 0.5f);
    return (raw.array() - lo) / (hi - lo);
}

SaliencyMap se_heatmap(const Tensorf& captured, int sample, const VectorX<float>& s,
                       const ChannelSelection& selection, int img_h, int img_w) {
    if (captured.shape.size() != 4) throw ShapeError("se_heatmap: captured map must be rank 4");
    if (selection.indices.empty())
        throw std::logic_error("se_heatmap: empty channel selection");
    for (int c : selection.indices)
        if (c < 0 || c >= captured.c())
            throw std::invalid_argument("se_heatmap: selected channel out of range");

    const int fh = captured.h(), fw = captured.w();
    Eigen::MatrixXf raw = Eigen::MatrixXf::Zero(fh, fw);
    double weight_sum = 0.0;
    for (int c : selection.indices) {
        const double sc = static_cast<double>(s[c]);
        weight_sum += sc;
        for (int y = 0; y < fh; ++y)
            for (int x = 0; x < fw; ++x)
                raw(y, x) += static_cast<float>(sc * captured.at(sample, c, y, x));
    }
    raw /= static_cast<float>(weight_sum);

    SaliencyMap map;
    map.method = "se";
    map.values = minmax_normalize(bicubic_upsample(raw, img_h, img_w));
    return map;
}

SaliencyMap gradcam(const SmallCnn& model, const Tensorf& single, int class_index) {
    if (single.n() != 1) throw ShapeError("gradcam: expects a single-sample batch");
    const auto cap = model.forward(single);
    int target = class_index;
    if (target < 0) {
        Eigen::Index best;
        cap.logits.data.maxCoeff(&best);
        target = static_cast<int>(best);
    }
    if (target >= model.cfg.num_classes)
        throw std::invalid_argument("gradcam: class index out of range");

    const Tensorf grad = model.logit_grad_pre_se(single, target);
    const int fc = cap.pre_se.c(), fh = cap.pre_se.h(), fw = cap.pre_se.w();
    const float inv_hw = 1.0f / static_cast<float>(fh * fw);
    Eigen::MatrixXf raw = Eigen::MatrixXf::Zero(fh, fw);
    for (int c = 0; c < fc; ++c) {
        const float alpha = grad.plane(0, c).sum() * inv_hw;
        for (int y = 0; y < fh; ++y)
            for (int x = 0; x < fw; ++x) raw(y, x) += alpha * cap.pre_se.at(0, c, y, x);
    }
    raw = raw.cwiseMax(0.0f);

    SaliencyMap map;
    map.method = "gradcam";
    map.values = minmax_normalize(bicubic_upsample(raw, single.h(), single.w()));
    return map;
}

SaliencyMap random_saliency(int h, int w, std::uint64_t seed) {
    if (h < 1 || w < 1) throw std::invalid_argument("random_saliency: extents must be >= 1");
    Rng rng(seed);
    SaliencyMap map;
    map.method = "random";
    map.values.resize(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) map.values(y, x) = static_cast<float>(rng.uniform());
    map.values = minmax_normalize(map.values);
    return map;
}

std::array<std::uint8_t, 3> saliency_color(float t) {
    static const float anchors[5][3] = {
        {0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}};
    t = std::clamp(t, 0.0f, 1.0f);
    const float pos = t * 4.0f;
    const int seg = std::min(3, static_cast<int>(pos));
    const float frac = pos - seg;
    std::array<std::uint8_t, 3> rgb;
    for (int ch = 0; ch < 3; ++ch) {
        const float v = anchors[seg][ch] + frac * (anchors[seg + 1][ch] - anchors[seg][ch]);
        rgb[ch] = static_cast<std::uint8_t>(std::lround(v));
    }
    return rgb;
}

ImageU8 overlay(const ImageU8& image, const SaliencyMap& saliency, double alpha) {
    if (image.h != saliency.h() || image.w != saliency.w())
        throw ShapeError("overlay: image and saliency dimensions differ");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("overlay: alpha must be in [0,1]");
    ImageU8 out = image;
    if (alpha == 0.0) return out;  // bit-exact identity
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x) {
            const auto color = saliency_color(saliency.values(y, x));
            for (int ch = 0; ch < 3; ++ch) {
                const double v = (1.0 - alpha) * image.at(y, x, ch) + alpha * color[ch];
                out.at(y, x, ch) =
                    static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    return out;
}

}  // namespace sexplain
