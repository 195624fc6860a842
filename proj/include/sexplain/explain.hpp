#ifndef SEXPLAIN_EXPLAIN_HPP
#define SEXPLAIN_EXPLAIN_HPP

#include "sexplain/image.hpp"
#include "sexplain/model.hpp"
#include "sexplain/se.hpp"

#include <array>
#include <string>

namespace sexplain {

struct SaliencyMap {
    Eigen::MatrixXf values;  // h x w, in [0,1]
    std::string method;      // "se" | "gradcam" | "random"

    int h() const { return static_cast<int>(values.rows()); }
    int w() const { return static_cast<int>(values.cols()); }
};

// Cubic convolution with kernel parameter a = -0.5, half-pixel alignment
// (source = (dst + 0.5) * in / out - 0.5), edge-clamped sampling.
Eigen::MatrixXf bicubic_upsample(const Eigen::MatrixXf& src, int out_h, int out_w);

// Min-max to [0,1]; an all-equal map becomes 0.5 everywhere.
Eigen::MatrixXf minmax_normalize(const Eigen::MatrixXf& raw);

// s-weighted mean over the selected channels of a captured pre-GAP feature
// map, bicubic-upsampled to image resolution and min-max normalized.
SaliencyMap se_heatmap(const Tensorf& captured, int sample, const VectorX<float>& s,
                       const ChannelSelection& selection, int img_h, int img_w);

// Plain GradCAM on the last conv output (the pre-SE map). class_index < 0
// means the predicted class.
SaliencyMap gradcam(const SmallCnn& model, const Tensorf& single, int class_index = -1);

SaliencyMap random_saliency(int h, int w, std::uint64_t seed);

// Fixed 5-anchor blue-cyan-green-yellow-red ramp.
std::array<std::uint8_t, 3> saliency_color(float t);

// out = (1 - alpha) * image + alpha * colormap(saliency), clamped.
ImageU8 overlay(const ImageU8& image, const SaliencyMap& saliency, double alpha);

}  // namespace sexplain

#endif
