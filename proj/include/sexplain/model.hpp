#ifndef SEXPLAIN_MODEL_HPP
#define SEXPLAIN_MODEL_HPP

#include "sexplain/data.hpp"
#include "sexplain/se.hpp"
#include "sexplain/stats.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sexplain {

struct CheckpointError : std::runtime_error {
    enum class Kind { bad_magic, bad_version, truncated, malformed };
    Kind kind;
    CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

enum class ParamTag : std::uint8_t {
    conv_w = 1,
    conv_b = 2,
    fc_w = 3,
    fc_b = 4,
    se_w1 = 5,
    se_w2 = 6,
};

struct SmallCnnConfig {
    int num_classes = 10;
    int in_c = 3;
    int in_h = 32;
    int in_w = 32;
    bool se_enabled = true;
    int reduction = 16;
};

struct ConvLayer {
    Tensorf w;  // (C_out, C_in, 3, 3)
    VectorX<float> b;
};

// conv3x3(32)-ReLU x2, pool, conv3x3(64)-ReLU x2, pool, conv3x3(128)-ReLU,
// optional SE, GAP, FC. The SE block sits immediately before GAP.
class SmallCnn {
public:
    SmallCnnConfig cfg;
    std::vector<ConvLayer> convs;  // 5 layers
    Tensorf fc_w;                  // (num_classes, 128)
    VectorX<float> fc_b;
    SEBlockParams<float> se;
    std::map<std::string, std::string> metadata;

    static SmallCnn build(const SmallCnnConfig& cfg);
    void init_params(std::uint64_t seed);

    static constexpr int kFeatureChannels = 128;
    int feature_h() const { return cfg.in_h / 4; }
    int feature_w() const { return cfg.in_w / 4; }

    struct Capture {
        Tensorf logits;                        // (N, num_classes)
        Tensorf pre_se;                        // (N, 128, H/4, W/4), post-ReLU conv output
        std::vector<SEVector<float>> se;       // empty when SE disabled
    };
    Capture forward(const Tensorf& batch) const;

    // Per sample: keep only the top-fraction SE channels of the scaled map,
    // zero the rest, then continue GAP -> FC.
    Tensorf forward_ablated(const Tensorf& batch, double fraction) const;
    // Same but with an externally supplied channel mask (random-control runs).
    Tensorf forward_masked(const Tensorf& batch, std::span<const int> keep_channels) const;

    struct Cache {
        Tensorf x0, a1, r1, a2, r2, p1, a3, r3, a4, r4, p2, a5, r5, x6, g, logits;
        std::vector<SEVector<float>> se;
    };
    Cache forward_train(const Tensorf& batch) const;

    // Gradients in param_views() order. Returns mean batch loss.
    float backward(const Cache& cache, std::span<const int> labels,
                   std::vector<Tensorf>& grads) const;

    // d(logit[class_index]) / d(pre-SE feature map) for a single-sample batch.
    Tensorf logit_grad_pre_se(const Tensorf& single, int class_index) const;

    std::vector<std::span<float>> param_views();
    std::vector<std::span<const float>> param_views() const;
    std::vector<std::pair<ParamTag, std::vector<int>>> param_descriptors() const;
    std::size_t param_count() const;
};

void save_checkpoint(const SmallCnn& model, const std::filesystem::path& path);
SmallCnn load_checkpoint(const std::filesystem::path& path);

ChannelStats stats_from_metadata(const SmallCnn& model);
void stats_to_metadata(SmallCnn& model, const ChannelStats& stats);

struct SEAggregate {
    std::vector<double> values;  // pooled s values, mean-centered
    Moments moments;             // of the centered values (mean == 0)
};

// Pools per-image SE vectors across up to max_samples images.
// Images are normalized with `stats` before the forward pass.
SEAggregate aggregate_se_values(const SmallCnn& model, const DatasetSplit& split,
                                const ChannelStats& stats, int max_samples);

// Batch assembly helper: images (already normalized) -> NCHW tensor.
Tensorf to_batch(std::span<const LabeledImage> images);

}  // namespace sexplain

#endif
