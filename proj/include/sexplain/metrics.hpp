#ifndef SEXPLAIN_METRICS_HPP
#define SEXPLAIN_METRICS_HPP

#include "sexplain/explain.hpp"
#include "sexplain/model.hpp"

#include <string>
#include <vector>

namespace sexplain {

struct MetricCurve {
    std::vector<double> fractions;  // strictly increasing, 0 to 1
    std::vector<double> probs;      // predicted-class probability at each step
    double auc = 0.0;
    std::string kind;  // "deletion" | "insertion"
};

double trapezoid_auc(const std::vector<double>& fractions, const std::vector<double>& probs);

// Model + normalization stats as a probability oracle over raw [0,1] images.
struct Predictor {
    const SmallCnn* model = nullptr;
    ChannelStats stats;

    VectorX<float> probs(const LabeledImage& image) const;
    int predicted_class(const LabeledImage& image) const;
};

// Removes pixels (all channels set to 0) in descending saliency order,
// row-major tie-break; the target class is the pristine-image argmax.
MetricCurve deletion_curve(const Predictor& predictor, const LabeledImage& image,
                           const SaliencyMap& saliency, int steps = 100);

// Restores pixels from a Gaussian-blurred baseline (sigma 5, radius 10,
// separable, edge-clamped) in descending saliency order.
MetricCurve insertion_curve(const Predictor& predictor, const LabeledImage& image,
                            const SaliencyMap& saliency, int steps = 100);

LabeledImage gaussian_blur(const LabeledImage& image, double sigma = 5.0, int radius = 10);

// Saliency production shared by the CLI and evaluate_method.
SaliencyMap saliency_for(const SmallCnn& model, const Predictor& predictor,
                         const LabeledImage& image, const std::string& method, double top_frac,
                         std::uint64_t seed);

struct PerImageMetrics {
    int image_id = 0;
    double deletion_auc = 0.0;
    double insertion_auc = 0.0;
};

struct MethodSummary {
    std::string method;
    int n_images = 0;
    int steps = 0;
    double deletion_auc_mean = 0.0;
    double deletion_auc_std = 0.0;
    double insertion_auc_mean = 0.0;
    double insertion_auc_std = 0.0;
    std::vector<PerImageMetrics> per_image;
};

MethodSummary evaluate_method(const SmallCnn& model, const DatasetSplit& split,
                              const std::string& method, int n_images, int steps,
                              std::uint64_t seed, double top_frac = 0.10);

}  // namespace sexplain

#endif
