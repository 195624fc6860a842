#include "sexplain/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sexplain {

double trapezoid_auc(const std::vector<double>& fractions, const std::vector<double>& probs) {
    if (fractions.size() != probs.size() || fractions.size() < 2)
        throw std::invalid_argument("auc: need matching fraction/prob sequences of length >= 2");
    for (std::size_t i = 1; i < fractions.size(); ++i)
        if (fractions[i] <= fractions[i - 1])
            throw std::invalid_argument("auc: fractions must be strictly increasing");
    double area = 0.0;
    for (std::size_t i = 1; i < fractions.size(); ++i)
        area += 0.5 * (probs[i] + probs[i - 1]) * (fractions[i] - fractions[i - 1]);
    return area;
}

VectorX<float> Predictor::probs(const LabeledImage& image) const {
    const LabeledImage normed = normalize(image, stats);
    const auto cap = model->forward(to_batch(std::span<const LabeledImage>(&normed, 1)));
    VectorX<float> logits = cap.logits.data;
    return softmax(logits);
}

int Predictor::predicted_class(const LabeledImage& image) const {
    Eigen::Index best;
    probs(image).maxCoeff(&best);
    return static_cast<int>(best);
}

namespace {

// descending saliency, row-major index tie-break
std::vector<int> saliency_order(const SaliencyMap& saliency) {
    const int h = saliency.h(), w = saliency.w();
    std::vector<int> order(static_cast<std::size_t>(h) * w);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return saliency.values(a / w, a % w) > saliency.values(b / w, b % w);
    });
    return order;
}

// masked-pixel counts per curve point: 0, per, 2*per, ..., total
std::vector<int> step_counts(int total, int steps) {
    if (steps < 2) throw std::invalid_argument("metric curve: steps must be >= 2");
    const int per = (total + steps - 1) / steps;
    std::vector<int> counts{0};
    for (int c = per; c < total; c += per) counts.push_back(c);
    counts.push_back(total);
    return counts;
}

void set_pixel(LabeledImage& img, int pixel, const LabeledImage& source) {
    const int y = pixel / img.w, x = pixel % img.w;
    for (int c = 0; c < img.c; ++c) img.at(c, y, x) = source.at(c, y, x);
}

void zero_pixel(LabeledImage& img, int pixel) {
    const int y = pixel / img.w, x = pixel % img.w;
    for (int c = 0; c < img.c; ++c) img.at(c, y, x) = 0.0f;
}

MetricCurve run_curve(const Predictor& predictor, const LabeledImage& image,
                      const SaliencyMap& saliency, int steps, bool deletion) {
    if (saliency.h() != image.h || saliency.w() != image.w)
        throw ShapeError("metric curve: saliency and image dimensions differ");
    const int total = image.h * image.w;
    const std::vector<int> order = saliency_order(saliency);
    const std::vector<int> counts = step_counts(total, steps);
    const int target = predictor.predicted_class(image);

    MetricCurve curve;
    curve.kind = deletion ? "deletion" : "insertion";
    LabeledImage work = deletion ? image : gaussian_blur(image);
    int applied = 0;
    for (int count : counts) {
        for (; applied < count; ++applied) {
            if (deletion)
                zero_pixel(work, order[applied]);
            else
                set_pixel(work, order[applied], image);
        }
        curve.fractions.push_back(static_cast<double>(count) / total);
        curve.probs.push_back(static_cast<double>(predictor.probs(work)[target]));
    }
    curve.auc = trapezoid_auc(curve.fractions, curve.probs);
    return curve;
}

}  // namespace

MetricCurve deletion_curve(const Predictor& predictor, const LabeledImage& image,
                           const SaliencyMap& saliency, int steps) {
    return run_curve(predictor, image, saliency, steps, true);
}

MetricCurve insertion_curve(const Predictor& predictor, const LabeledImage& image,
                            const SaliencyMap& saliency, int steps) {
    return run_curve(predictor, image, saliency, steps, false);
}

LabeledImage gaussian_blur(const LabeledImage& image, double sigma, int radius) {
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    auto clampi = [](int v, int n) { return std::min(std::max(v, 0), n - 1); };
    LabeledImage tmp = image, out = image;
    for (int c = 0; c < image.c; ++c)
        for (int y = 0; y < image.h; ++y)
            for (int x = 0; x < image.w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * image.at(c, y, clampi(x + i, image.w));
                tmp.at(c, y, x) = static_cast<float>(acc);
            }
    for (int c = 0; c < image.c; ++c)
        for (int y = 0; y < image.h; ++y)
            for (int x = 0; x < image.w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * tmp.at(c, clampi(y + i, image.h), x);
                out.at(c, y, x) = static_cast<float>(acc);
            }
    return out;
}

SaliencyMap saliency_for(const SmallCnn& model, const Predictor& predictor,
                         const LabeledImage& image, const std::string& method, double top_frac,
                         std::uint64_t seed) {
    if (method == "random") return random_saliency(image.h, image.w, seed);
    const LabeledImage normed = normalize(image, predictor.stats);
    const Tensorf batch = to_batch(std::span<const LabeledImage>(&normed, 1));
    if (method == "gradcam") return gradcam(model, batch);
    if (method == "se") {
        if (!model.cfg.se_enabled)
            throw std::logic_error("se saliency requested on a model without an SE block");
        const auto cap = model.forward(batch);
        const ChannelSelection sel = select_top_channels(cap.se[0].s, top_frac);
        return se_heatmap(cap.pre_se, 0, cap.se[0].s, sel, image.h, image.w);
    }
    throw std::invalid_argument("unknown saliency method: " + method);
}

MethodSummary evaluate_method(const SmallCnn& model, const DatasetSplit& split,
                              const std::string& method, int n_images, int steps,
                              std::uint64_t seed, double top_frac) {
    if (split.images.empty()) throw std::invalid_argument("evaluate_method: empty dataset");
    if (n_images < 1) throw std::invalid_argument("evaluate_method: n_images must be >= 1");
    n_images = std::min<int>(n_images, static_cast<int>(split.images.size()));

    // deterministic sample, processed in sorted image-id order
    std::vector<int> ids(split.images.size());
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(seed);
    for (std::size_t i = ids.size() - 1; i > 0; --i)
        std::swap(ids[i], ids[rng.below(i + 1)]);
    ids.resize(n_images);
    std::sort(ids.begin(), ids.end());

    Predictor predictor{&model, stats_from_metadata(model)};
    MethodSummary summary;
    summary.method = method;
    summary.n_images = n_images;
    summary.steps = steps;
    for (int id : ids) {
        const LabeledImage& image = split.images[id];
        const SaliencyMap map =
            saliency_for(model, predictor, image, method, top_frac,
                         seed ^ (static_cast<std::uint64_t>(id) * 0x9E3779B97F4A7C15ull));
        PerImageMetrics rec;
        rec.image_id = id;
        rec.deletion_auc = deletion_curve(predictor, image, map, steps).auc;
        rec.insertion_auc = insertion_curve(predictor, image, map, steps).auc;
        summary.per_image.push_back(rec);
    }
    auto accumulate = [&](auto getter, double& mean, double& stddev) {
        double m = 0.0;
        for (const auto& r : summary.per_image) m += getter(r);
        m /= summary.per_image.size();
        double var = 0.0;
        for (const auto& r : summary.per_image) {
            const double d = getter(r) - m;
            var += d * d;
        }
        mean = m;
        stddev = std::sqrt(var / summary.per_image.size());
    };
    accumulate([](const PerImageMetrics& r) { return r.deletion_auc; },
               summary.deletion_auc_mean, summary.deletion_auc_std);
    accumulate([](const PerImageMetrics& r) { return r.insertion_auc; },
               summary.insertion_auc_mean, summary.insertion_auc_std);
    return summary;
}

}  // namespace sexplain
