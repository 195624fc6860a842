#include "sexplain/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

namespace sexplain {

void TrainConfig::validate() const {
    if (lr < 0 || momentum < 0 || weight_decay < 0)
        throw std::invalid_argument("train config: rates must be >= 0");
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
    if (!(subset_fraction > 0.0 && subset_fraction <= 1.0))
        throw std::invalid_argument("train config: subset fraction must be in (0,1]");
}

void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity,
              const TrainConfig& cfg) {
    if (param.size() != grad.size() || param.size() != velocity.size())
        throw ShapeError("sgd_step: param/grad/velocity sizes differ");
    const float lr = static_cast<float>(cfg.lr);
    const float mom = static_cast<float>(cfg.momentum);
    const float wd = static_cast<float>(cfg.weight_decay);
    for (std::size_t i = 0; i < param.size(); ++i) {
        velocity[i] = mom * velocity[i] + grad[i] + wd * param[i];
        param[i] -= lr * velocity[i];
    }
}

double evaluate(const SmallCnn& model, const DatasetSplit& split, const ChannelStats& stats) {
    if (split.images.empty()) throw std::invalid_argument("evaluate: empty split");
    constexpr int kBatch = 100;
    int correct = 0;
    std::vector<LabeledImage> normed;
    for (std::size_t start = 0; start < split.images.size(); start += kBatch) {
        const std::size_t count = std::min<std::size_t>(kBatch, split.images.size() - start);
        normed.clear();
        for (std::size_t i = 0; i < count; ++i)
            normed.push_back(normalize(split.images[start + i], stats));
        const auto cap = model.forward(to_batch(normed));
        for (std::size_t i = 0; i < count; ++i) {
            Eigen::Index best;
            cap.logits.data.segment(static_cast<Eigen::Index>(i) * model.cfg.num_classes,
                                    model.cfg.num_classes)
                .maxCoeff(&best);
            if (static_cast<int>(best) == split.images[start + i].label) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(split.images.size());
}

std::vector<EpochStats> train(SmallCnn& model, const DatasetSplit& train_split,
                              const DatasetSplit& test_split, const TrainConfig& cfg,
                              std::ostream* progress) {
    cfg.validate();
    if (train_split.images.empty()) throw std::invalid_argument("train: empty dataset");

    model.init_params(cfg.seed);
    const ChannelStats stats = compute_channel_stats(train_split);
    stats_to_metadata(model, stats);

    // subset selection: seeded shuffle, first ceil(fraction * N) ids
    std::vector<int> pool(train_split.images.size());
    std::iota(pool.begin(), pool.end(), 0);
    Rng subset_rng(cfg.seed ^ 0x5eed5b5e7ull);
    for (std::size_t i = pool.size() - 1; i > 0; --i)
        std::swap(pool[i], pool[subset_rng.below(i + 1)]);
    const std::size_t subset =
        std::max<std::size_t>(1, static_cast<std::size_t>(
                                     std::ceil(cfg.subset_fraction * pool.size())));
    pool.resize(subset);

    auto views = model.param_views();
    std::vector<std::vector<float>> velocity;
    for (const auto& v : views) velocity.emplace_back(v.size(), 0.0f);

    const Rng aug_root(cfg.seed ^ 0xa06u);
    std::vector<EpochStats> history;
    std::vector<Tensorf> grads;
    std::vector<LabeledImage> batch_images;
    std::vector<int> labels;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng(cfg.seed + 0x10001ull * static_cast<std::uint64_t>(epoch + 1));
        std::vector<int> ids = pool;
        for (std::size_t i = ids.size() - 1; i > 0; --i)
            std::swap(ids[i], ids[order_rng.below(i + 1)]);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < ids.size(); start += cfg.batch_size) {
            const std::size_t count =
                std::min<std::size_t>(cfg.batch_size, ids.size() - start);
            batch_images.clear();
            labels.clear();
            for (std::size_t i = 0; i < count; ++i) {
                const int id = ids[start + i];
                LabeledImage img = train_split.images[id];
                if (cfg.augment_enabled) {
                    Rng img_rng = aug_root.split(
                        static_cast<std::uint64_t>(epoch) * train_split.images.size() + id);
                    img = augment(img, img_rng);
                }
                batch_images.push_back(normalize(img, stats));
                labels.push_back(train_split.images[id].label);
            }
            const auto cache = model.forward_train(to_batch(batch_images));
            const float loss = model.backward(cache, labels, grads);
            for (std::size_t p = 0; p < views.size(); ++p)
                sgd_step(views[p],
                         std::span<const float>(grads[p].data.data(),
                                                static_cast<std::size_t>(grads[p].data.size())),
                         velocity[p], cfg);
            loss_sum += loss;
            ++batches;
        }

        EpochStats s;
        s.train_loss = loss_sum / static_cast<double>(batches);
        s.test_accuracy = evaluate(model, test_split, stats);
        history.push_back(s);
        if (progress)
            (*progress) << "epoch=" << (epoch + 1) << " loss=" << s.train_loss
                        << " test_acc=" << s.test_accuracy << "\n";
    }

    model.metadata["epochs"] = std::to_string(cfg.epochs);
    model.metadata["seed"] = std::to_string(cfg.seed);
    model.metadata["final_acc"] =
        std::to_string(history.empty() ? 0.0 : history.back().test_accuracy);
    return history;
}

}  // namespace sexplain
