#ifndef SEXPLAIN_TRAINER_HPP
#define SEXPLAIN_TRAINER_HPP

#include "sexplain/model.hpp"

#include <iosfwd>
#include <span>

namespace sexplain {

struct TrainConfig {
    double lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int epochs = 20;
    int batch_size = 64;
    std::uint64_t seed = 0;
    double subset_fraction = 1.0;  // (0,1]
    bool augment_enabled = true;

    void validate() const;
};

// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v
void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity,
              const TrainConfig& cfg);

struct EpochStats {
    double train_loss = 0.0;
    double test_accuracy = 0.0;
};

// Deterministic given (seed, cfg, data): init, shuffle order, and
// augmentation are all derived from cfg.seed. Stores normalization stats and
// training metadata on the model. Progress lines go to `progress` when set.
std::vector<EpochStats> train(SmallCnn& model, const DatasetSplit& train_split,
                              const DatasetSplit& test_split, const TrainConfig& cfg,
                              std::ostream* progress = nullptr);

// Top-1 accuracy, fixed iteration order, no augmentation.
double evaluate(const SmallCnn& model, const DatasetSplit& split, const ChannelStats& stats);

}  // namespace sexplain

#endif
