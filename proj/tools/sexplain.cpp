// Command-line surface: train models, emit attention heatmaps, run
// deletion/insertion evaluations, sweep channel ablations, and fit the
// SE-value distribution.
//
// Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 runtime failure.

#include "sexplain/explain.hpp"
#include "sexplain/metrics.hpp"
#include "sexplain/model.hpp"
#include "sexplain/synth.hpp"
#include "sexplain/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace sexplain;
using nlohmann::json;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::filesystem::path resolve_dir(const std::string& dir) {
    return dir.empty() ? default_data_dir() : std::filesystem::path(dir);
}

double ablated_accuracy(const SmallCnn& model, const DatasetSplit& split,
                        const ChannelStats& stats, double fraction, int limit) {
    const int total = limit > 0 ? std::min<int>(limit, static_cast<int>(split.images.size()))
                                : static_cast<int>(split.images.size());
    constexpr int kBatch = 100;
    int correct = 0;
    std::vector<LabeledImage> normed;
    for (int start = 0; start < total; start += kBatch) {
        const int count = std::min(kBatch, total - start);
        normed.clear();
        for (int i = 0; i < count; ++i) normed.push_back(normalize(split.images[start + i], stats));
        const Tensorf logits = model.forward_ablated(to_batch(normed), fraction);
        for (int i = 0; i < count; ++i) {
            Eigen::Index best;
            logits.data.segment(static_cast<Eigen::Index>(i) * model.cfg.num_classes,
                                model.cfg.num_classes)
                .maxCoeff(&best);
            if (static_cast<int>(best) == split.images[start + i].label) ++correct;
        }
    }
    return static_cast<double>(correct) / total;
}

double random_mask_accuracy(const SmallCnn& model, const DatasetSplit& split,
                            const ChannelStats& stats, double fraction, int limit,
                            std::uint64_t seed) {
    const int channels = SmallCnn::kFeatureChannels;
    const int k = std::max(1, static_cast<int>(std::ceil(fraction * channels)));
    Rng rng(seed);
    std::vector<int> ids(channels);
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t i = ids.size() - 1; i > 0; --i)
        std::swap(ids[i], ids[rng.below(i + 1)]);
    ids.resize(k);

    const int total = limit > 0 ? std::min<int>(limit, static_cast<int>(split.images.size()))
                                : static_cast<int>(split.images.size());
    constexpr int kBatch = 100;
    int correct = 0;
    std::vector<LabeledImage> normed;
    for (int start = 0; start < total; start += kBatch) {
        const int count = std::min(kBatch, total - start);
        normed.clear();
        for (int i = 0; i < count; ++i) normed.push_back(normalize(split.images[start + i], stats));
        const Tensorf logits = model.forward_masked(to_batch(normed), ids);
        for (int i = 0; i < count; ++i) {
            Eigen::Index best;
            logits.data.segment(static_cast<Eigen::Index>(i) * model.cfg.num_classes,
                                model.cfg.num_classes)
                .maxCoeff(&best);
            if (static_cast<int>(best) == split.images[start + i].label) ++correct;
        }
    }
    return static_cast<double>(correct) / total;
}

json summary_to_json(const MethodSummary& s) {
    return json{{"method", s.method},
                {"n_images", s.n_images},
                {"steps", s.steps},
                {"deletion_auc_mean", s.deletion_auc_mean},
                {"deletion_auc_std", s.deletion_auc_std},
                {"insertion_auc_mean", s.insertion_auc_mean},
                {"insertion_auc_std", s.insertion_auc_std}};
}

void write_saliency_csv(const std::filesystem::path& path, const SaliencyMap& map) {
    std::ofstream out(path);
    for (int y = 0; y < map.h(); ++y) {
        for (int x = 0; x < map.w(); ++x) out << (x ? "," : "") << map.values(y, x);
        out << "\n";
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Squeeze-and-Excitation attention heatmaps and saliency metrics"};
    app.require_subcommand(1);

    // --- train ---
    auto* train_cmd = app.add_subcommand("train", "Train a SmallCNN classifier");
    std::string data = "cifar10", dir, out;
    bool se_on = true;
    TrainConfig cfg;
    cfg.epochs = 20;
    train_cmd->add_option("--data", data, "Dataset id")
        ->check(CLI::IsMember({"cifar10", "cifar100", "mnist"}));
    train_cmd->add_option("--dir", dir, "Dataset directory (default: SE_EXPLAIN_DATA_DIR)");
    train_cmd->add_flag("--se,!--no-se", se_on, "Include the SE block (default on)");
    train_cmd->add_option("--epochs", cfg.epochs)->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", cfg.lr)->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--momentum", cfg.momentum)->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--weight-decay", cfg.weight_decay)->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--batch", cfg.batch_size)->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", cfg.seed);
    train_cmd->add_option("--subset", cfg.subset_fraction, "Train on a fraction of the split")
        ->check(CLI::Range(1e-6, 1.0));
    train_cmd->add_option("--out", out, "Checkpoint path (default model_<data>_<se|nose>.ckpt)");

    // --- explain ---
    auto* explain_cmd = app.add_subcommand("explain", "Emit an attention heatmap");
    std::string model_path, image_path, method = "se", explain_out = "heatmap.ppm";
    int index = -1;
    double top_frac = 0.10, alpha = 0.5;
    bool dump_saliency = false;
    std::uint64_t explain_seed = 0;
    explain_cmd->add_option("--model", model_path, "Checkpoint")->required();
    explain_cmd->add_option("--image", image_path, "PPM (P6) input image");
    explain_cmd->add_option("--index", index, "Test-split image index (with --data/--dir)");
    explain_cmd->add_option("--data", data)->check(CLI::IsMember({"cifar10", "cifar100", "mnist"}));
    explain_cmd->add_option("--dir", dir);
    explain_cmd->add_option("--method", method)->check(CLI::IsMember({"se", "gradcam", "random"}));
    explain_cmd->add_option("--top-frac", top_frac)->check(CLI::Range(1e-9, 1.0));
    explain_cmd->add_option("--alpha", alpha)->check(CLI::Range(0.0, 1.0));
    explain_cmd->add_option("--seed", explain_seed, "Seed for --method random");
    explain_cmd->add_option("--out", explain_out, "Output image path (PPM written always)");
    explain_cmd->add_flag("--dump-saliency", dump_saliency, "Also write the raw grid as CSV");

    // --- metrics ---
    auto* metrics_cmd = app.add_subcommand("metrics", "Deletion/insertion evaluation");
    int n_images = 200, steps = 100;
    std::uint64_t metrics_seed = 0;
    std::string metrics_out = "metrics.json", per_image_csv;
    metrics_cmd->add_option("--model", model_path)->required();
    metrics_cmd->add_option("--data", data)->check(CLI::IsMember({"cifar10", "cifar100", "mnist"}));
    metrics_cmd->add_option("--dir", dir);
    metrics_cmd->add_option("--method", method)->check(CLI::IsMember({"se", "gradcam", "random"}));
    metrics_cmd->add_option("--n", n_images)->check(CLI::PositiveNumber);
    metrics_cmd->add_option("--steps", steps)->check(CLI::Range(2, 100000));
    metrics_cmd->add_option("--seed", metrics_seed);
    metrics_cmd->add_option("--top-frac", top_frac)->check(CLI::Range(1e-9, 1.0));
    metrics_cmd->add_option("--out", metrics_out, "Summary JSON path");
    metrics_cmd->add_option("--per-image", per_image_csv, "Optional per-image CSV path");

    // --- ablate ---
    auto* ablate_cmd = app.add_subcommand("ablate", "Accuracy vs top-fraction of SE channels");
    std::vector<double> fractions{0.10, 0.25, 0.50, 0.75, 1.0};
    std::string ablate_out = "ablate.csv", control;
    int control_seeds = 5, limit = 0;
    ablate_cmd->add_option("--model", model_path)->required();
    ablate_cmd->add_option("--data", data)->check(CLI::IsMember({"cifar10", "cifar100", "mnist"}));
    ablate_cmd->add_option("--dir", dir);
    ablate_cmd->add_option("--fractions", fractions)->delimiter(',');
    ablate_cmd->add_option("--control", control, "Add a random-channel control column")
        ->check(CLI::IsMember({"random"}));
    ablate_cmd->add_option("--control-seeds", control_seeds)->check(CLI::PositiveNumber);
    ablate_cmd->add_option("--limit", limit, "Cap test images (0 = full split)")
        ->check(CLI::NonNegativeNumber);
    ablate_cmd->add_option("--out", ablate_out, "CSV path");

    // --- distfit ---
    auto* distfit_cmd = app.add_subcommand("distfit", "SE value distribution inspection");
    int max_samples = 2000, bins = 61;
    std::string distfit_out = "distfit";
    distfit_cmd->add_option("--model", model_path)->required();
    distfit_cmd->add_option("--data", data)->check(CLI::IsMember({"cifar10", "cifar100", "mnist"}));
    distfit_cmd->add_option("--dir", dir);
    distfit_cmd->add_option("--max-samples", max_samples)->check(CLI::PositiveNumber);
    distfit_cmd->add_option("--bins", bins)->check(CLI::Range(1, 100000));
    distfit_cmd->add_option("--out", distfit_out, "Output prefix (<out>.csv, <out>.json)");

    // --- synth ---
    auto* synth_cmd = app.add_subcommand(
        "synth", "Generate a synthetic 10-class dataset in CIFAR-10 binary format");
    std::string synth_dir = ".";
    std::uint64_t synth_seed = 0;
    int per_batch = 10000, test_count = 10000;
    synth_cmd->add_option("--dir", synth_dir, "Output directory")->required();
    synth_cmd->add_option("--seed", synth_seed);
    synth_cmd->add_option("--per-batch", per_batch)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--test-count", test_count)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (train_cmd->parsed()) {
        auto [train_split, test_split] = load_dataset(data, resolve_dir(dir));
        SmallCnnConfig mcfg;
        mcfg.num_classes = train_split.num_classes;
        mcfg.in_c = train_split.images[0].c;
        mcfg.in_h = train_split.images[0].h;
        mcfg.in_w = train_split.images[0].w;
        mcfg.se_enabled = se_on;
        SmallCnn model = SmallCnn::build(mcfg);
        const auto history = train(model, train_split, test_split, cfg, &std::cout);
        if (out.empty()) out = "model_" + data + (se_on ? "_se" : "_nose") + ".ckpt";
        save_checkpoint(model, out);
        std::ofstream csv(out + ".history.csv");
        csv << "epoch,train_loss,test_acc\n";
        for (std::size_t i = 0; i < history.size(); ++i)
            csv << (i + 1) << "," << history[i].train_loss << "," << history[i].test_accuracy
                << "\n";
        std::cout << "checkpoint=" << out << "\n";
        return 0;
    }

    if (explain_cmd->parsed()) {
        const SmallCnn model = load_checkpoint(model_path);
        if (method == "se" && !model.cfg.se_enabled)
            throw UsageError("--method se requires a checkpoint trained with an SE block; "
                             "this one was trained with --no-se");
        Predictor predictor{&model, stats_from_metadata(model)};
        LabeledImage image;
        if (!image_path.empty()) {
            image = from_image_u8(read_ppm(image_path), model.cfg.in_c);
            if (image.h != model.cfg.in_h || image.w != model.cfg.in_w)
                throw UsageError("--image dimensions do not match the model input size");
        } else if (index >= 0) {
            auto [train_split, test_split] = load_dataset(data, resolve_dir(dir));
            if (index >= static_cast<int>(test_split.images.size()))
                throw UsageError("--index beyond the test split");
            image = test_split.images[index];
        } else {
            throw UsageError("explain requires --image or --index");
        }
        const SaliencyMap map =
            saliency_for(model, predictor, image, method, top_frac, explain_seed);
        const ImageU8 blended = overlay(to_image_u8(image), map, alpha);
        std::filesystem::path out_path(explain_out);
        std::filesystem::path ppm = out_path;
        ppm.replace_extension(".ppm");
        write_ppm(ppm, blended);
        if (out_path.extension() == ".png") write_png(out_path, blended);
        if (dump_saliency) {
            std::filesystem::path csv = out_path;
            csv.replace_extension(".saliency.csv");
            write_saliency_csv(csv, map);
        }
        std::cout << "heatmap=" << ppm.string() << "\n";
        return 0;
    }

    if (metrics_cmd->parsed()) {
        const SmallCnn model = load_checkpoint(model_path);
        if (method == "se" && !model.cfg.se_enabled)
            throw UsageError("--method se requires a checkpoint trained with an SE block");
        auto [train_split, test_split] = load_dataset(data, resolve_dir(dir));
        if (n_images > static_cast<int>(test_split.images.size())) {
            std::cerr << "warning: --n " << n_images << " clamped to test split size "
                      << test_split.images.size() << "\n";
            n_images = static_cast<int>(test_split.images.size());
        }
        const MethodSummary summary =
            evaluate_method(model, test_split, method, n_images, steps, metrics_seed, top_frac);
        std::ofstream(metrics_out) << summary_to_json(summary).dump(2) << "\n";
        if (!per_image_csv.empty()) {
            std::ofstream csv(per_image_csv);
            csv << "image_id,deletion_auc,insertion_auc\n";
            for (const auto& r : summary.per_image)
                csv << r.image_id << "," << r.deletion_auc << "," << r.insertion_auc << "\n";
        }
        std::cout << summary_to_json(summary).dump(2) << "\n";
        return 0;
    }

    if (ablate_cmd->parsed()) {
        const SmallCnn model = load_checkpoint(model_path);
        if (!model.cfg.se_enabled)
            throw UsageError("ablate requires a checkpoint trained with an SE block");
        const ChannelStats stats = stats_from_metadata(model);
        auto [train_split, test_split] = load_dataset(data, resolve_dir(dir));
        std::ofstream csv(ablate_out);
        csv << "fraction,accuracy" << (control.empty() ? "" : ",control_accuracy") << "\n";
        for (double f : fractions) {
            if (!(f > 0.0 && f <= 1.0)) throw UsageError("--fractions entries must be in (0,1]");
            const double acc = ablated_accuracy(model, test_split, stats, f, limit);
            csv << f << "," << acc;
            std::cout << "fraction=" << f << " accuracy=" << acc;
            if (!control.empty()) {
                double sum = 0.0;
                for (int s = 0; s < control_seeds; ++s)
                    sum += random_mask_accuracy(model, test_split, stats, f, limit,
                                                0xc0117101ull + s);
                csv << "," << (sum / control_seeds);
                std::cout << " control=" << (sum / control_seeds);
            }
            csv << "\n";
            std::cout << "\n";
        }
        return 0;
    }

    if (distfit_cmd->parsed()) {
        const SmallCnn model = load_checkpoint(model_path);
        if (!model.cfg.se_enabled)
            throw UsageError("distfit requires a checkpoint trained with an SE block");
        const ChannelStats stats = stats_from_metadata(model);
        auto [train_split, test_split] = load_dataset(data, resolve_dir(dir));
        const SEAggregate agg = aggregate_se_values(model, test_split, stats, max_samples);

        double lo = agg.values[0], hi = agg.values[0];
        for (double v : agg.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double width = (hi > lo) ? (hi - lo) / bins : 1.0;
        std::vector<std::size_t> counts(bins, 0);
        for (double v : agg.values) {
            int b = (hi > lo) ? static_cast<int>((v - lo) / width) : 0;
            counts[std::min(b, bins - 1)]++;
        }
        std::ofstream csv(distfit_out + ".csv");
        csv << "bin_center,count\n";
        for (int b = 0; b < bins; ++b)
            csv << (lo + (b + 0.5) * width) << "," << counts[b] << "\n";

        const json moments{{"mu", 0.0},
                           {"sigma", agg.moments.sigma},
                           {"skewness", agg.moments.skewness},
                           {"excess_kurtosis", agg.moments.excess_kurtosis}};
        std::ofstream(distfit_out + ".json") << moments.dump(2) << "\n";
        std::cout << moments.dump(2) << "\n";
        return 0;
    }

    if (synth_cmd->parsed()) {
        write_synthetic_cifar10(synth_dir, synth_seed, per_batch, 5, test_count);
        std::cout << "wrote synthetic dataset to " << synth_dir << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
