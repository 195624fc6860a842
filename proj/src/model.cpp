#include "sexplain/model.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sexplain {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kMagic[4] = {'S', 'E', 'X', 'P'};
const int kConvChannels[5] = {32, 32, 64, 64, 128};
}  // namespace

SmallCnn SmallCnn::build(const SmallCnnConfig& cfg) {
    if (cfg.in_h % 4 != 0 || cfg.in_w % 4 != 0)
        throw ShapeError("SmallCnn: input H and W must be divisible by 4, got " +
                         std::to_string(cfg.in_h) + "x" + std::to_string(cfg.in_w));
    if (cfg.num_classes < 2) throw ShapeError("SmallCnn: need at least 2 classes");
    SmallCnn m;
    m.cfg = cfg;
    int cin = cfg.in_c;
    for (int i = 0; i < 5; ++i) {
        ConvLayer layer;
        layer.w = Tensorf({kConvChannels[i], cin, 3, 3});
        layer.b = VectorX<float>::Zero(kConvChannels[i]);
        m.convs.push_back(std::move(layer));
        cin = kConvChannels[i];
    }
    m.fc_w = Tensorf({cfg.num_classes, kFeatureChannels});
    m.fc_b = VectorX<float>::Zero(cfg.num_classes);
    if (cfg.se_enabled) m.se = SEBlockParams<float>::make(kFeatureChannels, cfg.reduction);
    return m;
}

void SmallCnn::init_params(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& layer : convs) {
        const int fan_in = layer.w.shape[1] * 9;
        const double std = std::sqrt(2.0 / fan_in);
        for (Eigen::Index i = 0; i < layer.w.data.size(); ++i)
            layer.w.data[i] = static_cast<float>(rng.normal(0.0, std));
        layer.b.setZero();
    }
    const double std_fc = std::sqrt(2.0 / kFeatureChannels);
    for (Eigen::Index i = 0; i < fc_w.data.size(); ++i)
        fc_w.data[i] = static_cast<float>(rng.normal(0.0, std_fc));
    fc_b.setZero();
    if (cfg.se_enabled) se.init(rng);
}

SmallCnn::Cache SmallCnn::forward_train(const Tensorf& batch) const {
    require_shape(batch, {batch.n(), cfg.in_c, cfg.in_h, cfg.in_w}, "SmallCnn forward input");
    Cache c;
    c.x0 = batch;
    c.a1 = conv2d_forward(c.x0, convs[0].w, convs[0].b, 1, 1);
    c.r1 = relu_forward(c.a1);
    c.a2 = conv2d_forward(c.r1, convs[1].w, convs[1].b, 1, 1);
    c.r2 = relu_forward(c.a2);
    c.p1 = maxpool2_forward(c.r2);
    c.a3 = conv2d_forward(c.p1, convs[2].w, convs[2].b, 1, 1);
    c.r3 = relu_forward(c.a3);
    c.a4 = conv2d_forward(c.r3, convs[3].w, convs[3].b, 1, 1);
    c.r4 = relu_forward(c.a4);
    c.p2 = maxpool2_forward(c.r4);
    c.a5 = conv2d_forward(c.p2, convs[4].w, convs[4].b, 1, 1);
    c.r5 = relu_forward(c.a5);
    if (cfg.se_enabled) {
        auto r = se_forward(c.r5, se);
        c.x6 = std::move(r.x);
        c.se = std::move(r.se);
    } else {
        c.x6 = c.r5;
    }
    c.g = gap_forward(c.x6);
    c.logits = fc_forward(c.g, fc_w, fc_b);
    return c;
}

SmallCnn::Capture SmallCnn::forward(const Tensorf& batch) const {
    Cache c = forward_train(batch);
    Capture cap;
    cap.logits = std::move(c.logits);
    cap.pre_se = std::move(c.r5);
    cap.se = std::move(c.se);
    return cap;
}

Tensorf SmallCnn::forward_masked(const Tensorf& batch, std::span<const int> keep_channels) const {
    if (!cfg.se_enabled) throw std::logic_error("forward_masked: model has no SE block");
    Cache c = forward_train(batch);
    std::vector<bool> keep(kFeatureChannels, false);
    for (int ch : keep_channels) keep[ch] = true;
    for (int n = 0; n < c.x6.n(); ++n)
        for (int ch = 0; ch < kFeatureChannels; ++ch)
            if (!keep[ch]) c.x6.plane(n, ch).setZero();
    Tensorf g = gap_forward(c.x6);
    return fc_forward(g, fc_w, fc_b);
}

Tensorf SmallCnn::forward_ablated(const Tensorf& batch, double fraction) const {
    if (!cfg.se_enabled) throw std::logic_error("forward_ablated: model has no SE block");
    require_shape(batch, {batch.n(), cfg.in_c, cfg.in_h, cfg.in_w}, "forward_ablated input");
    Cache c = forward_train(batch);
    for (int n = 0; n < c.x6.n(); ++n) {
        const ChannelSelection sel = select_top_channels(c.se[n].s, fraction);
        std::vector<bool> keep(kFeatureChannels, false);
        for (int ch : sel.indices) keep[ch] = true;
        for (int ch = 0; ch < kFeatureChannels; ++ch)
            if (!keep[ch]) c.x6.plane(n, ch).setZero();
    }
    Tensorf g = gap_forward(c.x6);
    return fc_forward(g, fc_w, fc_b);
}

float SmallCnn::backward(const Cache& c, std::span<const int> labels,
                         std::vector<Tensorf>& grads) const {
    auto [loss, dlogits] = softmax_cross_entropy(c.logits, labels);

    LayerGrad<float> gfc = fc_backward(c.g, fc_w, dlogits);
    Tensorf dx6 = gap_backward(c.x6, gfc.input_grad);

    Tensorf dr5;
    Tensorf dse_w1, dse_w2;
    if (cfg.se_enabled) {
        LayerGrad<float> gse = se_backward(c.r5, se, dx6);
        dr5 = std::move(gse.input_grad);
        dse_w1 = std::move(gse.param_grads[0]);
        dse_w2 = std::move(gse.param_grads[1]);
    } else {
        dr5 = std::move(dx6);
    }

    Tensorf da5 = relu_backward(c.a5, dr5);
    LayerGrad<float> g5 = conv2d_backward(c.p2, convs[4].w, da5, 1, 1);
    Tensorf dr4 = maxpool2_backward(c.r4, g5.input_grad);
    Tensorf da4 = relu_backward(c.a4, dr4);
    LayerGrad<float> g4 = conv2d_backward(c.r3, convs[3].w, da4, 1, 1);
    Tensorf da3 = relu_backward(c.a3, g4.input_grad);
    LayerGrad<float> g3 = conv2d_backward(c.p1, convs[2].w, da3, 1, 1);
    Tensorf dr2 = maxpool2_backward(c.r2, g3.input_grad);
    Tensorf da2 = relu_backward(c.a2, dr2);
    LayerGrad<float> g2 = conv2d_backward(c.r1, convs[1].w, da2, 1, 1);
    Tensorf da1 = relu_backward(c.a1, g2.input_grad);
    LayerGrad<float> g1 = conv2d_backward(c.x0, convs[0].w, da1, 1, 1);

    grads.clear();
    LayerGrad<float>* conv_grads[5] = {&g1, &g2, &g3, &g4, &g5};
    for (auto* g : conv_grads) {
        grads.push_back(std::move(g->param_grads[0]));
        grads.push_back(std::move(g->param_grads[1]));
    }
    grads.push_back(std::move(gfc.param_grads[0]));
    grads.push_back(std::move(gfc.param_grads[1]));
    if (cfg.se_enabled) {
        grads.push_back(std::move(dse_w1));
        grads.push_back(std::move(dse_w2));
    }
    return loss;
}

Tensorf SmallCnn::logit_grad_pre_se(const Tensorf& single, int class_index) const {
    if (single.n() != 1) throw ShapeError("logit_grad_pre_se: expects a single-sample batch");
    if (class_index < 0 || class_index >= cfg.num_classes)
        throw std::invalid_argument("logit_grad_pre_se: class index out of range");
    Cache c = forward_train(single);
    Tensorf dlogits({1, cfg.num_classes});
    dlogits.data[class_index] = 1.0f;
    LayerGrad<float> gfc = fc_backward(c.g, fc_w, dlogits);
    Tensorf dx6 = gap_backward(c.x6, gfc.input_grad);
    if (!cfg.se_enabled) return dx6;
    return se_backward(c.r5, se, dx6).input_grad;
}

std::vector<std::span<float>> SmallCnn::param_views() {
    std::vector<std::span<float>> v;
    for (auto& layer : convs) {
        v.emplace_back(layer.w.data.data(), static_cast<std::size_t>(layer.w.data.size()));
        v.emplace_back(layer.b.data(), static_cast<std::size_t>(layer.b.size()));
    }
    v.emplace_back(fc_w.data.data(), static_cast<std::size_t>(fc_w.data.size()));
    v.emplace_back(fc_b.data(), static_cast<std::size_t>(fc_b.size()));
    if (cfg.se_enabled) {
        v.emplace_back(se.w1.data(), static_cast<std::size_t>(se.w1.size()));
        v.emplace_back(se.w2.data(), static_cast<std::size_t>(se.w2.size()));
    }
    return v;
}

std::vector<std::span<const float>> SmallCnn::param_views() const {
    auto mutable_views = const_cast<SmallCnn*>(this)->param_views();
    std::vector<std::span<const float>> v(mutable_views.begin(), mutable_views.end());
    return v;
}

std::vector<std::pair<ParamTag, std::vector<int>>> SmallCnn::param_descriptors() const {
    std::vector<std::pair<ParamTag, std::vector<int>>> d;
    for (const auto& layer : convs) {
        d.emplace_back(ParamTag::conv_w, layer.w.shape);
        d.emplace_back(ParamTag::conv_b, std::vector<int>{static_cast<int>(layer.b.size())});
    }
    d.emplace_back(ParamTag::fc_w, fc_w.shape);
    d.emplace_back(ParamTag::fc_b, std::vector<int>{static_cast<int>(fc_b.size())});
    if (cfg.se_enabled) {
        d.emplace_back(ParamTag::se_w1, std::vector<int>{se.bottleneck(), se.channels()});
        d.emplace_back(ParamTag::se_w2, std::vector<int>{se.channels(), se.bottleneck()});
    }
    return d;
}

std::size_t SmallCnn::param_count() const {
    std::size_t n = 0;
    for (const auto& v : param_views()) n += v.size();
    return n;
}

// ---------------------------------------------------------------------------
// Checkpoint format (little-endian):
//   bytes 0-3   magic "SEXP"
//   bytes 4-7   version u32
//   bytes 8-11  layer count u32
//   per layer:  kind u8, rank u8, rank * extent u32, raw f32 data
//   trailer:    length u32, then length bytes of UTF-8 "key=value\n" lines
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.append(b, 4);
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t n, const std::string& what) const {
        if (pos + n > bytes.size())
            throw CheckpointError(CheckpointError::Kind::truncated,
                                  "checkpoint truncated while reading " + what + " at byte " +
                                      std::to_string(pos));
    }
    std::uint8_t u8(const std::string& what) {
        need(1, what);
        return bytes[pos++];
    }
    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t v = static_cast<std::uint32_t>(bytes[pos]) |
                          (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                          (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                          (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
        pos += 4;
        return v;
    }
};

struct RawBlob {
    ParamTag tag;
    std::vector<int> shape;
    std::vector<float> data;
};

}  // namespace

void save_checkpoint(const SmallCnn& model, const std::filesystem::path& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    const auto descriptors = model.param_descriptors();
    const auto views = model.param_views();
    put_u32(out, static_cast<std::uint32_t>(descriptors.size()));
    for (std::size_t i = 0; i < descriptors.size(); ++i) {
        out.push_back(static_cast<char>(descriptors[i].first));
        out.push_back(static_cast<char>(descriptors[i].second.size()));
        for (int e : descriptors[i].second) put_u32(out, static_cast<std::uint32_t>(e));
        out.append(reinterpret_cast<const char*>(views[i].data()), views[i].size() * 4);
    }
    std::string meta;
    meta += "num_classes=" + std::to_string(model.cfg.num_classes) + "\n";
    meta += "input=" + std::to_string(model.cfg.in_c) + "x" + std::to_string(model.cfg.in_h) + "x" +
            std::to_string(model.cfg.in_w) + "\n";
    meta += "se_enabled=" + std::to_string(model.cfg.se_enabled ? 1 : 0) + "\n";
    meta += "reduction=" + std::to_string(model.cfg.reduction) + "\n";
    for (const auto& [k, v] : model.metadata) meta += k + "=" + v + "\n";
    put_u32(out, static_cast<std::uint32_t>(meta.size()));
    out += meta;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

SmallCnn load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError(CheckpointError::Kind::truncated, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    Reader r{bytes};

    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw CheckpointError(CheckpointError::Kind::bad_magic,
                              path.string() + ": bad checkpoint magic");
    r.pos = 4;
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointError::Kind::bad_version,
                              path.string() + ": unsupported checkpoint version " +
                                  std::to_string(version));
    const std::uint32_t layer_count = r.u32("layer count");
    if (layer_count > 64)
        throw CheckpointError(CheckpointError::Kind::malformed,
                              "implausible layer count " + std::to_string(layer_count));

    std::vector<RawBlob> blobs;
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        const std::string where = "layer " + std::to_string(i);
        RawBlob blob;
        const std::uint8_t tag = r.u8(where + " kind");
        if (tag < 1 || tag > 6)
            throw CheckpointError(CheckpointError::Kind::malformed,
                                  where + ": unknown kind tag " + std::to_string(tag));
        blob.tag = static_cast<ParamTag>(tag);
        const std::uint8_t rank = r.u8(where + " rank");
        if (rank < 1 || rank > 4)
            throw CheckpointError(CheckpointError::Kind::malformed,
                                  where + ": rank out of range");
        std::uint64_t count = 1;
        for (int a = 0; a < rank; ++a) {
            const std::uint32_t e = r.u32(where + " extent");
            if (e < 1 || e > (1u << 20))
                throw CheckpointError(CheckpointError::Kind::malformed,
                                      where + ": implausible extent " + std::to_string(e));
            blob.shape.push_back(static_cast<int>(e));
            count *= e;
            if (count > (1ull << 28))
                throw CheckpointError(CheckpointError::Kind::malformed,
                                      where + ": parameter blob too large");
        }
        r.need(count * 4, where + " data");
        blob.data.resize(count);
        std::memcpy(blob.data.data(), bytes.data() + r.pos, count * 4);
        r.pos += count * 4;
        blobs.push_back(std::move(blob));
    }

    const std::uint32_t meta_len = r.u32("metadata length");
    r.need(meta_len, "metadata");
    std::string meta(reinterpret_cast<const char*>(bytes.data() + r.pos), meta_len);

    std::map<std::string, std::string> kv;
    std::istringstream ms(meta);
    for (std::string line; std::getline(ms, line);) {
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw CheckpointError(CheckpointError::Kind::malformed,
                                  "metadata line without '=': " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }

    SmallCnnConfig cfg;
    try {
        cfg.num_classes = std::stoi(kv.at("num_classes"));
        cfg.se_enabled = std::stoi(kv.at("se_enabled")) != 0;
        cfg.reduction = std::stoi(kv.at("reduction"));
        const std::string input = kv.at("input");
        if (std::sscanf(input.c_str(), "%dx%dx%d", &cfg.in_c, &cfg.in_h, &cfg.in_w) != 3)
            throw std::invalid_argument("bad input descriptor");
    } catch (const std::exception& e) {
        throw CheckpointError(CheckpointError::Kind::malformed,
                              std::string("checkpoint metadata invalid: ") + e.what());
    }

    SmallCnn model;
    try {
        model = SmallCnn::build(cfg);
    } catch (const std::exception& e) {
        throw CheckpointError(CheckpointError::Kind::malformed,
                              std::string("checkpoint architecture invalid: ") + e.what());
    }
    const auto descriptors = model.param_descriptors();
    if (blobs.size() != descriptors.size())
        throw CheckpointError(CheckpointError::Kind::malformed,
                              "checkpoint has " + std::to_string(blobs.size()) +
                                  " parameter blobs, architecture needs " +
                                  std::to_string(descriptors.size()));
    auto views = model.param_views();
    for (std::size_t i = 0; i < blobs.size(); ++i) {
        if (blobs[i].tag != descriptors[i].first || blobs[i].shape != descriptors[i].second)
            throw CheckpointError(CheckpointError::Kind::malformed,
                                  "layer " + std::to_string(i) + ": descriptor mismatch");
        std::memcpy(views[i].data(), blobs[i].data.data(), blobs[i].data.size() * 4);
    }
    for (const auto& [k, v] : kv)
        if (k != "num_classes" && k != "input" && k != "se_enabled" && k != "reduction")
            model.metadata[k] = v;
    return model;
}

ChannelStats stats_from_metadata(const SmallCnn& model) {
    ChannelStats stats;
    for (int c = 0;; ++c) {
        const auto mi = model.metadata.find("mean_" + std::to_string(c));
        const auto si = model.metadata.find("std_" + std::to_string(c));
        if (mi == model.metadata.end() || si == model.metadata.end()) break;
        stats.mean.push_back(std::stof(mi->second));
        stats.stddev.push_back(std::stof(si->second));
    }
    if (static_cast<int>(stats.mean.size()) != model.cfg.in_c)
        throw CheckpointError(CheckpointError::Kind::malformed,
                              "checkpoint lacks per-channel normalization stats");
    return stats;
}

void stats_to_metadata(SmallCnn& model, const ChannelStats& stats) {
    std::ostringstream os;
    for (std::size_t c = 0; c < stats.mean.size(); ++c) {
        os.str("");
        os << stats.mean[c];
        model.metadata["mean_" + std::to_string(c)] = os.str();
        os.str("");
        os << stats.stddev[c];
        model.metadata["std_" + std::to_string(c)] = os.str();
    }
}

Tensorf to_batch(std::span<const LabeledImage> images) {
    if (images.empty()) throw std::invalid_argument("to_batch: empty image span");
    const int c = images[0].c, h = images[0].h, w = images[0].w;
    Tensorf batch({static_cast<int>(images.size()), c, h, w});
    const std::size_t per = static_cast<std::size_t>(c) * h * w;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].c != c || images[i].h != h || images[i].w != w)
            throw ShapeError("to_batch: inconsistent image shapes in batch");
        std::memcpy(batch.data.data() + i * per, images[i].pixels.data(), per * sizeof(float));
    }
    return batch;
}

SEAggregate aggregate_se_values(const SmallCnn& model, const DatasetSplit& split,
                                const ChannelStats& stats, int max_samples) {
    if (!model.cfg.se_enabled)
        throw std::logic_error("aggregate_se_values: model has no SE block");
    if (split.images.empty()) throw std::invalid_argument("aggregate_se_values: empty dataset");
    const int n = std::min<int>(max_samples, static_cast<int>(split.images.size()));

    SEAggregate agg;
    constexpr int kBatch = 64;
    for (int start = 0; start < n; start += kBatch) {
        const int count = std::min(kBatch, n - start);
        std::vector<LabeledImage> normed;
        normed.reserve(count);
        for (int i = 0; i < count; ++i) normed.push_back(normalize(split.images[start + i], stats));
        const auto cap = model.forward(to_batch(normed));
        for (const auto& vec : cap.se)
            for (Eigen::Index c = 0; c < vec.s.size(); ++c)
                agg.values.push_back(static_cast<double>(vec.s[c]));
    }
    double mean = 0;
    for (double v : agg.values) mean += v;
    mean /= static_cast<double>(agg.values.size());
    for (double& v : agg.values) v -= mean;
    agg.moments = compute_moments(agg.values);
    return agg;
}

}  // namespace sexplain
