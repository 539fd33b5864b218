#include "echoseg/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "echoseg/losses.hpp"
#include "echoseg/manifest.hpp"
#include "echoseg/preprocessing.hpp"

namespace echoseg {

void ContrastiveConfig::validate() const {
    if (temperature <= 0) throw Error(ErrorCode::InvalidConfig, "temperature must be positive");
    if (projection_dim < 1) throw Error(ErrorCode::InvalidConfig, "projection_dim must be >= 1");
    if (crop_scale_min <= 0 || crop_scale_min > 1)
        throw Error(ErrorCode::InvalidConfig, "crop_scale_min must lie in (0, 1]");
}

SegEncoderImpl::SegEncoderImpl(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    int in_c = spec_.in_channels;
    for (size_t i = 0; i < spec_.encoder_channels.size(); ++i) {
        ConvBlock block(in_c, spec_.encoder_channels[i]);
        register_module("enc" + std::to_string(i + 1), block);
        encoders.push_back(block);
        in_c = spec_.encoder_channels[i];
    }
}

torch::Tensor SegEncoderImpl::forward(torch::Tensor x) {
    for (size_t i = 0; i < encoders.size(); ++i) {
        x = encoders[i]->forward(x);
        if (i + 1 < encoders.size()) x = torch::max_pool2d(x, 2);
    }
    return x;
}

ProjectionHeadImpl::ProjectionHeadImpl(int in_dim, int out_dim) {
    hidden = register_module("hidden", torch::nn::Linear(in_dim, in_dim));
    out = register_module("out", torch::nn::Linear(in_dim, out_dim));
}

torch::Tensor ProjectionHeadImpl::forward(torch::Tensor features) {
    return out(torch::relu(hidden(features)));
}

std::vector<float> contrastive_view(const FrameImage& frame, const ContrastiveConfig& config,
                                    std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int h = frame.height, w = frame.width;

    // random square-fraction crop, resized back to the input shape
    const double area = config.crop_scale_min + (1.0 - config.crop_scale_min) * u01(rng);
    const double side = std::sqrt(area);
    const int ch = std::max(1, static_cast<int>(std::lround(h * side)));
    const int cw = std::max(1, static_cast<int>(std::lround(w * side)));
    const int oy = static_cast<int>(u01(rng) * (h - ch + 1));
    const int ox = static_cast<int>(u01(rng) * (w - cw + 1));

    std::vector<float> crop(static_cast<size_t>(ch) * cw);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) crop[static_cast<size_t>(y) * cw + x] = frame.at(oy + y, ox + x);
    std::vector<float> view = resize_bilinear(crop, ch, cw, h, w);

    if (u01(rng) < 0.5) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w / 2; ++x)
                std::swap(view[static_cast<size_t>(y) * w + x],
                          view[static_cast<size_t>(y) * w + (w - 1 - x)]);
    }

    const double scale = 1.0 + config.jitter_scale * (2.0 * u01(rng) - 1.0);
    const double shift = config.jitter_shift * (2.0 * u01(rng) - 1.0);
    for (auto& v : view) v = static_cast<float>(v * scale + shift);
    return view;
}

namespace {

torch::Tensor views_to_batch(const std::vector<std::vector<float>>& views, int h, int w) {
    auto batch = torch::empty({static_cast<int64_t>(views.size()), 1, h, w});
    for (size_t i = 0; i < views.size(); ++i) {
        std::memcpy(batch[i].data_ptr<float>(), views[i].data(), views[i].size() * sizeof(float));
    }
    return batch;
}

// Two views per frame, ordered so rows i and i+n form the positive pair.
torch::Tensor paired_views(const std::vector<const FrameImage*>& frames,
                           const ContrastiveConfig& config, uint64_t seed) {
    const int h = frames.front()->height, w = frames.front()->width;
    std::vector<std::vector<float>> first, second;
    for (size_t i = 0; i < frames.size(); ++i) {
        std::mt19937_64 rng_a(fnv1a64("view_a:" + std::to_string(i), seed));
        std::mt19937_64 rng_b(fnv1a64("view_b:" + std::to_string(i), seed));
        first.push_back(contrastive_view(*frames[i], config, rng_a));
        second.push_back(contrastive_view(*frames[i], config, rng_b));
    }
    first.insert(first.end(), second.begin(), second.end());
    return views_to_batch(first, h, w);
}

} // namespace

EncoderState pretrain_encoder(const std::vector<FrameImage>& frames, const ModelSpec& spec,
                              const PretrainOptions& options, PretrainTrace* trace) {
    if (frames.empty()) throw Error(ErrorCode::EmptyStream, "no unlabeled frames to pretrain on");
    options.contrastive.validate();
    if (options.batch_size < 2)
        throw Error(ErrorCode::DegenerateBatch, "contrastive batches need at least 2 frames");

    const int h = frames.front().height, w = frames.front().width;
    for (const auto& frame : frames) {
        if (frame.height != h || frame.width != w)
            throw Error(ErrorCode::ShapeMismatch, "all pretraining frames must share one shape");
    }

    torch::manual_seed(options.seed);
    SegEncoder encoder(spec);
    ProjectionHead head(spec.encoder_channels.back(), options.contrastive.projection_dim);

    std::vector<torch::Tensor> params;
    for (auto& p : encoder->parameters()) params.push_back(p);
    for (auto& p : head->parameters()) params.push_back(p);
    torch::optim::Adam optimizer(params, torch::optim::AdamOptions(options.lr));

    const auto project = [&](const torch::Tensor& batch) {
        auto features = encoder->forward(batch);
        features = torch::adaptive_avg_pool2d(features, {1, 1}).flatten(1);
        return head->forward(features);
    };

    const size_t probe_n = std::min<size_t>(std::max(options.probe_size, 2), frames.size());
    std::vector<const FrameImage*> probe_frames;
    for (size_t i = 0; i < probe_n; ++i) probe_frames.push_back(&frames[i]);
    const auto probe_batch = paired_views(probe_frames, options.contrastive,
                                          fnv1a64("probe", options.seed));

    const auto probe_loss = [&]() {
        torch::NoGradGuard no_grad;
        return ntxent_loss(project(probe_batch), options.contrastive.temperature).item<double>();
    };

    PretrainTrace local_trace;
    local_trace.initial_probe_loss = probe_loss();

    std::vector<size_t> indices(frames.size());
    std::iota(indices.begin(), indices.end(), 0);

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::mt19937_64 order_rng(fnv1a64("order:" + std::to_string(epoch), options.seed));
        std::shuffle(indices.begin(), indices.end(), order_rng);

        double epoch_loss = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start + 2 <= indices.size();
             start += static_cast<size_t>(options.batch_size)) {
            const size_t end = std::min(indices.size(), start + options.batch_size);
            if (end - start < 2) break;
            std::vector<const FrameImage*> batch_frames;
            for (size_t i = start; i < end; ++i) batch_frames.push_back(&frames[indices[i]]);

            const uint64_t batch_seed =
                fnv1a64("batch:" + std::to_string(epoch) + ":" + std::to_string(start), options.seed);
            const auto batch = paired_views(batch_frames, options.contrastive, batch_seed);

            optimizer.zero_grad();
            auto loss = ntxent_loss(project(batch), options.contrastive.temperature);
            loss.backward();
            optimizer.step();
            epoch_loss += loss.item<double>();
            ++batches;
        }
        local_trace.epoch_losses.push_back(batches ? epoch_loss / batches : 0.0);
    }

    local_trace.final_probe_loss = probe_loss();
    if (trace) *trace = local_trace;
    return export_encoder(*encoder, EncoderProvenance::SslPretrained);
}

} // namespace echoseg
