#pragma once

#include <torch/torch.h>

#include <random>
#include <vector>

#include "echoseg/models.hpp"
#include "echoseg/types.hpp"

namespace echoseg {

struct ContrastiveConfig {
    double temperature = 0.5;
    int projection_dim = 128;
    // augmentation family: random crop, horizontal flip, intensity jitter
    double crop_scale_min = 0.6;
    double jitter_scale = 0.2;
    double jitter_shift = 0.2;

    void validate() const;
};

struct PretrainOptions {
    int epochs = 5;
    int batch_size = 8;
    double lr = 1e-3;
    uint64_t seed = 0;
    int probe_size = 8;
    ContrastiveConfig contrastive;
};

struct PretrainTrace {
    double initial_probe_loss = 0.0;
    double final_probe_loss = 0.0;
    std::vector<double> epoch_losses;
};

// Encoder-only stack sharing the enc1..encN parameter names of the full
// models, so a pretrained state transfers directly.
struct SegEncoderImpl : torch::nn::Module {
    explicit SegEncoderImpl(ModelSpec spec);
    torch::Tensor forward(torch::Tensor batch); // bottleneck feature map

    ModelSpec spec_;
    std::vector<ConvBlock> encoders;
};
TORCH_MODULE(SegEncoder);

struct ProjectionHeadImpl : torch::nn::Module {
    ProjectionHeadImpl(int in_dim, int out_dim);
    torch::Tensor forward(torch::Tensor features); // (B, in_dim) -> (B, out_dim)

    torch::nn::Linear hidden{nullptr}, out{nullptr};
};
TORCH_MODULE(ProjectionHead);

// One augmented view of a frame (crop + flip + jitter), deterministic in rng.
std::vector<float> contrastive_view(const FrameImage& frame, const ContrastiveConfig& config,
                                    std::mt19937_64& rng);

// SimCLR pretraining over unlabeled frames. All frames must share one shape
// divisible by the encoder stride. The probe loss over a fixed batch is
// recorded before training and after the final epoch.
EncoderState pretrain_encoder(const std::vector<FrameImage>& frames, const ModelSpec& spec,
                              const PretrainOptions& options, PretrainTrace* trace = nullptr);

} // namespace echoseg
