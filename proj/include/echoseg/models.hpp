#pragma once

#include <torch/torch.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "echoseg/types.hpp"

namespace echoseg {

struct TransformerSpec {
    int layers = 6;
    int heads = 6;
    int embed_dim = 384;
    int patch = 1;
};

struct ModelSpec {
    ModelKind kind = ModelKind::UNet;
    int in_channels = 1;
    int num_classes = kNumClasses;
    std::vector<int> encoder_channels = {64, 128, 256, 512, 1024};
    std::optional<TransformerSpec> transformer;

    void validate() const;
    static ModelSpec defaults(ModelKind kind);
};

inline constexpr int64_t kMaxTokens = 4096;

// [3x3 conv -> GroupNorm -> ReLU] x 2
struct ConvBlockImpl : torch::nn::Module {
    ConvBlockImpl(int in_channels, int out_channels);
    torch::Tensor forward(torch::Tensor x);

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(ConvBlock);

// Additive attention gate: alpha = sigmoid(psi(relu(Wg g + Wx x))), output
// skip * alpha. The gating signal may be spatially coarser than the skip and
// is bilinearly upsampled after projection.
struct AttentionGateImpl : torch::nn::Module {
    AttentionGateImpl(int skip_channels, int gate_channels, int inter_channels);
    torch::Tensor forward(torch::Tensor skip, torch::Tensor gate);
    torch::Tensor last_alpha() const { return last_alpha_; }

    // Test hook: alpha == 1 turns the gate into a pass-through.
    bool force_open = false;

    torch::nn::Conv2d project_gate{nullptr}, project_skip{nullptr}, psi{nullptr};

private:
    torch::Tensor last_alpha_;
};
TORCH_MODULE(AttentionGate);

// Common base so training code can hold any of the three architectures.
struct SegBackbone : torch::nn::Module {
    virtual torch::Tensor forward(torch::Tensor batch) = 0;
    virtual const ModelSpec& spec() const = 0;
    ~SegBackbone() override = default;
};

struct UNetImpl : SegBackbone {
    explicit UNetImpl(ModelSpec spec);
    torch::Tensor forward(torch::Tensor batch) override;
    const ModelSpec& spec() const override { return spec_; }

    ModelSpec spec_;
    std::vector<ConvBlock> encoders;
    std::vector<torch::nn::ConvTranspose2d> ups;
    std::vector<ConvBlock> decoders;
    torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(UNet);

struct AttentionUNetImpl : SegBackbone {
    explicit AttentionUNetImpl(ModelSpec spec);
    torch::Tensor forward(torch::Tensor batch) override;
    const ModelSpec& spec() const override { return spec_; }
    void set_gates_forced_open(bool open);

    ModelSpec spec_;
    std::vector<ConvBlock> encoders;
    std::vector<torch::nn::ConvTranspose2d> ups;
    std::vector<ConvBlock> decoders;
    std::vector<AttentionGate> gates;
    torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(AttentionUNet);

// Pre-norm transformer encoder block over token embeddings.
struct TransformerBlockImpl : torch::nn::Module {
    TransformerBlockImpl(int embed_dim, int heads);
    torch::Tensor forward(torch::Tensor tokens); // (L, N, E)

    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    torch::nn::MultiheadAttention attention{nullptr};
    torch::nn::Linear mlp_in{nullptr}, mlp_out{nullptr};
};
TORCH_MODULE(TransformerBlock);

// CNN encoder (stride 16) -> patch embedding -> multi-head self-attention
// stack -> U-Net style decoder with skip connections.
struct TransUNetLiteImpl : SegBackbone {
    explicit TransUNetLiteImpl(ModelSpec spec);
    torch::Tensor forward(torch::Tensor batch) override;
    const ModelSpec& spec() const override { return spec_; }

    ModelSpec spec_;
    std::vector<ConvBlock> encoders;
    torch::nn::Conv2d patch_embed{nullptr}, unembed{nullptr};
    torch::Tensor pos_embed; // base grid, interpolated to the token grid
    std::vector<TransformerBlock> blocks;
    std::vector<torch::nn::ConvTranspose2d> ups;
    std::vector<ConvBlock> decoders;
    torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(TransUNetLite);

std::shared_ptr<SegBackbone> build_model(const ModelSpec& spec);

int64_t count_parameters(const ModelSpec& spec);
int64_t count_parameters(const torch::nn::Module& module);

// Serialized encoder weights with provenance. Keys are the fully qualified
// parameter names under the enc1..encN blocks shared by all three models.
enum class EncoderProvenance { Random, SslPretrained };

struct EncoderState {
    EncoderProvenance provenance = EncoderProvenance::Random;
    std::vector<std::pair<std::string, torch::Tensor>> tensors;
};

EncoderState export_encoder(const torch::nn::Module& model,
                            EncoderProvenance provenance = EncoderProvenance::Random);

// Replaces encoder weights in place; decoder parameters are untouched.
// Throws KEY_MISMATCH listing missing/extra keys.
void transfer_encoder(torch::nn::Module& model, const EncoderState& state);

void save_encoder_state(const std::string& path, const EncoderState& state);
EncoderState load_encoder_state(const std::string& path);

// Deterministic digest of parameters whose names start with prefix (all
// parameters when prefix is empty).
uint64_t parameter_checksum(const torch::nn::Module& model, const std::string& prefix = "");

// Named-tensor archive shared by encoder states and checkpoints.
void save_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, torch::Tensor>>& tensors,
                        const std::string& meta_json);
std::pair<std::vector<std::pair<std::string, torch::Tensor>>, std::string> load_named_tensors(
    const std::string& path);

void save_checkpoint(const std::string& path, const torch::nn::Module& model,
                     const ModelSpec& spec, const std::string& extra_json = "{}");

struct Checkpoint {
    ModelSpec spec;
    std::shared_ptr<SegBackbone> model;
    std::string extra_json;
};
Checkpoint load_checkpoint(const std::string& path);

std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& json_text);

} // namespace echoseg
