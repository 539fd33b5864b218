#include "echoseg/models.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "echoseg/manifest.hpp" // fnv1a64

using json = nlohmann::json;
namespace F = torch::nn::functional;

namespace echoseg {

void ModelSpec::validate() const {
    if (in_channels < 1) throw Error(ErrorCode::InvalidConfig, "in_channels must be >= 1");
    if (num_classes != kNumClasses)
        throw Error(ErrorCode::InvalidConfig, "num_classes is fixed to 4 for this benchmark");
    if (encoder_channels.size() < 2)
        throw Error(ErrorCode::InvalidConfig, "need at least two encoder stages");
    for (size_t i = 0; i + 1 < encoder_channels.size(); ++i) {
        if (encoder_channels[i] <= 0 || encoder_channels[i] >= encoder_channels[i + 1])
            throw Error(ErrorCode::InvalidConfig, "encoder_channels must be strictly increasing");
    }
    if (kind == ModelKind::TransUNetLite) {
        const TransformerSpec t = transformer.value_or(TransformerSpec{});
        if (t.layers < 1 || t.heads < 1 || t.embed_dim < 1 || t.patch < 1)
            throw Error(ErrorCode::InvalidConfig, "transformer spec fields must be positive");
        if (t.embed_dim % t.heads != 0)
            throw Error(ErrorCode::InvalidConfig, "embed_dim must be divisible by heads");
    }
}

ModelSpec ModelSpec::defaults(ModelKind kind) {
    ModelSpec spec;
    spec.kind = kind;
    if (kind == ModelKind::TransUNetLite) spec.transformer = TransformerSpec{};
    return spec;
}

namespace {

int norm_groups(int channels) { return std::gcd(channels, 8); }

void check_input(const torch::Tensor& batch, const ModelSpec& spec) {
    if (batch.dim() != 4)
        throw Error(ErrorCode::ShapeMismatch, "expected a BxCxHxW batch");
    if (batch.size(1) != spec.in_channels)
        throw Error(ErrorCode::ShapeMismatch,
                    "expected " + std::to_string(spec.in_channels) + " input channels, got " +
                        std::to_string(batch.size(1)));
    const int64_t divisor = 1ll << (spec.encoder_channels.size() - 1);
    const int64_t h = batch.size(2), w = batch.size(3);
    if (h < divisor || w < divisor || h % divisor != 0 || w % divisor != 0)
        throw Error(ErrorCode::IndivisibleInput,
                    "input " + std::to_string(h) + "x" + std::to_string(w) +
                        " is not divisible by " + std::to_string(divisor));
}

} // namespace

ConvBlockImpl::ConvBlockImpl(int in_channels, int out_channels) {
    conv1 = register_module(
        "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 3).padding(1)));
    norm1 = register_module(
        "norm1", torch::nn::GroupNorm(torch::nn::GroupNormOptions(norm_groups(out_channels), out_channels)));
    conv2 = register_module(
        "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_channels, out_channels, 3).padding(1)));
    norm2 = register_module(
        "norm2", torch::nn::GroupNorm(torch::nn::GroupNormOptions(norm_groups(out_channels), out_channels)));
}

torch::Tensor ConvBlockImpl::forward(torch::Tensor x) {
    x = torch::relu(norm1(conv1(x)));
    return torch::relu(norm2(conv2(x)));
}

AttentionGateImpl::AttentionGateImpl(int skip_channels, int gate_channels, int inter_channels) {
    project_gate = register_module(
        "project_gate", torch::nn::Conv2d(torch::nn::Conv2dOptions(gate_channels, inter_channels, 1)));
    project_skip = register_module(
        "project_skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(skip_channels, inter_channels, 1)));
    psi = register_module("psi", torch::nn::Conv2d(torch::nn::Conv2dOptions(inter_channels, 1, 1)));
}

torch::Tensor AttentionGateImpl::forward(torch::Tensor skip, torch::Tensor gate) {
    if (skip.dim() != 4 || gate.dim() != 4 || skip.size(0) != gate.size(0))
        throw Error(ErrorCode::ShapeIncompatible, "skip and gate batches differ");
    if (skip.size(1) != project_skip->options.in_channels() ||
        gate.size(1) != project_gate->options.in_channels())
        throw Error(ErrorCode::ShapeIncompatible, "skip or gate channel count differs from gate config");

    if (force_open) {
        last_alpha_ = torch::ones({skip.size(0), 1, skip.size(2), skip.size(3)}, skip.options());
        return skip;
    }
    auto g = project_gate(gate);
    if (g.size(2) != skip.size(2) || g.size(3) != skip.size(3)) {
        g = F::interpolate(g, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{skip.size(2), skip.size(3)})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
    }
    auto alpha = torch::sigmoid(psi(torch::relu(g + project_skip(skip))));
    last_alpha_ = alpha.detach();
    return skip * alpha;
}

namespace {

// Shared constructor pieces so the three models expose identical enc1..encN
// (and up/dec) parameter names.
void build_encoder(torch::nn::Module& owner, const ModelSpec& spec,
                   std::vector<ConvBlock>& encoders) {
    int in_c = spec.in_channels;
    for (size_t i = 0; i < spec.encoder_channels.size(); ++i) {
        ConvBlock block(in_c, spec.encoder_channels[i]);
        owner.register_module("enc" + std::to_string(i + 1), block);
        encoders.push_back(block);
        in_c = spec.encoder_channels[i];
    }
}

void build_decoder(torch::nn::Module& owner, const ModelSpec& spec,
                   std::vector<torch::nn::ConvTranspose2d>& ups, std::vector<ConvBlock>& decoders,
                   torch::nn::Conv2d& head) {
    std::vector<int> rev(spec.encoder_channels.rbegin(), spec.encoder_channels.rend());
    for (size_t i = 0; i + 1 < rev.size(); ++i) {
        torch::nn::ConvTranspose2d up(
            torch::nn::ConvTranspose2dOptions(rev[i], rev[i + 1], 2).stride(2));
        owner.register_module("up" + std::to_string(i + 1), up);
        ups.push_back(up);
        ConvBlock dec(2 * rev[i + 1], rev[i + 1]);
        owner.register_module("dec" + std::to_string(i + 1), dec);
        decoders.push_back(dec);
    }
    head = torch::nn::Conv2d(
        torch::nn::Conv2dOptions(spec.encoder_channels.front(), spec.num_classes, 1));
    owner.register_module("head", head);
}

} // namespace

UNetImpl::UNetImpl(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    build_encoder(*this, spec_, encoders);
    build_decoder(*this, spec_, ups, decoders, head);
}

torch::Tensor UNetImpl::forward(torch::Tensor x) {
    check_input(x, spec_);
    std::vector<torch::Tensor> skips;
    for (size_t i = 0; i < encoders.size(); ++i) {
        x = encoders[i]->forward(x);
        if (i + 1 < encoders.size()) {
            skips.push_back(x);
            x = torch::max_pool2d(x, 2);
        }
    }
    for (size_t i = 0; i < ups.size(); ++i) {
        x = ups[i]->forward(x);
        x = decoders[i]->forward(torch::cat({skips[skips.size() - 1 - i], x}, 1));
    }
    return head(x);
}

AttentionUNetImpl::AttentionUNetImpl(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    build_encoder(*this, spec_, encoders);
    build_decoder(*this, spec_, ups, decoders, head);
    std::vector<int> rev(spec_.encoder_channels.rbegin(), spec_.encoder_channels.rend());
    for (size_t i = 0; i + 1 < rev.size(); ++i) {
        // skip carries rev[i+1] channels, the gating signal is the coarser
        // decoder feature with rev[i] channels
        AttentionGate gate(rev[i + 1], rev[i], std::max(1, rev[i + 1] / 2));
        register_module("gate" + std::to_string(i + 1), gate);
        gates.push_back(gate);
    }
}

void AttentionUNetImpl::set_gates_forced_open(bool open) {
    for (auto& gate : gates) gate->force_open = open;
}

torch::Tensor AttentionUNetImpl::forward(torch::Tensor x) {
    check_input(x, spec_);
    std::vector<torch::Tensor> skips;
    for (size_t i = 0; i < encoders.size(); ++i) {
        x = encoders[i]->forward(x);
        if (i + 1 < encoders.size()) {
            skips.push_back(x);
            x = torch::max_pool2d(x, 2);
        }
    }
    for (size_t i = 0; i < ups.size(); ++i) {
        auto gated = gates[i]->forward(skips[skips.size() - 1 - i], x);
        x = ups[i]->forward(x);
        x = decoders[i]->forward(torch::cat({gated, x}, 1));
    }
    return head(x);
}

TransformerBlockImpl::TransformerBlockImpl(int embed_dim, int heads) {
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed_dim})));
    attention = register_module(
        "attention", torch::nn::MultiheadAttention(torch::nn::MultiheadAttentionOptions(embed_dim, heads)));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed_dim})));
    mlp_in = register_module("mlp_in", torch::nn::Linear(embed_dim, 4 * embed_dim));
    mlp_out = register_module("mlp_out", torch::nn::Linear(4 * embed_dim, embed_dim));
}

torch::Tensor TransformerBlockImpl::forward(torch::Tensor tokens) {
    auto normed = norm1(tokens);
    tokens = tokens + std::get<0>(attention(normed, normed, normed));
    tokens = tokens + mlp_out(torch::gelu(mlp_in(norm2(tokens))));
    return tokens;
}

TransUNetLiteImpl::TransUNetLiteImpl(ModelSpec spec) : spec_(std::move(spec)) {
    if (!spec_.transformer) spec_.transformer = TransformerSpec{};
    spec_.validate();
    build_encoder(*this, spec_, encoders);

    const TransformerSpec& t = *spec_.transformer;
    const int bottleneck = spec_.encoder_channels.back();
    patch_embed = register_module(
        "patch_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(bottleneck, t.embed_dim, t.patch)
                                             .stride(t.patch)));
    pos_embed = register_parameter("pos_embed", torch::randn({1, t.embed_dim, 16, 16}) * 0.02);
    for (int i = 0; i < t.layers; ++i) {
        TransformerBlock block(t.embed_dim, t.heads);
        register_module("block" + std::to_string(i + 1), block);
        blocks.push_back(block);
    }
    unembed = register_module(
        "unembed", torch::nn::Conv2d(torch::nn::Conv2dOptions(t.embed_dim, bottleneck, 1)));
    build_decoder(*this, spec_, ups, decoders, head);
}

torch::Tensor TransUNetLiteImpl::forward(torch::Tensor x) {
    check_input(x, spec_);
    const TransformerSpec& t = *spec_.transformer;
    {
        const int64_t stride = 1ll << (spec_.encoder_channels.size() - 1);
        const int64_t bh = x.size(2) / stride, bw = x.size(3) / stride;
        if (bh % t.patch != 0 || bw % t.patch != 0)
            throw Error(ErrorCode::IndivisibleInput, "bottleneck grid not divisible by patch size");
        if ((bh / t.patch) * (bw / t.patch) > kMaxTokens)
            throw Error(ErrorCode::TokenOverflow,
                        std::to_string((bh / t.patch) * (bw / t.patch)) +
                            " tokens exceed the supported maximum " + std::to_string(kMaxTokens));
    }

    std::vector<torch::Tensor> skips;
    for (size_t i = 0; i < encoders.size(); ++i) {
        x = encoders[i]->forward(x);
        if (i + 1 < encoders.size()) {
            skips.push_back(x);
            x = torch::max_pool2d(x, 2);
        }
    }

    const int64_t h = x.size(2), w = x.size(3);
    const int64_t th = h / t.patch, tw = w / t.patch;

    x = patch_embed(x);
    auto pos = F::interpolate(pos_embed.to(x.dtype()),
                              F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{th, tw})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
    x = x + pos;

    const int64_t batch = x.size(0);
    auto tokens = x.flatten(2).permute({2, 0, 1}); // (L, B, E)
    for (auto& block : blocks) tokens = block->forward(tokens);
    x = tokens.permute({1, 2, 0}).reshape({batch, t.embed_dim, th, tw});
    x = unembed(x);
    if (t.patch > 1) {
        x = F::interpolate(x, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{h, w})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
    }

    for (size_t i = 0; i < ups.size(); ++i) {
        x = ups[i]->forward(x);
        x = decoders[i]->forward(torch::cat({skips[skips.size() - 1 - i], x}, 1));
    }
    return head(x);
}

std::shared_ptr<SegBackbone> build_model(const ModelSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case ModelKind::UNet: return std::make_shared<UNetImpl>(spec);
        case ModelKind::AttUNet: return std::make_shared<AttentionUNetImpl>(spec);
        case ModelKind::TransUNetLite: return std::make_shared<TransUNetLiteImpl>(spec);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown model kind");
}

int64_t count_parameters(const torch::nn::Module& module) {
    int64_t count = 0;
    for (const auto& p : module.parameters()) {
        if (p.requires_grad()) count += p.numel();
    }
    return count;
}

int64_t count_parameters(const ModelSpec& spec) {
    torch::NoGradGuard no_grad;
    return count_parameters(*build_model(spec));
}

namespace {

constexpr std::string_view kEncoderPrefix = "enc";

std::vector<std::pair<std::string, torch::Tensor>> encoder_parameters(
    const torch::nn::Module& model) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& item : model.named_parameters()) {
        if (item.key().rfind(kEncoderPrefix, 0) == 0) out.emplace_back(item.key(), item.value());
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

} // namespace

EncoderState export_encoder(const torch::nn::Module& model, EncoderProvenance provenance) {
    EncoderState state;
    state.provenance = provenance;
    for (const auto& [name, tensor] : encoder_parameters(model))
        state.tensors.emplace_back(name, tensor.detach().cpu().contiguous().clone());
    return state;
}

void transfer_encoder(torch::nn::Module& model, const EncoderState& state) {
    auto params = encoder_parameters(model);
    std::map<std::string, torch::Tensor> expected(params.begin(), params.end());

    std::vector<std::string> missing, extra;
    std::set<std::string> provided;
    for (const auto& [name, tensor] : state.tensors) provided.insert(name);
    for (const auto& [name, tensor] : expected) {
        if (!provided.count(name)) missing.push_back(name);
    }
    for (const auto& name : provided) {
        if (!expected.count(name)) extra.push_back(name);
    }
    if (!missing.empty() || !extra.empty()) {
        std::ostringstream oss;
        oss << "encoder key sets differ;";
        if (!missing.empty()) {
            oss << " missing:";
            for (const auto& k : missing) oss << ' ' << k;
        }
        if (!extra.empty()) {
            oss << " extra:";
            for (const auto& k : extra) oss << ' ' << k;
        }
        throw Error(ErrorCode::KeyMismatch, oss.str());
    }

    torch::NoGradGuard no_grad;
    for (const auto& [name, tensor] : state.tensors) {
        auto& dst = expected.at(name);
        if (dst.sizes() != tensor.sizes())
            throw Error(ErrorCode::KeyMismatch, "shape mismatch for encoder key " + name);
        dst.copy_(tensor.to(dst.dtype()));
    }
}

uint64_t parameter_checksum(const torch::nn::Module& model, const std::string& prefix) {
    std::vector<std::pair<std::string, torch::Tensor>> params;
    for (const auto& item : model.named_parameters()) {
        if (prefix.empty() || item.key().rfind(prefix, 0) == 0)
            params.emplace_back(item.key(), item.value());
    }
    std::sort(params.begin(), params.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    uint64_t hash = 1469598103934665603ull;
    for (const auto& [name, tensor] : params) {
        hash = fnv1a64(name, hash);
        const auto flat = tensor.detach().to(torch::kFloat64).cpu().contiguous();
        const std::string bytes(reinterpret_cast<const char*>(flat.data_ptr<double>()),
                                flat.numel() * sizeof(double));
        hash = fnv1a64(bytes, hash);
    }
    return hash;
}

namespace {

constexpr char kArchiveMagic[8] = {'E', 'S', 'E', 'G', 'T', 'N', 'S', '1'};

const char* dtype_name(torch::ScalarType type) {
    switch (type) {
        case torch::kFloat32: return "float32";
        case torch::kFloat64: return "float64";
        case torch::kInt64: return "int64";
        default: throw Error(ErrorCode::InvalidConfig, "unsupported tensor dtype in archive");
    }
}

torch::ScalarType dtype_from_name(const std::string& name) {
    if (name == "float32") return torch::kFloat32;
    if (name == "float64") return torch::kFloat64;
    if (name == "int64") return torch::kInt64;
    throw Error(ErrorCode::MalformedRecord, "unknown archive dtype " + name);
}

} // namespace

void save_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, torch::Tensor>>& tensors,
                        const std::string& meta_json) {
    json header;
    header["meta"] = json::parse(meta_json);
    header["tensors"] = json::array();
    for (const auto& [name, tensor] : tensors) {
        json entry;
        entry["name"] = name;
        entry["shape"] = std::vector<int64_t>(tensor.sizes().begin(), tensor.sizes().end());
        entry["dtype"] = dtype_name(tensor.scalar_type());
        header["tensors"].push_back(entry);
    }
    const std::string header_text = header.dump();

    std::ofstream file(path, std::ios::binary);
    if (!file) throw Error(ErrorCode::IoWriteFailure, "cannot write " + path);
    file.write(kArchiveMagic, sizeof(kArchiveMagic));
    const uint64_t header_len = header_text.size();
    file.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    file.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, tensor] : tensors) {
        const auto flat = tensor.detach().cpu().contiguous();
        file.write(static_cast<const char*>(flat.data_ptr()),
                   static_cast<std::streamsize>(flat.numel() * flat.element_size()));
    }
    if (!file) throw Error(ErrorCode::IoWriteFailure, "short write to " + path);
}

std::pair<std::vector<std::pair<std::string, torch::Tensor>>, std::string> load_named_tensors(
    const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw Error(ErrorCode::IoReadFailure, "cannot read " + path);
    char magic[8];
    file.read(magic, sizeof(magic));
    if (!file || std::memcmp(magic, kArchiveMagic, sizeof(magic)) != 0)
        throw Error(ErrorCode::MalformedRecord, path + " is not a tensor archive");
    uint64_t header_len = 0;
    file.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_text(header_len, '\0');
    file.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!file) throw Error(ErrorCode::MalformedRecord, "truncated archive header in " + path);

    json header = json::parse(header_text, nullptr, false);
    if (header.is_discarded())
        throw Error(ErrorCode::MalformedRecord, "invalid archive header in " + path);

    std::vector<std::pair<std::string, torch::Tensor>> tensors;
    for (const auto& entry : header["tensors"]) {
        const std::vector<int64_t> shape = entry["shape"].get<std::vector<int64_t>>();
        const torch::ScalarType dtype = dtype_from_name(entry["dtype"].get<std::string>());
        auto tensor = torch::empty(shape, torch::TensorOptions().dtype(dtype));
        file.read(static_cast<char*>(tensor.data_ptr()),
                  static_cast<std::streamsize>(tensor.numel() * tensor.element_size()));
        if (!file) throw Error(ErrorCode::MalformedRecord, "truncated tensor data in " + path);
        tensors.emplace_back(entry["name"].get<std::string>(), std::move(tensor));
    }
    return {std::move(tensors), header["meta"].dump()};
}

void save_encoder_state(const std::string& path, const EncoderState& state) {
    json meta;
    meta["kind"] = "encoder_state";
    meta["provenance"] = state.provenance == EncoderProvenance::SslPretrained ? "ssl_pretrained" : "random";
    save_named_tensors(path, state.tensors, meta.dump());
}

EncoderState load_encoder_state(const std::string& path) {
    auto [tensors, meta_text] = load_named_tensors(path);
    json meta = json::parse(meta_text);
    EncoderState state;
    state.provenance = meta.value("provenance", "random") == "ssl_pretrained"
                           ? EncoderProvenance::SslPretrained
                           : EncoderProvenance::Random;
    state.tensors = std::move(tensors);
    return state;
}

std::string model_spec_to_json(const ModelSpec& spec) {
    json j;
    j["kind"] = to_string(spec.kind);
    j["in_channels"] = spec.in_channels;
    j["num_classes"] = spec.num_classes;
    j["encoder_channels"] = spec.encoder_channels;
    if (spec.transformer) {
        j["transformer"] = {{"layers", spec.transformer->layers},
                            {"heads", spec.transformer->heads},
                            {"embed_dim", spec.transformer->embed_dim},
                            {"patch", spec.transformer->patch}};
    }
    return j.dump();
}

ModelSpec model_spec_from_json(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::MalformedRecord, "invalid model spec JSON");
    ModelSpec spec;
    spec.kind = model_kind_from_string(j.value("kind", "unet"));
    spec.in_channels = j.value("in_channels", 1);
    spec.num_classes = j.value("num_classes", kNumClasses);
    spec.encoder_channels = j.value("encoder_channels", std::vector<int>{64, 128, 256, 512, 1024});
    if (j.contains("transformer") && !j["transformer"].is_null()) {
        TransformerSpec t;
        t.layers = j["transformer"].value("layers", 6);
        t.heads = j["transformer"].value("heads", 6);
        t.embed_dim = j["transformer"].value("embed_dim", 384);
        t.patch = j["transformer"].value("patch", 1);
        spec.transformer = t;
    }
    return spec;
}

void save_checkpoint(const std::string& path, const torch::nn::Module& model,
                     const ModelSpec& spec, const std::string& extra_json) {
    std::vector<std::pair<std::string, torch::Tensor>> tensors;
    for (const auto& item : model.named_parameters())
        tensors.emplace_back(item.key(), item.value().detach().cpu().contiguous().clone());
    json meta;
    meta["kind"] = "checkpoint";
    meta["spec"] = json::parse(model_spec_to_json(spec));
    meta["extra"] = json::parse(extra_json);
    save_named_tensors(path, tensors, meta.dump());
}

Checkpoint load_checkpoint(const std::string& path) {
    auto [tensors, meta_text] = load_named_tensors(path);
    json meta = json::parse(meta_text);
    if (meta.value("kind", "") != "checkpoint")
        throw Error(ErrorCode::MalformedRecord, path + " is not a model checkpoint");

    Checkpoint checkpoint;
    checkpoint.spec = model_spec_from_json(meta["spec"].dump());
    checkpoint.extra_json = meta.contains("extra") ? meta["extra"].dump() : "{}";
    checkpoint.model = build_model(checkpoint.spec);

    std::map<std::string, torch::Tensor> loaded(tensors.begin(), tensors.end());
    torch::NoGradGuard no_grad;
    size_t matched = 0;
    for (auto& item : checkpoint.model->named_parameters()) {
        const auto it = loaded.find(item.key());
        if (it == loaded.end())
            throw Error(ErrorCode::KeyMismatch, "checkpoint missing parameter " + item.key());
        item.value().copy_(it->second);
        ++matched;
    }
    if (matched != loaded.size())
        throw Error(ErrorCode::KeyMismatch, "checkpoint has unused parameters");
    return checkpoint;
}

} // namespace echoseg
