#include "echoseg/losses.hpp"

#include <limits>

namespace echoseg {

void LossConfig::validate() const {
    if (!use_ce && !use_dice && !use_focal)
        throw Error(ErrorCode::InvalidConfig, "loss config enables no terms");
    if (ce_weight < 0 || dice_weight < 0 || focal_weight < 0)
        throw Error(ErrorCode::InvalidConfig, "loss term weights must be >= 0");
    if (focal_gamma < 0) throw Error(ErrorCode::InvalidConfig, "focal_gamma must be >= 0");
    if (dice_smooth <= 0) throw Error(ErrorCode::InvalidConfig, "dice_smooth must be > 0");
}

LossConfig LossConfig::from_kind(LossKind kind) {
    LossConfig config;
    config.use_ce = true;
    config.use_dice = kind != LossKind::CE;
    config.use_focal = kind == LossKind::CEDiceFocal;
    return config;
}

namespace {

void check_pair(const torch::Tensor& logits, const torch::Tensor& target) {
    if (logits.dim() != 4 || logits.size(1) != kNumClasses)
        throw Error(ErrorCode::ShapeMismatch, "logits must be (B, 4, H, W)");
    if (target.dim() != 3)
        throw Error(ErrorCode::ShapeMismatch, "target must be (B, H, W)");
    if (logits.size(0) != target.size(0) || logits.size(2) != target.size(1) ||
        logits.size(3) != target.size(2))
        throw Error(ErrorCode::ShapeMismatch, "logit and target shapes disagree");
    if (!torch::isIntegralType(target.scalar_type(), /*includeBool=*/false))
        throw Error(ErrorCode::ShapeMismatch, "target must hold integer class indices");
}

// Negative log-likelihood of the true class per pixel: (B, H, W).
torch::Tensor pixel_nll(const torch::Tensor& logits, const torch::Tensor& target) {
    const auto log_probs = torch::log_softmax(logits, 1);
    return -log_probs.gather(1, target.to(torch::kInt64).unsqueeze(1)).squeeze(1);
}

} // namespace

torch::Tensor cross_entropy_per_sample(const torch::Tensor& logits, const torch::Tensor& target) {
    check_pair(logits, target);
    return pixel_nll(logits, target).mean({1, 2});
}

torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& target) {
    return cross_entropy_per_sample(logits, target).mean();
}

torch::Tensor dice_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& target,
                                   double smooth) {
    check_pair(logits, target);
    const auto probs = torch::softmax(logits, 1);
    const auto one_hot = torch::one_hot(target.to(torch::kInt64), kNumClasses)
                             .permute({0, 3, 1, 2})
                             .to(probs.dtype());
    const auto intersection = (probs * one_hot).sum({2, 3});
    const auto denom = probs.sum({2, 3}) + one_hot.sum({2, 3});
    const auto per_class = (2.0 * intersection + smooth) / (denom + smooth);
    return 1.0 - per_class.mean(1);
}

torch::Tensor dice_loss(const torch::Tensor& logits, const torch::Tensor& target, double smooth) {
    return dice_loss_per_sample(logits, target, smooth).mean();
}

torch::Tensor focal_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& target,
                                    double gamma) {
    check_pair(logits, target);
    if (gamma < 0) throw Error(ErrorCode::InvalidConfig, "focal gamma must be >= 0");
    const auto nll = pixel_nll(logits, target);
    const auto pt = torch::exp(-nll);
    return (torch::pow(1.0 - pt, gamma) * nll).mean({1, 2});
}

torch::Tensor focal_loss(const torch::Tensor& logits, const torch::Tensor& target, double gamma) {
    return focal_loss_per_sample(logits, target, gamma).mean();
}

torch::Tensor composite_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& target,
                                        const LossConfig& config) {
    config.validate();
    check_pair(logits, target);
    auto total = torch::zeros({logits.size(0)}, logits.options());
    if (config.use_ce) total = total + config.ce_weight * cross_entropy_per_sample(logits, target);
    if (config.use_dice)
        total = total + config.dice_weight * dice_loss_per_sample(logits, target, config.dice_smooth);
    if (config.use_focal)
        total = total + config.focal_weight * focal_loss_per_sample(logits, target, config.focal_gamma);
    return total;
}

torch::Tensor composite_loss(const torch::Tensor& logits, const torch::Tensor& target,
                             const LossConfig& config) {
    return composite_loss_per_sample(logits, target, config).mean();
}

torch::Tensor weighted_batch_loss(const torch::Tensor& per_sample_losses,
                                  const std::vector<double>& weights) {
    if (per_sample_losses.dim() != 1)
        throw Error(ErrorCode::ShapeMismatch, "per-sample losses must be a 1-D tensor");
    if (per_sample_losses.size(0) != static_cast<int64_t>(weights.size()))
        throw Error(ErrorCode::LengthMismatch,
                    std::to_string(per_sample_losses.size(0)) + " losses vs " +
                        std::to_string(weights.size()) + " weights");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0) throw Error(ErrorCode::InvalidConfig, "sample weights must be positive");
        sum += w;
    }
    if (sum <= 0.0) throw Error(ErrorCode::AllZeroWeights, "sample weights sum to zero");

    auto w = torch::tensor(weights, per_sample_losses.options());
    return (per_sample_losses * w).sum() / w.sum();
}

torch::Tensor ntxent_loss(const torch::Tensor& projections, double temperature) {
    if (temperature <= 0) throw Error(ErrorCode::InvalidConfig, "temperature must be positive");
    if (projections.dim() != 2 || projections.size(0) % 2 != 0)
        throw Error(ErrorCode::ShapeMismatch, "projections must be (2B, D)");
    const int64_t b = projections.size(0) / 2;
    if (b < 2) throw Error(ErrorCode::DegenerateBatch, "NT-Xent needs at least 2 pairs");

    const auto z = torch::nn::functional::normalize(
        projections, torch::nn::functional::NormalizeFuncOptions().dim(1));
    auto sim = torch::mm(z, z.t()) / temperature;
    const auto self_mask = torch::eye(2 * b, torch::TensorOptions().dtype(torch::kBool));
    sim = sim.masked_fill(self_mask, -std::numeric_limits<double>::infinity());

    auto targets = torch::empty({2 * b}, torch::kInt64);
    for (int64_t i = 0; i < 2 * b; ++i) targets[i] = i < b ? i + b : i - b;

    const auto log_probs = torch::log_softmax(sim, 1);
    return -log_probs.gather(1, targets.unsqueeze(1)).mean();
}

} // namespace echoseg
