#pragma once

#include <torch/torch.h>

#include <vector>

#include "echoseg/types.hpp"

namespace echoseg {

struct LossConfig {
    bool use_ce = true;
    bool use_dice = false;
    bool use_focal = false;
    double ce_weight = 1.0;
    double dice_weight = 1.0;
    double focal_weight = 1.0;
    double focal_gamma = 2.0;
    double dice_smooth = 1e-6;

    void validate() const;
    static LossConfig from_kind(LossKind kind);
};

// All losses take logits (B, 4, H, W) and integer targets (B, H, W) with
// values in {0..3}. The _per_sample variants reduce over pixels only and
// return a length-B tensor; the scalar variants mean over the batch.

torch::Tensor cross_entropy_per_sample(const torch::Tensor& logits, const torch::Tensor& target);
torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& target);

torch::Tensor dice_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& target,
                                   double smooth = 1e-6);
torch::Tensor dice_loss(const torch::Tensor& logits, const torch::Tensor& target,
                        double smooth = 1e-6);

torch::Tensor focal_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& target,
                                    double gamma);
torch::Tensor focal_loss(const torch::Tensor& logits, const torch::Tensor& target, double gamma);

torch::Tensor composite_loss_per_sample(const torch::Tensor& logits, const torch::Tensor& target,
                                        const LossConfig& config);
torch::Tensor composite_loss(const torch::Tensor& logits, const torch::Tensor& target,
                             const LossConfig& config);

// sum(w_i * L_i) / sum(w_i); invariant to a uniform rescaling of the weights.
torch::Tensor weighted_batch_loss(const torch::Tensor& per_sample_losses,
                                  const std::vector<double>& weights);

// SimCLR NT-Xent over 2B projections where rows i and i+B form the positive
// pair. Cosine similarities, self-similarity excluded.
torch::Tensor ntxent_loss(const torch::Tensor& projections, double temperature);

} // namespace echoseg
