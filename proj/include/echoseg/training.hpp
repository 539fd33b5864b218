#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "echoseg/dataset.hpp"
#include "echoseg/metrics.hpp"
#include "echoseg/models.hpp"

namespace echoseg {

inline constexpr const char* kCodeVersion = "echoseg 0.1.0";

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_mean_dice = 0.0;
};

struct RunReport {
    RunConfig config;
    std::vector<EpochStats> per_epoch;
    std::map<std::string, MetricReport> final_by_split;
    std::string dataset_fingerprint;
    std::string code_version = kCodeVersion;
    std::string checkpoint_path;
    int iterations_run = 0;
    bool early_stopped = false;
    double best_val_mean_dice = 0.0;
};

// base_lr * gamma^floor(epoch / step)
double lr_at_epoch(double base_lr, int epoch, int step, double gamma);

// Scales the gradients in place when their global L2 norm exceeds max_norm;
// returns the pre-clip norm. Non-finite gradients raise NONFINITE_GRADIENT.
double clip_gradients(std::vector<torch::Tensor> grads, double max_norm);

// Deterministic data-order and augmentation seeds shared by the training
// loop and by tests that recompute a logged batch.
std::vector<size_t> epoch_order(size_t count, uint64_t run_seed, int epoch);
uint64_t augment_seed(uint64_t run_seed, int epoch, size_t position);

struct TrainOptions {
    std::string out_dir; // empty: keep everything in memory, write nothing
    std::optional<int> max_iterations;
    std::optional<double> stop_at_train_dice; // checked every check_every iterations
    int check_every = 5;
    bool verbose = false;
    // Desk-scale override for tests; standard runs use ModelSpec::defaults.
    std::optional<ModelSpec> model_spec;
};

// Full loop: augment -> forward -> composite loss -> weighted batch loss ->
// clip -> Adam step -> step-decay schedule, evaluating val mean Dice per
// epoch and checkpointing the best weights.
RunReport train(const RunConfig& config, const Manifest& manifest,
                const std::optional<EncoderState>& encoder_init = std::nullopt,
                const TrainOptions& options = {});

MetricReport evaluate_samples(SegBackbone& model, const std::vector<Sample>& samples,
                              AggregationMode mode = AggregationMode::PerFrameMean,
                              bool boundary_metrics = false);

MetricReport evaluate(const std::string& checkpoint_path, const Manifest& manifest, Split split,
                      AggregationMode mode = AggregationMode::PerFrameMean,
                      bool boundary_metrics = false);

struct AblationCell {
    LossKind loss = LossKind::CE;
    int resolution = 256;
    DataRoute route = DataRoute::Png16;
    std::optional<RunReport> report;
    std::string error; // non-empty when this cell failed
};

// One train+evaluate per grid cell with a shared seed; failures are recorded
// per cell and do not stop the sweep.
std::vector<AblationCell> run_ablation(const RunConfig& base,
                                       const std::map<DataRoute, Manifest>& manifests,
                                       const std::vector<LossKind>& losses,
                                       const std::vector<int>& resolutions,
                                       const std::string& out_dir,
                                       const TrainOptions& cell_options = {});

std::string ablation_table(const std::vector<AblationCell>& cells);

// Single frame+mask overlay panel (classes tinted over grayscale).
std::vector<uint8_t> overlay_panel(const FrameImage& frame, const LabelMap& mask);

// One composite image per frame: input | ground truth | prediction.
std::vector<std::string> render_overlays(const std::vector<FrameImage>& frames,
                                         const std::vector<LabelMap>& gt,
                                         const std::vector<LabelMap>& predictions,
                                         const std::string& out_dir);

// Flat key = value run-config files; every run writes its resolved copy.
RunConfig read_run_config(const std::string& path);
void write_run_config(const std::string& path, const RunConfig& config);

std::string run_report_json(const RunReport& report);
RunReport run_report_from_json(const std::string& text);
std::string run_report_table(const RunReport& report);
void write_run_report(const RunReport& report, const std::string& dir);

} // namespace echoseg
