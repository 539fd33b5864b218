#include "echoseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "echoseg/augment.hpp"
#include "echoseg/losses.hpp"
#include "echoseg/png_io.hpp"
#include "echoseg/pseudo_label.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace echoseg {

double lr_at_epoch(double base_lr, int epoch, int step, double gamma) {
    if (epoch < 0) throw Error(ErrorCode::InvalidConfig, "epoch must be >= 0");
    if (step <= 0) throw Error(ErrorCode::InvalidConfig, "step must be positive");
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step));
}

double clip_gradients(std::vector<torch::Tensor> grads, double max_norm) {
    if (max_norm <= 0) throw Error(ErrorCode::InvalidConfig, "max_norm must be positive");
    double sq_sum = 0.0;
    for (const auto& g : grads) {
        if (!g.defined()) continue;
        if (!torch::isfinite(g).all().item<bool>())
            throw Error(ErrorCode::NonfiniteGradient, "non-finite gradient encountered");
        sq_sum += g.pow(2).sum().item<double>();
    }
    const double norm = std::sqrt(sq_sum);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        torch::NoGradGuard no_grad;
        for (auto& g : grads) {
            if (g.defined()) g.mul_(scale);
        }
    }
    return norm;
}

std::vector<size_t> epoch_order(size_t count, uint64_t run_seed, int epoch) {
    std::vector<size_t> order(count);
    std::iota(order.begin(), order.end(), size_t{0});
    std::mt19937_64 rng(fnv1a64("order:" + std::to_string(epoch), run_seed));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

uint64_t augment_seed(uint64_t run_seed, int epoch, size_t position) {
    return fnv1a64("aug:" + std::to_string(epoch) + ":" + std::to_string(position), run_seed);
}

namespace {

std::vector<std::pair<std::string, torch::Tensor>> snapshot_weights(const torch::nn::Module& model) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& item : model.named_parameters())
        out.emplace_back(item.key(), item.value().detach().clone());
    return out;
}

void restore_weights(torch::nn::Module& model,
                     const std::vector<std::pair<std::string, torch::Tensor>>& weights) {
    torch::NoGradGuard no_grad;
    auto params = model.named_parameters();
    for (const auto& [name, tensor] : weights) params[name].copy_(tensor);
}

json run_config_to_json(const RunConfig& c) {
    return json{{"model", to_string(c.model)},
                {"resolution", c.resolution},
                {"loss", to_string(c.loss)},
                {"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"lr_step", c.lr_step},
                {"lr_gamma", c.lr_gamma},
                {"grad_clip_norm", c.grad_clip_norm},
                {"seed", c.seed},
                {"data_route", to_string(c.data_route)},
                {"slice_strategy", to_string(c.slice_strategy)},
                {"ssl_init", c.ssl_init},
                {"pseudo_enabled", c.pseudo_enabled}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    c.model = model_kind_from_string(j.value("model", "unet"));
    c.resolution = j.value("resolution", 256);
    c.loss = loss_kind_from_string(j.value("loss", "ce_dice"));
    c.lr = j.value("lr", 1e-4);
    c.weight_decay = j.value("weight_decay", 1e-4);
    c.batch_size = j.value("batch_size", 8);
    c.epochs = j.value("epochs", 40);
    c.lr_step = j.value("lr_step", 10);
    c.lr_gamma = j.value("lr_gamma", 0.1);
    c.grad_clip_norm = j.value("grad_clip_norm", 1.0);
    c.seed = j.value("seed", uint64_t{0});
    c.data_route = data_route_from_string(j.value("data_route", "png16"));
    c.slice_strategy = slice_strategy_from_string(j.value("slice_strategy", "middle"));
    c.ssl_init = j.value("ssl_init", false);
    c.pseudo_enabled = j.value("pseudo_enabled", false);
    return c;
}

json metric_report_to_json(const MetricReport& r) {
    json j;
    j["dice"] = r.per_class_dice;
    j["mean_dice"] = r.mean_dice;
    j["mean_dice_foreground"] = r.mean_dice_foreground;
    j["iou"] = r.per_class_iou;
    const auto optional_array = [](const std::optional<std::array<double, kNumClasses>>& a) {
        if (!a) return json(nullptr);
        json out = json::array();
        for (double v : *a) out.push_back(std::isfinite(v) ? json(v) : json(nullptr));
        return out;
    };
    j["hd"] = optional_array(r.hd);
    j["asd"] = optional_array(r.asd);
    return j;
}

MetricReport metric_report_from_json(const json& j) {
    MetricReport r;
    for (int c = 0; c < kNumClasses; ++c) {
        r.per_class_dice[c] = j["dice"][c].get<double>();
        r.per_class_iou[c] = j["iou"][c].get<double>();
    }
    r.mean_dice = j["mean_dice"].get<double>();
    r.mean_dice_foreground = j["mean_dice_foreground"].get<double>();
    const auto parse_array = [&](const char* key) -> std::optional<std::array<double, kNumClasses>> {
        if (!j.contains(key) || j[key].is_null()) return std::nullopt;
        std::array<double, kNumClasses> a{};
        for (int c = 0; c < kNumClasses; ++c)
            a[c] = j[key][c].is_null() ? std::numeric_limits<double>::quiet_NaN()
                                       : j[key][c].get<double>();
        return a;
    };
    r.hd = parse_array("hd");
    r.asd = parse_array("asd");
    return r;
}

} // namespace

MetricReport evaluate_samples(SegBackbone& model, const std::vector<Sample>& samples,
                              AggregationMode mode, bool boundary_metrics) {
    if (samples.empty()) throw Error(ErrorCode::EmptySplit, "no samples to evaluate");
    torch::NoGradGuard no_grad;
    const bool was_training = model.is_training();
    model.eval();

    std::vector<MetricReport> frame_reports;
    constexpr size_t kEvalBatch = 8;
    for (size_t start = 0; start < samples.size(); start += kEvalBatch) {
        const size_t end = std::min(samples.size(), start + kEvalBatch);
        std::vector<const FrameImage*> frames;
        for (size_t i = start; i < end; ++i) frames.push_back(&samples[i].frame);
        const auto logits = model.forward(frames_to_tensor(frames));

        for (size_t i = start; i < end; ++i) {
            const LabelMap pred = labelmap_from_prediction(logits[static_cast<int64_t>(i - start)]);
            MetricReport report = report_from_confusion(confusion_matrix(pred, samples[i].mask));
            report.patient_id = samples[i].patient_id;
            if (boundary_metrics) {
                std::array<double, kNumClasses> hd{}, asd{};
                const auto spacing = samples[i].frame.spacing_mm;
                for (int cls = 0; cls < kNumClasses; ++cls) {
                    try {
                        hd[cls] = hausdorff_distance(pred, samples[i].mask, cls, spacing);
                        asd[cls] = average_surface_distance(pred, samples[i].mask, cls, spacing);
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::EmptyClass) throw;
                        hd[cls] = asd[cls] = std::numeric_limits<double>::quiet_NaN();
                    }
                }
                report.hd = hd;
                report.asd = asd;
            }
            frame_reports.push_back(std::move(report));
        }
    }
    if (was_training) model.train();
    return aggregate_reports(frame_reports, mode);
}

RunReport train(const RunConfig& config, const Manifest& manifest,
                const std::optional<EncoderState>& encoder_init, const TrainOptions& options) {
    validate_config(config);
    const auto train_samples = load_split(manifest, Split::Train, config);
    const auto val_samples = load_split(manifest, Split::Val, config);
    if (train_samples.empty()) throw Error(ErrorCode::EmptySplit, "train split is empty");
    if (val_samples.empty()) throw Error(ErrorCode::EmptySplit, "val split is empty");
    if (config.ssl_init && !encoder_init)
        throw Error(ErrorCode::InvalidConfig, "ssl_init requires an encoder state");

    torch::manual_seed(config.seed);
    const ModelSpec spec = options.model_spec.value_or(ModelSpec::defaults(config.model));
    auto model = build_model(spec);
    if (encoder_init) transfer_encoder(*model, *encoder_init);

    const LossConfig loss_config = LossConfig::from_kind(config.loss);
    std::vector<torch::Tensor> params = model->parameters();
    torch::optim::Adam optimizer(
        params, torch::optim::AdamOptions(config.lr).weight_decay(config.weight_decay));

    RunReport report;
    report.config = config;
    report.dataset_fingerprint = manifest_fingerprint(manifest);

    if (!options.out_dir.empty()) {
        fs::create_directories(options.out_dir);
        write_run_config((fs::path(options.out_dir) / "config.resolved.cfg").string(), config);
        report.checkpoint_path = (fs::path(options.out_dir) / "best.ckpt").string();
    }

    const std::string config_json = run_config_to_json(config).dump();
    double best_val = -1.0;
    std::vector<std::pair<std::string, torch::Tensor>> best_weights = snapshot_weights(*model);

    int iterations = 0;
    bool stop = false;
    for (int epoch = 0; epoch < config.epochs && !stop; ++epoch) {
        const double lr = lr_at_epoch(config.lr, epoch, config.lr_step, config.lr_gamma);
        for (auto& group : optimizer.param_groups())
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

        const auto order = epoch_order(train_samples.size(), config.seed, epoch);
        model->train();
        double loss_sum = 0.0;
        size_t batch_count = 0;

        for (size_t start = 0; start < order.size() && !stop;
             start += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(order.size(), start + config.batch_size);

            std::vector<FrameImage> frames;
            std::vector<LabelMap> masks;
            std::vector<double> weights;
            for (size_t pos = start; pos < end; ++pos) {
                const Sample& sample = train_samples[order[pos]];
                auto [frame, mask] =
                    augment(sample.frame, sample.mask, augment_seed(config.seed, epoch, pos));
                frames.push_back(std::move(frame));
                masks.push_back(std::move(mask));
                weights.push_back(sample.weight);
            }
            std::vector<const FrameImage*> frame_ptrs;
            std::vector<const LabelMap*> mask_ptrs;
            for (size_t i = 0; i < frames.size(); ++i) {
                frame_ptrs.push_back(&frames[i]);
                mask_ptrs.push_back(&masks[i]);
            }

            optimizer.zero_grad();
            const auto logits = model->forward(frames_to_tensor(frame_ptrs));
            const auto per_sample = composite_loss_per_sample(logits, masks_to_tensor(mask_ptrs),
                                                              loss_config);
            const auto loss = weighted_batch_loss(per_sample, weights);
            const double loss_value = loss.item<double>();
            if (!std::isfinite(loss_value))
                throw Error(ErrorCode::Divergence, "non-finite training loss at epoch " +
                                                       std::to_string(epoch));
            loss.backward();

            std::vector<torch::Tensor> grads;
            for (auto& p : params) {
                if (p.grad().defined()) grads.push_back(p.grad());
            }
            clip_gradients(grads, config.grad_clip_norm);
            optimizer.step();

            loss_sum += loss_value;
            ++batch_count;
            ++iterations;

            if (options.max_iterations && iterations >= *options.max_iterations) stop = true;
            if (!stop && options.stop_at_train_dice && iterations % options.check_every == 0) {
                const double dice = evaluate_samples(*model, train_samples).mean_dice;
                if (options.verbose)
                    std::cout << "iter " << iterations << " train mean dice " << dice << "\n";
                if (dice >= *options.stop_at_train_dice) {
                    stop = true;
                    report.early_stopped = true;
                }
            }
        }

        const MetricReport val_report = evaluate_samples(*model, val_samples);
        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = batch_count ? loss_sum / static_cast<double>(batch_count) : 0.0;
        stats.val_mean_dice = val_report.mean_dice;
        report.per_epoch.push_back(stats);
        if (options.verbose)
            std::cout << "epoch " << epoch << " lr " << lr << " loss " << stats.train_loss
                      << " val dice " << stats.val_mean_dice << "\n";

        if (val_report.mean_dice > best_val) {
            best_val = val_report.mean_dice;
            best_weights = snapshot_weights(*model);
            if (!report.checkpoint_path.empty())
                save_checkpoint(report.checkpoint_path, *model, spec, config_json);
        }
    }

    report.iterations_run = iterations;

    // An early-stop run keeps the weights that satisfied the stop condition;
    // otherwise the best-val-Dice snapshot is restored.
    if (report.early_stopped) {
        if (!report.checkpoint_path.empty())
            save_checkpoint(report.checkpoint_path, *model, spec, config_json);
        best_val = evaluate_samples(*model, val_samples).mean_dice;
    } else {
        restore_weights(*model, best_weights);
    }
    report.best_val_mean_dice = best_val;

    report.final_by_split["train"] = evaluate_samples(*model, train_samples);
    report.final_by_split["val"] = evaluate_samples(*model, val_samples);
    const auto test_samples = load_split(manifest, Split::Test, config);
    if (!test_samples.empty()) report.final_by_split["test"] = evaluate_samples(*model, test_samples);

    if (!options.out_dir.empty()) write_run_report(report, options.out_dir);
    return report;
}

MetricReport evaluate(const std::string& checkpoint_path, const Manifest& manifest, Split split,
                      AggregationMode mode, bool boundary_metrics) {
    Checkpoint checkpoint = load_checkpoint(checkpoint_path);
    json extra = json::parse(checkpoint.extra_json, nullptr, false);
    const RunConfig config =
        extra.is_discarded() || extra.is_null() ? RunConfig{} : run_config_from_json(extra);
    const auto samples = load_split(manifest, split, config);
    if (samples.empty())
        throw Error(ErrorCode::EmptySplit, "split " + to_string(split) + " is empty");
    return evaluate_samples(*checkpoint.model, samples, mode, boundary_metrics);
}

std::vector<AblationCell> run_ablation(const RunConfig& base,
                                       const std::map<DataRoute, Manifest>& manifests,
                                       const std::vector<LossKind>& losses,
                                       const std::vector<int>& resolutions,
                                       const std::string& out_dir,
                                       const TrainOptions& cell_options) {
    std::vector<AblationCell> cells;
    for (LossKind loss : losses) {
        for (int resolution : resolutions) {
            for (const auto& [route, manifest] : manifests) {
                AblationCell cell;
                cell.loss = loss;
                cell.resolution = resolution;
                cell.route = route;
                RunConfig config = base;
                config.loss = loss;
                config.resolution = resolution;
                config.data_route = route;
                TrainOptions options = cell_options;
                if (!out_dir.empty()) {
                    options.out_dir = (fs::path(out_dir) / (to_string(loss) + "_" +
                                                            std::to_string(resolution) + "_" +
                                                            to_string(route)))
                                          .string();
                }
                try {
                    cell.report = train(config, manifest, std::nullopt, options);
                } catch (const std::exception& e) {
                    cell.error = e.what();
                }
                cells.push_back(std::move(cell));
            }
        }
    }
    if (!out_dir.empty()) {
        std::ofstream table(fs::path(out_dir) / "ablation.txt");
        table << ablation_table(cells);
    }
    return cells;
}

std::string ablation_table(const std::vector<AblationCell>& cells) {
    std::ostringstream oss;
    oss << std::left << std::setw(16) << "loss" << std::setw(12) << "resolution" << std::setw(16)
        << "route" << std::setw(12) << "val_mdice" << std::setw(12) << "test_mdice" << "\n";
    for (const auto& cell : cells) {
        oss << std::left << std::setw(16) << to_string(cell.loss) << std::setw(12)
            << cell.resolution << std::setw(16) << to_string(cell.route);
        if (cell.report) {
            const auto& final = cell.report->final_by_split;
            const auto fmt = [](double v) {
                std::ostringstream s;
                s << std::fixed << std::setprecision(4) << v;
                return s.str();
            };
            oss << std::setw(12)
                << (final.count("val") ? fmt(final.at("val").mean_dice) : std::string("-"));
            oss << std::setw(12)
                << (final.count("test") ? fmt(final.at("test").mean_dice) : std::string("-"));
        } else {
            oss << std::setw(12) << "FAILED" << std::setw(12) << cell.error.substr(0, 40);
        }
        oss << "\n";
    }
    return oss.str();
}

std::vector<uint8_t> overlay_panel(const FrameImage& frame, const LabelMap& mask) {
    if (frame.height != mask.height || frame.width != mask.width)
        throw Error(ErrorCode::ShapeMismatch, "frame and mask shapes differ");
    float mn = frame.pixels[0], mx = frame.pixels[0];
    for (float v : frame.pixels) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    const float span = mx > mn ? mx - mn : 1.0f;
    const auto palette = class_palette();

    std::vector<uint8_t> rgb(static_cast<size_t>(frame.height) * frame.width * 3);
    for (size_t i = 0; i < frame.pixels.size(); ++i) {
        const auto gray =
            static_cast<uint8_t>(std::lround((frame.pixels[i] - mn) / span * 255.0f));
        const uint8_t cls = mask.labels[i];
        for (int ch = 0; ch < 3; ++ch) {
            rgb[i * 3 + ch] = cls == 0
                                  ? gray
                                  : static_cast<uint8_t>((gray + palette[cls][ch]) / 2);
        }
    }
    return rgb;
}

std::vector<std::string> render_overlays(const std::vector<FrameImage>& frames,
                                         const std::vector<LabelMap>& gt,
                                         const std::vector<LabelMap>& predictions,
                                         const std::string& out_dir) {
    if (frames.size() != gt.size() || frames.size() != predictions.size())
        throw Error(ErrorCode::LengthMismatch, "frames, ground truth and predictions must align");
    fs::create_directories(out_dir);

    std::vector<std::string> paths;
    for (size_t i = 0; i < frames.size(); ++i) {
        const int h = frames[i].height, w = frames[i].width;
        LabelMap empty;
        empty.height = h;
        empty.width = w;
        empty.labels.assign(static_cast<size_t>(h) * w, 0);

        const auto input_panel = overlay_panel(frames[i], empty);
        const auto gt_panel = overlay_panel(frames[i], gt[i]);
        const auto pred_panel = overlay_panel(frames[i], predictions[i]);

        std::vector<uint8_t> composite(static_cast<size_t>(h) * w * 9);
        for (int y = 0; y < h; ++y) {
            const auto copy_row = [&](const std::vector<uint8_t>& src, int panel) {
                std::memcpy(&composite[(static_cast<size_t>(y) * 3 * w + panel * w) * 3],
                            &src[static_cast<size_t>(y) * w * 3], static_cast<size_t>(w) * 3);
            };
            copy_row(input_panel, 0);
            copy_row(gt_panel, 1);
            copy_row(pred_panel, 2);
        }

        std::ostringstream name;
        name << "overlay_" << std::setfill('0') << std::setw(4) << i << ".png";
        const std::string path = (fs::path(out_dir) / name.str()).string();
        write_png_rgb(path, composite.data(), h, 3 * w);
        paths.push_back(path);
    }
    return paths;
}

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

} // namespace

RunConfig read_run_config(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw Error(ErrorCode::IoReadFailure, "cannot read config " + path);

    json j = json::object();
    std::string line;
    size_t line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string text = trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::InvalidConfig,
                        path + ":" + std::to_string(line_no) + " expected key = value");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));

        if (key == "model" || key == "loss" || key == "data_route" || key == "slice_strategy") {
            j[key] = value;
        } else if (key == "resolution" || key == "batch_size" || key == "epochs" ||
                   key == "lr_step") {
            j[key] = std::stoi(value);
        } else if (key == "lr" || key == "weight_decay" || key == "lr_gamma" ||
                   key == "grad_clip_norm") {
            j[key] = std::stod(value);
        } else if (key == "seed") {
            j[key] = static_cast<uint64_t>(std::stoull(value));
        } else if (key == "ssl_init" || key == "pseudo_enabled") {
            j[key] = value == "true" || value == "1" || value == "yes";
        } else {
            throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "' in " + path);
        }
    }
    const RunConfig config = run_config_from_json(j);
    validate_config(config);
    return config;
}

void write_run_config(const std::string& path, const RunConfig& config) {
    std::ofstream file(path);
    if (!file) throw Error(ErrorCode::IoWriteFailure, "cannot write config " + path);
    file << "model = " << to_string(config.model) << "\n"
         << "resolution = " << config.resolution << "\n"
         << "loss = " << to_string(config.loss) << "\n"
         << "lr = " << config.lr << "\n"
         << "weight_decay = " << config.weight_decay << "\n"
         << "batch_size = " << config.batch_size << "\n"
         << "epochs = " << config.epochs << "\n"
         << "lr_step = " << config.lr_step << "\n"
         << "lr_gamma = " << config.lr_gamma << "\n"
         << "grad_clip_norm = " << config.grad_clip_norm << "\n"
         << "seed = " << config.seed << "\n"
         << "data_route = " << to_string(config.data_route) << "\n"
         << "slice_strategy = " << to_string(config.slice_strategy) << "\n"
         << "ssl_init = " << (config.ssl_init ? "true" : "false") << "\n"
         << "pseudo_enabled = " << (config.pseudo_enabled ? "true" : "false") << "\n";
}

std::string run_report_json(const RunReport& report) {
    json j;
    j["config"] = run_config_to_json(report.config);
    j["per_epoch"] = json::array();
    for (const auto& e : report.per_epoch) {
        j["per_epoch"].push_back({{"epoch", e.epoch},
                                  {"lr", e.lr},
                                  {"train_loss", e.train_loss},
                                  {"val_mean_dice", e.val_mean_dice}});
    }
    j["final"] = json::object();
    for (const auto& [split, metrics] : report.final_by_split)
        j["final"][split] = metric_report_to_json(metrics);
    j["environment"] = {{"seed", report.config.seed},
                        {"code_version", report.code_version},
                        {"dataset_fingerprint", report.dataset_fingerprint}};
    j["checkpoint"] = report.checkpoint_path;
    j["iterations_run"] = report.iterations_run;
    j["early_stopped"] = report.early_stopped;
    j["best_val_mean_dice"] = report.best_val_mean_dice;
    return j.dump(2);
}

RunReport run_report_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::MalformedRecord, "invalid run report JSON");
    RunReport report;
    report.config = run_config_from_json(j["config"]);
    for (const auto& e : j["per_epoch"]) {
        EpochStats stats;
        stats.epoch = e["epoch"].get<int>();
        stats.lr = e["lr"].get<double>();
        stats.train_loss = e["train_loss"].get<double>();
        stats.val_mean_dice = e["val_mean_dice"].get<double>();
        report.per_epoch.push_back(stats);
    }
    for (const auto& [split, metrics] : j["final"].items())
        report.final_by_split[split] = metric_report_from_json(metrics);
    report.dataset_fingerprint = j["environment"].value("dataset_fingerprint", "");
    report.code_version = j["environment"].value("code_version", "");
    report.checkpoint_path = j.value("checkpoint", "");
    report.iterations_run = j.value("iterations_run", 0);
    report.early_stopped = j.value("early_stopped", false);
    report.best_val_mean_dice = j.value("best_val_mean_dice", 0.0);
    return report;
}

std::string run_report_table(const RunReport& report) {
    std::ostringstream oss;
    oss << "model=" << to_string(report.config.model) << " route="
        << to_string(report.config.data_route) << " loss=" << to_string(report.config.loss)
        << " resolution=" << report.config.resolution << " seed=" << report.config.seed << "\n"
        << "dataset_fingerprint=" << report.dataset_fingerprint << "\n\n";

    oss << std::left << std::setw(8) << "split" << std::right << std::setw(12) << "background"
        << std::setw(12) << "lv_endo" << std::setw(12) << "lv_myo" << std::setw(12) << "la"
        << std::setw(10) << "mdice" << std::setw(12) << "mdice_fg" << "\n";
    for (const auto& [split, m] : report.final_by_split) {
        oss << std::left << std::setw(8) << split << std::right << std::fixed
            << std::setprecision(4);
        for (int c = 0; c < kNumClasses; ++c) oss << std::setw(12) << m.per_class_dice[c];
        oss << std::setw(10) << m.mean_dice << std::setw(12) << m.mean_dice_foreground << "\n";
        oss.unsetf(std::ios::fixed);
    }

    oss << "\n" << std::left << std::setw(8) << "epoch" << std::right << std::setw(12) << "lr"
        << std::setw(14) << "train_loss" << std::setw(16) << "val_mean_dice" << "\n";
    for (const auto& e : report.per_epoch) {
        oss << std::left << std::setw(8) << e.epoch << std::right << std::scientific
            << std::setprecision(3) << std::setw(12) << e.lr << std::fixed << std::setprecision(5)
            << std::setw(14) << e.train_loss << std::setw(16) << e.val_mean_dice << "\n";
        oss.unsetf(std::ios::fixed);
    }
    return oss.str();
}

void write_run_report(const RunReport& report, const std::string& dir) {
    fs::create_directories(dir);
    {
        std::ofstream json_file(fs::path(dir) / "report.json");
        if (!json_file) throw Error(ErrorCode::IoWriteFailure, "cannot write report.json");
        json_file << run_report_json(report) << "\n";
    }
    {
        std::ofstream table_file(fs::path(dir) / "report.txt");
        if (!table_file) throw Error(ErrorCode::IoWriteFailure, "cannot write report.txt");
        table_file << run_report_table(report);
    }
}

} // namespace echoseg
