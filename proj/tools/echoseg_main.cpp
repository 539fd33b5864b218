#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "echoseg/augment.hpp"
#include "echoseg/dataset.hpp"
#include "echoseg/manifest.hpp"
#include "echoseg/metrics.hpp"
#include "echoseg/models.hpp"
#include "echoseg/preprocessing.hpp"
#include "echoseg/pseudo_label.hpp"
#include "echoseg/ssl.hpp"
#include "echoseg/training.hpp"

namespace fs = std::filesystem;
using namespace echoseg;

namespace {

std::string resolve_path(const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    if (const char* root = std::getenv("ECHOSEG_DATA_ROOT")) {
        const fs::path joined = fs::path(root) / path;
        if (fs::exists(joined)) return joined.string();
    }
    return path;
}

std::string timestamped_run_dir(const std::string& base) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    localtime_r(&t, &tm);
    std::ostringstream oss;
    oss << base << "/run_" << std::put_time(&tm, "%Y%m%d_%H%M%S");
    return oss.str();
}

bool is_nifti(const fs::path& p) {
    const std::string name = p.filename().string();
    return name.size() > 4 && (name.ends_with(".nii") || name.ends_with(".nii.gz"));
}

bool is_mask_volume(const fs::path& p) {
    const std::string stem = p.filename().string();
    return stem.find("_gt.nii") != std::string::npos;
}

int cmd_convert(const std::string& input, const std::string& out_dir, SliceStrategy strategy,
                bool export_masks) {
    const std::string in = resolve_path(input);
    std::vector<fs::path> volumes;
    if (fs::is_directory(in)) {
        for (const auto& entry : fs::recursive_directory_iterator(in)) {
            if (entry.is_regular_file() && is_nifti(entry.path()) && !is_mask_volume(entry.path()))
                volumes.push_back(entry.path());
        }
        std::sort(volumes.begin(), volumes.end());
    } else {
        volumes.push_back(in);
    }
    if (volumes.empty()) {
        std::cerr << "no NIfTI volumes under " << in << "\n";
        return 1;
    }

    const fs::path images_dir = fs::path(out_dir) / "images";
    const fs::path masks_dir = fs::path(out_dir) / "masks";
    fs::create_directories(images_dir);
    if (export_masks) fs::create_directories(masks_dir);

    size_t frames_written = 0, masks_written = 0;
    for (const auto& volume : volumes) {
        const auto frames = load_nifti_frames(volume.string(), strategy);
        const std::string stem = normalize_stem(volume.string());
        for (const auto& [frame, mask] : frames) {
            std::ostringstream name;
            name << stem << "_t" << std::setfill('0') << std::setw(3) << frame.frame_index;
            export_png16(frame, (images_dir / (name.str() + ".png")).string());
            ++frames_written;
            if (export_masks && mask) {
                export_mask_png(*mask, (masks_dir / (name.str() + "_gt.png")).string());
                ++masks_written;
            }
        }
    }
    std::cout << "wrote " << frames_written << " frames";
    if (export_masks) std::cout << " and " << masks_written << " masks";
    std::cout << " under " << out_dir << "\n";
    return 0;
}

void print_metric_report(const MetricReport& m) {
    const char* names[] = {"background", "lv_endo", "lv_myo", "la"};
    std::cout << std::left << std::setw(12) << "class" << std::right << std::setw(10) << "dice"
              << std::setw(10) << "iou";
    if (m.hd) std::cout << std::setw(10) << "hd";
    if (m.asd) std::cout << std::setw(10) << "asd";
    std::cout << "\n" << std::fixed << std::setprecision(4);
    for (int c = 0; c < kNumClasses; ++c) {
        std::cout << std::left << std::setw(12) << names[c] << std::right << std::setw(10)
                  << m.per_class_dice[c] << std::setw(10) << m.per_class_iou[c];
        if (m.hd) std::cout << std::setw(10) << (*m.hd)[c];
        if (m.asd) std::cout << std::setw(10) << (*m.asd)[c];
        std::cout << "\n";
    }
    std::cout << "mean dice (all classes): " << m.mean_dice
              << "\nmean dice (foreground):  " << m.mean_dice_foreground << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cardiac ultrasound segmentation benchmark harness"};
    app.require_subcommand(1);

    // ------------------------------------------------------------- convert
    auto* convert = app.add_subcommand("convert", "Export NIfTI cine volumes to 16-bit PNG frames");
    std::string convert_input, convert_out = "dataset";
    std::string convert_strategy = "middle";
    bool convert_masks = false;
    convert->add_option("--input", convert_input, "NIfTI file or directory")->required();
    convert->add_option("--out", convert_out, "output dataset directory");
    convert->add_option("--strategy", convert_strategy, "middle | all");
    convert->add_flag("--export-masks", convert_masks, "also export _gt mask volumes as 8-bit PNGs");

    // ------------------------------------------------------------ manifest
    auto* manifest_cmd = app.add_subcommand("manifest", "Build, split or validate pairing manifests");
    auto* mb = manifest_cmd->add_subcommand("build", "Pair images with masks by normalized stem");
    std::string mb_images, mb_masks, mb_out = "manifest.csv", mb_source = "gt", mb_prefix;
    mb->add_option("--images", mb_images)->required();
    mb->add_option("--masks", mb_masks)->required();
    mb->add_option("--out", mb_out);
    mb->add_option("--source", mb_source, "gt | pseudo");
    mb->add_option("--patient-prefix", mb_prefix, "patient token prefix (default 'patient')");

    auto* ms = manifest_cmd->add_subcommand("split", "Assign patient-level train/val/test splits");
    std::string ms_in, ms_out;
    std::string ms_ratios = "0.8,0.1,0.1";
    uint64_t ms_seed = 0;
    ms->add_option("--manifest", ms_in)->required();
    ms->add_option("--out", ms_out, "defaults to rewriting the input");
    ms->add_option("--ratios", ms_ratios, "train,val,test fractions");
    ms->add_option("--seed", ms_seed);

    auto* mv = manifest_cmd->add_subcommand("validate", "Check records, weights and patient leakage");
    std::string mv_in;
    mv->add_option("--manifest", mv_in)->required();

    // -------------------------------------------------------------- pseudo
    auto* pseudo = app.add_subcommand("pseudo", "SAM pseudo-label curation");
    auto* pc = pseudo->add_subcommand("curate", "Parse, filter and merge SAM JSON outputs");
    std::string pc_sam_dir, pc_out = "pseudo_labels";
    int pc_height = 0, pc_width = 0, pc_topk = 3;
    double pc_iou = 0.7;
    int64_t pc_min_area = 200;
    pc->add_option("--sam-dir", pc_sam_dir, "directory of per-frame JSON files")->required();
    pc->add_option("--out", pc_out);
    pc->add_option("--height", pc_height, "frame height (default: from the JSON)");
    pc->add_option("--width", pc_width, "frame width (default: from the JSON)");
    pc->add_option("--iou", pc_iou, "pred_iou retention threshold");
    pc->add_option("--min-area", pc_min_area, "area retention threshold (pixels)");
    pc->add_option("--top-k", pc_topk, "always retain the k highest-scoring masks");

    auto* pm = pseudo->add_subcommand("manifest", "Index curated label maps against images");
    std::string pm_labels, pm_images, pm_out = "pseudo_manifest.csv";
    pm->add_option("--labelmaps", pm_labels)->required();
    pm->add_option("--images", pm_images)->required();
    pm->add_option("--out", pm_out);

    auto* ps = pseudo->add_subcommand("score", "Per-class Dice of pseudo labels vs ground truth");
    std::string ps_pseudo, ps_gt;
    ps->add_option("--pseudo", ps_pseudo)->required();
    ps->add_option("--gt", ps_gt)->required();

    // ------------------------------------------------------------ pretrain
    auto* pretrain = app.add_subcommand("pretrain", "SimCLR contrastive pretraining of the encoder");
    std::string pt_images, pt_out = "encoder.bin";
    int pt_epochs = 5, pt_batch = 8, pt_resolution = 256, pt_limit = 0;
    double pt_lr = 1e-3, pt_temperature = 0.5;
    uint64_t pt_seed = 0;
    pretrain->add_option("--images", pt_images, "directory of 16-bit PNG frames")->required();
    pretrain->add_option("--out", pt_out);
    pretrain->add_option("--epochs", pt_epochs);
    pretrain->add_option("--batch-size", pt_batch);
    pretrain->add_option("--lr", pt_lr);
    pretrain->add_option("--temperature", pt_temperature);
    pretrain->add_option("--resolution", pt_resolution, "frames are resized to this square size");
    pretrain->add_option("--seed", pt_seed);
    pretrain->add_option("--limit", pt_limit, "use only the first N frames (0 = all)");

    // --------------------------------------------------------------- train
    auto* train_cmd = app.add_subcommand("train", "Train one model per a run config");
    std::string tr_config, tr_manifest, tr_out, tr_encoder;
    bool tr_verbose = false;
    train_cmd->add_option("--config", tr_config, "flat key = value run config")->required();
    train_cmd->add_option("--manifest", tr_manifest)->required();
    train_cmd->add_option("--out", tr_out, "run directory (default: runs/run_<timestamp>)");
    train_cmd->add_option("--encoder", tr_encoder, "pretrained encoder state for ssl_init runs");
    train_cmd->add_flag("--verbose", tr_verbose);

    // ---------------------------------------------------------------- eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
    std::string ev_ckpt, ev_manifest, ev_split = "test";
    bool ev_patient = false, ev_boundary = false;
    eval_cmd->add_option("--checkpoint", ev_ckpt)->required();
    eval_cmd->add_option("--manifest", ev_manifest)->required();
    eval_cmd->add_option("--split", ev_split, "train | val | test");
    eval_cmd->add_flag("--per-patient", ev_patient, "aggregate per patient instead of per frame");
    eval_cmd->add_flag("--boundary-metrics", ev_boundary, "also compute HD and ASD");

    // -------------------------------------------------------------- ablate
    auto* ablate = app.add_subcommand("ablate", "Loss x resolution x route sweep");
    std::string ab_config, ab_png16, ab_strict, ab_nifti, ab_out = "ablation";
    std::string ab_losses = "ce,ce_dice,ce_dice_focal";
    std::string ab_resolutions = "256,512";
    ablate->add_option("--config", ab_config, "base run config")->required();
    ablate->add_option("--manifest-png16", ab_png16);
    ablate->add_option("--manifest-png16-strict", ab_strict);
    ablate->add_option("--manifest-nifti", ab_nifti);
    ablate->add_option("--losses", ab_losses);
    ablate->add_option("--resolutions", ab_resolutions);
    ablate->add_option("--out", ab_out);

    // -------------------------------------------------------------- report
    auto* report_cmd = app.add_subcommand("report", "Render a run report as an aligned table");
    std::string rp_run;
    report_cmd->add_option("--run", rp_run, "run directory or report.json path")->required();

    // ------------------------------------------------------------- overlay
    auto* overlay_cmd = app.add_subcommand("overlay", "Side-by-side input/GT/prediction images");
    std::string ov_ckpt, ov_manifest, ov_split = "val", ov_out = "overlays";
    int ov_limit = 16;
    overlay_cmd->add_option("--checkpoint", ov_ckpt)->required();
    overlay_cmd->add_option("--manifest", ov_manifest)->required();
    overlay_cmd->add_option("--split", ov_split);
    overlay_cmd->add_option("--out", ov_out);
    overlay_cmd->add_option("--limit", ov_limit, "maximum frames to render");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*convert)
            return cmd_convert(convert_input, convert_out,
                               slice_strategy_from_string(convert_strategy), convert_masks);

        if (*mb) {
            const Manifest manifest =
                build_manifest(resolve_path(mb_images), resolve_path(mb_masks),
                               sample_source_from_string(mb_source), mb_prefix);
            write_manifest_csv(manifest, mb_out);
            std::cout << "manifest: " << manifest.records.size() << " records, "
                      << manifest.orphans.size() << " orphans -> " << mb_out << "\n";
            for (const auto& orphan : manifest.orphans) std::cout << "  orphan: " << orphan << "\n";
            return 0;
        }
        if (*ms) {
            Manifest manifest = read_manifest_csv(resolve_path(ms_in));
            SplitRatios ratios;
            if (std::sscanf(ms_ratios.c_str(), "%lf,%lf,%lf", &ratios.train, &ratios.val,
                            &ratios.test) != 3)
                throw Error(ErrorCode::InvalidConfig, "ratios must be three comma-separated numbers");
            manifest = split_by_patient(manifest, ratios, ms_seed);
            write_manifest_csv(manifest, ms_out.empty() ? ms_in : ms_out);
            std::array<size_t, 3> counts{};
            for (const auto& r : manifest.records) counts[static_cast<int>(r.split)]++;
            std::cout << "split records: train=" << counts[0] << " val=" << counts[1]
                      << " test=" << counts[2] << "\n";
            return 0;
        }
        if (*mv) {
            const Manifest manifest = read_manifest_csv(resolve_path(mv_in));
            size_t missing = 0;
            for (const auto& r : manifest.records) {
                validate_record(r);
                if (!fs::exists(r.image_path) || !fs::exists(r.mask_path)) ++missing;
            }
            std::map<std::string, std::set<Split>> patient_splits;
            for (const auto& r : manifest.records) patient_splits[r.patient_id].insert(r.split);
            size_t leaked = 0;
            for (const auto& [patient, splits] : patient_splits)
                if (splits.size() > 1) ++leaked;
            std::cout << manifest.records.size() << " records, " << patient_splits.size()
                      << " patients, " << missing << " records with missing files, " << leaked
                      << " patients in multiple splits\n";
            return missing == 0 && leaked == 0 ? 0 : 1;
        }

        if (*pc) {
            FilterPolicy policy{pc_iou, pc_min_area, pc_topk};
            size_t curated = 0;
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(resolve_path(pc_sam_dir))) {
                if (entry.path().extension() == ".json") files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& file : files) {
                std::pair<int, int> shape{pc_height, pc_width};
                if (shape.first == 0 || shape.second == 0) {
                    const auto candidates = parse_sam_record(file.string());
                    if (candidates.empty()) {
                        std::cerr << "skipping " << file << ": empty and no --height/--width\n";
                        continue;
                    }
                    shape = {candidates.front().height, candidates.front().width};
                }
                curate_sam_record(file.string(), shape, policy, pc_out);
                ++curated;
            }
            std::cout << "curated " << curated << " frames -> " << pc_out << "\n";
            return 0;
        }
        if (*pm) {
            const Manifest manifest =
                build_pseudo_manifest(resolve_path(pm_labels), resolve_path(pm_images));
            write_manifest_csv(manifest, pm_out);
            std::cout << "pseudo manifest: " << manifest.records.size() << " records (weight "
                      << kPseudoWeight << ") -> " << pm_out << "\n";
            return 0;
        }
        if (*ps) {
            const PseudoScore score = score_pseudo_labels(read_manifest_csv(resolve_path(ps_pseudo)),
                                                          read_manifest_csv(resolve_path(ps_gt)));
            const char* names[] = {"background", "lv_endo", "lv_myo", "la"};
            std::cout << "pseudo-label Dice over " << score.frames << " shared frames\n"
                      << std::fixed << std::setprecision(4);
            for (int c = 0; c < kNumClasses; ++c)
                std::cout << "  " << std::left << std::setw(12) << names[c] << score.dice[c] << "\n";
            return 0;
        }

        if (*pretrain) {
            std::vector<FrameImage> frames;
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(resolve_path(pt_images))) {
                if (entry.path().extension() == ".png") files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
            if (pt_limit > 0 && files.size() > static_cast<size_t>(pt_limit))
                files.resize(pt_limit);
            for (const auto& file : files) {
                FrameImage frame = robust_normalize(load_png16_frame(file.string()));
                auto [resized, ignored] = resize_pair(frame, std::nullopt, pt_resolution);
                frames.push_back(std::move(resized));
            }
            PretrainOptions options;
            options.epochs = pt_epochs;
            options.batch_size = pt_batch;
            options.lr = pt_lr;
            options.seed = pt_seed;
            options.contrastive.temperature = pt_temperature;
            PretrainTrace trace;
            const EncoderState state =
                pretrain_encoder(frames, ModelSpec::defaults(ModelKind::UNet), options, &trace);
            save_encoder_state(pt_out, state);
            std::cout << "pretrained on " << frames.size() << " frames; probe loss "
                      << trace.initial_probe_loss << " -> " << trace.final_probe_loss << "; saved "
                      << pt_out << "\n";
            return 0;
        }

        if (*train_cmd) {
            const RunConfig config = read_run_config(tr_config);
            const Manifest manifest = read_manifest_csv(resolve_path(tr_manifest));
            std::optional<EncoderState> encoder;
            if (!tr_encoder.empty()) encoder = load_encoder_state(tr_encoder);
            TrainOptions options;
            options.out_dir = tr_out.empty() ? timestamped_run_dir("runs") : tr_out;
            options.verbose = tr_verbose;
            const RunReport report = train(config, manifest, encoder, options);
            std::cout << run_report_table(report) << "\nartifacts: " << options.out_dir << "\n";
            return 0;
        }

        if (*eval_cmd) {
            const MetricReport metrics =
                evaluate(ev_ckpt, read_manifest_csv(resolve_path(ev_manifest)),
                         split_from_string(ev_split),
                         ev_patient ? AggregationMode::PerPatientMean : AggregationMode::PerFrameMean,
                         ev_boundary);
            print_metric_report(metrics);
            return 0;
        }

        if (*ablate) {
            const RunConfig base = read_run_config(ab_config);
            std::map<DataRoute, Manifest> manifests;
            if (!ab_png16.empty())
                manifests[DataRoute::Png16] = read_manifest_csv(resolve_path(ab_png16));
            if (!ab_strict.empty())
                manifests[DataRoute::Png16Strict] = read_manifest_csv(resolve_path(ab_strict));
            if (!ab_nifti.empty())
                manifests[DataRoute::NiftiDirect] = read_manifest_csv(resolve_path(ab_nifti));
            if (manifests.empty())
                throw Error(ErrorCode::InvalidConfig, "ablate needs at least one manifest");

            std::vector<LossKind> losses;
            std::stringstream loss_stream(ab_losses);
            std::string token;
            while (std::getline(loss_stream, token, ','))
                losses.push_back(loss_kind_from_string(token));
            std::vector<int> resolutions;
            std::stringstream res_stream(ab_resolutions);
            while (std::getline(res_stream, token, ',')) resolutions.push_back(std::stoi(token));

            const auto cells = run_ablation(base, manifests, losses, resolutions, ab_out);
            std::cout << ablation_table(cells);
            return 0;
        }

        if (*report_cmd) {
            fs::path path = rp_run;
            if (fs::is_directory(path)) path /= "report.json";
            std::ifstream file(path);
            if (!file) throw Error(ErrorCode::IoReadFailure, "cannot read " + path.string());
            std::stringstream buffer;
            buffer << file.rdbuf();
            std::cout << run_report_table(run_report_from_json(buffer.str()));
            return 0;
        }

        if (*overlay_cmd) {
            const Checkpoint checkpoint = load_checkpoint(ov_ckpt);
            nlohmann::json extra = nlohmann::json::parse(checkpoint.extra_json, nullptr, false);
            RunConfig config;
            if (!extra.is_discarded() && extra.is_object() && extra.contains("resolution"))
                config.resolution = extra["resolution"].get<int>();
            const Manifest manifest = read_manifest_csv(resolve_path(ov_manifest));
            const auto samples = load_split(manifest, split_from_string(ov_split), config);
            if (samples.empty()) throw Error(ErrorCode::EmptySplit, "nothing to overlay");

            std::vector<FrameImage> frames;
            std::vector<LabelMap> gts, preds;
            torch::NoGradGuard no_grad;
            checkpoint.model->eval();
            for (size_t i = 0; i < samples.size() && i < static_cast<size_t>(ov_limit); ++i) {
                const auto logits = checkpoint.model->forward(frames_to_tensor({&samples[i].frame}));
                frames.push_back(samples[i].frame);
                gts.push_back(samples[i].mask);
                preds.push_back(labelmap_from_prediction(logits[0]));
            }
            const auto paths = render_overlays(frames, gts, preds, ov_out);
            std::cout << "wrote " << paths.size() << " overlays under " << ov_out << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
