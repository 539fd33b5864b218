#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "echoseg/augment.hpp"
#include "echoseg/dataset.hpp"
#include "echoseg/nifti.hpp"
#include "echoseg/losses.hpp"
#include "echoseg/manifest.hpp"
#include "echoseg/metrics.hpp"
#include "echoseg/models.hpp"
#include "echoseg/preprocessing.hpp"
#include "echoseg/pseudo_label.hpp"
#include "echoseg/ssl.hpp"
#include "echoseg/training.hpp"

namespace py = pybind11;
using namespace echoseg;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<int32_t, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

FrameImage frame_from_array(const FloatArray& array) {
    if (array.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "expected a 2-D array");
    FrameImage frame;
    frame.height = static_cast<int>(array.shape(0));
    frame.width = static_cast<int>(array.shape(1));
    frame.pixels.assign(array.data(), array.data() + array.size());
    return frame;
}

py::array_t<float> array_from_frame(const FrameImage& frame) {
    py::array_t<float> out({frame.height, frame.width});
    std::copy(frame.pixels.begin(), frame.pixels.end(), out.mutable_data());
    return out;
}

LabelMap labelmap_from_array(const LabelArray& array) {
    if (array.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "expected a 2-D array");
    std::vector<int> values(array.data(), array.data() + array.size());
    return validate_labelmap(values, static_cast<int>(array.shape(0)),
                             static_cast<int>(array.shape(1)));
}

py::array_t<int32_t> array_from_labelmap(const LabelMap& map) {
    py::array_t<int32_t> out({map.height, map.width});
    auto* data = out.mutable_data();
    for (size_t i = 0; i < map.labels.size(); ++i) data[i] = map.labels[i];
    return out;
}

SamMaskCandidate candidate_from_parts(const BoolArray& mask, double predicted_iou,
                                      double stability_score) {
    if (mask.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "mask must be 2-D");
    SamMaskCandidate c;
    c.height = static_cast<int>(mask.shape(0));
    c.width = static_cast<int>(mask.shape(1));
    c.mask.resize(mask.size());
    for (py::ssize_t i = 0; i < mask.size(); ++i) c.mask[i] = mask.data()[i] ? 1 : 0;
    c.area = std::accumulate(c.mask.begin(), c.mask.end(), int64_t{0});
    c.predicted_iou = predicted_iou;
    c.stability_score = stability_score;
    return c;
}

torch::Tensor logits_from_array(const FloatArray& array) {
    if (array.ndim() != 4) throw Error(ErrorCode::ShapeMismatch, "logits must be (B, 4, H, W)");
    auto tensor = torch::empty(
        {array.shape(0), array.shape(1), array.shape(2), array.shape(3)}, torch::kFloat32);
    std::memcpy(tensor.data_ptr<float>(), array.data(), array.size() * sizeof(float));
    return tensor;
}

torch::Tensor targets_from_array(const LabelArray& array) {
    if (array.ndim() != 3) throw Error(ErrorCode::ShapeMismatch, "targets must be (B, H, W)");
    auto tensor = torch::empty({array.shape(0), array.shape(1), array.shape(2)}, torch::kInt64);
    auto* dst = tensor.data_ptr<int64_t>();
    for (py::ssize_t i = 0; i < array.size(); ++i) dst[i] = array.data()[i];
    return tensor;
}

py::dict dict_from_metric_report(const MetricReport& r) {
    py::dict d;
    d["dice"] = std::vector<double>(r.per_class_dice.begin(), r.per_class_dice.end());
    d["iou"] = std::vector<double>(r.per_class_iou.begin(), r.per_class_iou.end());
    d["mean_dice"] = r.mean_dice;
    d["mean_dice_foreground"] = r.mean_dice_foreground;
    if (r.hd) d["hd"] = std::vector<double>(r.hd->begin(), r.hd->end());
    if (r.asd) d["asd"] = std::vector<double>(r.asd->begin(), r.asd->end());
    return d;
}

RunConfig config_from_kwargs(const py::dict& kwargs) {
    RunConfig c;
    for (const auto& item : kwargs) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "model") c.model = model_kind_from_string(py::cast<std::string>(item.second));
        else if (key == "resolution") c.resolution = py::cast<int>(item.second);
        else if (key == "loss") c.loss = loss_kind_from_string(py::cast<std::string>(item.second));
        else if (key == "lr") c.lr = py::cast<double>(item.second);
        else if (key == "weight_decay") c.weight_decay = py::cast<double>(item.second);
        else if (key == "batch_size") c.batch_size = py::cast<int>(item.second);
        else if (key == "epochs") c.epochs = py::cast<int>(item.second);
        else if (key == "lr_step") c.lr_step = py::cast<int>(item.second);
        else if (key == "lr_gamma") c.lr_gamma = py::cast<double>(item.second);
        else if (key == "grad_clip_norm") c.grad_clip_norm = py::cast<double>(item.second);
        else if (key == "seed") c.seed = py::cast<uint64_t>(item.second);
        else if (key == "data_route") c.data_route = data_route_from_string(py::cast<std::string>(item.second));
        else if (key == "slice_strategy") c.slice_strategy = slice_strategy_from_string(py::cast<std::string>(item.second));
        else if (key == "ssl_init") c.ssl_init = py::cast<bool>(item.second);
        else if (key == "pseudo_enabled") c.pseudo_enabled = py::cast<bool>(item.second);
        else throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
    }
    validate_config(c);
    return c;
}

} // namespace

PYBIND11_MODULE(_echoseg, m) {
    m.doc() = "Cardiac ultrasound segmentation benchmark harness";

    py::register_exception<Error>(m, "EchosegError");

    // ------------------------------------------------------------ core types
    m.def("validate_labelmap", [](const LabelArray& labels) {
        return array_from_labelmap(labelmap_from_array(labels));
    });

    // --------------------------------------------------------- preprocessing
    m.def("percentile", [](std::vector<double> values, double pct) {
        return percentile(std::move(values), pct);
    });
    m.def("robust_normalize", [](const FloatArray& frame) {
        return array_from_frame(robust_normalize(frame_from_array(frame)));
    });
    m.def(
        "resize_pair",
        [](const FloatArray& frame, const LabelArray& mask, int target) {
            auto [f, mk] = resize_pair(frame_from_array(frame), labelmap_from_array(mask), target);
            return py::make_tuple(array_from_frame(f), array_from_labelmap(*mk));
        },
        py::arg("frame"), py::arg("mask"), py::arg("target"));
    m.def("export_png16", [](const FloatArray& frame, const std::string& path) {
        return export_png16(frame_from_array(frame), path);
    });
    m.def("load_png16_frame",
          [](const std::string& path) { return array_from_frame(load_png16_frame(path)); });
    m.def("load_png16_frame_restored",
          [](const std::string& path) { return array_from_frame(load_png16_frame_restored(path)); });
    m.def("export_mask_png", [](const LabelArray& mask, const std::string& path) {
        return export_mask_png(labelmap_from_array(mask), path);
    });
    m.def("load_mask_png",
          [](const std::string& path) { return array_from_labelmap(load_mask_png(path)); });
    m.def(
        "write_nifti",
        [](const FloatArray& volume, const std::string& path, bool as_uint8) {
            NiftiVolume v;
            if (volume.ndim() == 2) {
                v.frames = 1;
                v.height = static_cast<int>(volume.shape(0));
                v.width = static_cast<int>(volume.shape(1));
            } else if (volume.ndim() == 3) {
                v.frames = static_cast<int>(volume.shape(0));
                v.height = static_cast<int>(volume.shape(1));
                v.width = static_cast<int>(volume.shape(2));
            } else {
                throw Error(ErrorCode::ShapeMismatch, "volume must be (H, W) or (T, H, W)");
            }
            v.data.assign(volume.data(), volume.data() + volume.size());
            write_nifti(path, v, as_uint8);
        },
        py::arg("volume"), py::arg("path"), py::arg("as_uint8") = false);
    m.def(
        "load_nifti_frames",
        [](const std::string& path, const std::string& strategy) {
            py::list out;
            for (const auto& [frame, mask] :
                 load_nifti_frames(path, slice_strategy_from_string(strategy))) {
                out.append(py::make_tuple(array_from_frame(frame),
                                          mask ? py::object(array_from_labelmap(*mask))
                                               : py::object(py::none())));
            }
            return out;
        },
        py::arg("path"), py::arg("strategy") = "all");
    m.def(
        "augment",
        [](const FloatArray& frame, const LabelArray& mask, uint64_t seed) {
            auto [f, mk] = augment(frame_from_array(frame), labelmap_from_array(mask), seed);
            return py::make_tuple(array_from_frame(f), array_from_labelmap(mk));
        },
        py::arg("frame"), py::arg("mask"), py::arg("seed"));

    // -------------------------------------------------------------- manifest
    m.def("normalize_stem", &normalize_stem);
    m.def("parse_patient_id", &parse_patient_id, py::arg("filename"),
          py::arg("prefix_override") = "");
    m.def(
        "build_manifest",
        [](const std::string& images, const std::string& masks, const std::string& source) {
            const Manifest manifest =
                build_manifest(images, masks, sample_source_from_string(source));
            py::list records;
            for (const auto& r : manifest.records) {
                py::dict d;
                d["image_path"] = r.image_path;
                d["mask_path"] = r.mask_path;
                d["source"] = to_string(r.source);
                d["weight"] = r.weight;
                d["patient_id"] = r.patient_id;
                d["split"] = to_string(r.split);
                records.append(d);
            }
            py::dict out;
            out["records"] = records;
            out["orphans"] = manifest.orphans;
            return out;
        },
        py::arg("image_dir"), py::arg("mask_dir"), py::arg("source") = "gt");
    m.def(
        "split_manifest_csv",
        [](const std::string& path, double train, double val, double test, uint64_t seed,
           const std::string& out_path) {
            Manifest manifest = read_manifest_csv(path);
            manifest = split_by_patient(manifest, {train, val, test}, seed);
            write_manifest_csv(manifest, out_path.empty() ? path : out_path);
        },
        py::arg("path"), py::arg("train") = 0.8, py::arg("val") = 0.1, py::arg("test") = 0.1,
        py::arg("seed") = 0, py::arg("out_path") = "");
    m.def(
        "write_manifest_csv",
        [](const py::list& records, const std::string& path) {
            Manifest manifest;
            for (const auto& item : records) {
                const py::dict d = py::cast<py::dict>(item);
                SampleRecord r;
                r.image_path = py::cast<std::string>(d["image_path"]);
                r.mask_path = py::cast<std::string>(d["mask_path"]);
                if (d.contains("source"))
                    r.source = sample_source_from_string(py::cast<std::string>(d["source"]));
                r.weight = d.contains("weight") ? py::cast<double>(d["weight"])
                           : (r.source == SampleSource::GroundTruth ? kGroundTruthWeight
                                                                    : kPseudoWeight);
                r.patient_id = d.contains("patient_id") ? py::cast<std::string>(d["patient_id"])
                                                        : parse_patient_id(r.image_path);
                if (d.contains("split"))
                    r.split = split_from_string(py::cast<std::string>(d["split"]));
                manifest.records.push_back(std::move(r));
            }
            write_manifest_csv(manifest, path);
        },
        py::arg("records"), py::arg("path"));

    // ---------------------------------------------------------- pseudo label
    m.def(
        "filter_masks",
        [](const py::list& candidates, double iou_threshold, int64_t min_area, int top_k) {
            std::vector<SamMaskCandidate> in;
            for (const auto& item : candidates) {
                const py::tuple t = py::cast<py::tuple>(item);
                in.push_back(candidate_from_parts(py::cast<BoolArray>(t[0]),
                                                  py::cast<double>(t[1]), py::cast<double>(t[2])));
            }
            const auto out = filter_masks(in, {iou_threshold, min_area, top_k});
            py::list result;
            for (const auto& c : out) {
                py::array_t<bool> mask({c.height, c.width});
                for (size_t i = 0; i < c.mask.size(); ++i) mask.mutable_data()[i] = c.mask[i];
                result.append(py::make_tuple(mask, c.predicted_iou, c.stability_score));
            }
            return result;
        },
        py::arg("candidates"), py::arg("iou_threshold") = 0.7, py::arg("min_area") = 200,
        py::arg("top_k") = 3);
    m.def(
        "merge_to_labelmap",
        [](const py::list& candidates, int height, int width) {
            std::vector<SamMaskCandidate> in;
            for (const auto& item : candidates) {
                const py::tuple t = py::cast<py::tuple>(item);
                in.push_back(candidate_from_parts(py::cast<BoolArray>(t[0]),
                                                  py::cast<double>(t[1]), py::cast<double>(t[2])));
            }
            return array_from_labelmap(merge_to_labelmap(in, {height, width}));
        },
        py::arg("candidates"), py::arg("height"), py::arg("width"));
    m.def(
        "curate_sam_record",
        [](const std::string& json_path, int height, int width, const std::string& out_dir,
           double iou_threshold, int64_t min_area, int top_k) {
            const auto result = curate_sam_record(json_path, {height, width},
                                                  {iou_threshold, min_area, top_k}, out_dir);
            py::dict d;
            d["labelmap_path"] = result.labelmap_path;
            d["visualization_path"] = result.visualization_path;
            d["candidates_in"] = result.candidates_in;
            d["candidates_kept"] = result.candidates_kept;
            return d;
        },
        py::arg("json_path"), py::arg("height"), py::arg("width"), py::arg("out_dir"),
        py::arg("iou_threshold") = 0.7, py::arg("min_area") = 200, py::arg("top_k") = 3);
    m.def("score_pseudo_labels",
          [](const std::string& pseudo_csv, const std::string& gt_csv) {
              const PseudoScore score =
                  score_pseudo_labels(read_manifest_csv(pseudo_csv), read_manifest_csv(gt_csv));
              py::dict d;
              d["dice"] = std::vector<double>(score.dice.begin(), score.dice.end());
              d["frames"] = score.frames;
              return d;
          });

    // ----------------------------------------------------------------- metrics
    m.def("confusion_matrix", [](const LabelArray& pred, const LabelArray& gt) {
        const ConfusionMatrix cm =
            confusion_matrix(labelmap_from_array(pred), labelmap_from_array(gt));
        py::array_t<int64_t> out({kNumClasses, kNumClasses});
        for (int g = 0; g < kNumClasses; ++g)
            for (int p = 0; p < kNumClasses; ++p)
                out.mutable_data()[g * kNumClasses + p] = cm.counts[g][p];
        return out;
    });
    m.def("dice_per_class", [](const LabelArray& pred, const LabelArray& gt) {
        const auto dice =
            dice_per_class(confusion_matrix(labelmap_from_array(pred), labelmap_from_array(gt)));
        return std::vector<double>(dice.begin(), dice.end());
    });
    m.def("iou_per_class", [](const LabelArray& pred, const LabelArray& gt) {
        const auto iou =
            iou_per_class(confusion_matrix(labelmap_from_array(pred), labelmap_from_array(gt)));
        return std::vector<double>(iou.begin(), iou.end());
    });
    m.def(
        "hausdorff_distance",
        [](const LabelArray& pred, const LabelArray& gt, int cls) {
            return hausdorff_distance(labelmap_from_array(pred), labelmap_from_array(gt), cls);
        },
        py::arg("pred"), py::arg("gt"), py::arg("cls"));
    m.def(
        "average_surface_distance",
        [](const LabelArray& pred, const LabelArray& gt, int cls) {
            return average_surface_distance(labelmap_from_array(pred), labelmap_from_array(gt), cls);
        },
        py::arg("pred"), py::arg("gt"), py::arg("cls"));

    // ------------------------------------------------------------------ losses
    m.def("cross_entropy", [](const FloatArray& logits, const LabelArray& target) {
        return cross_entropy(logits_from_array(logits), targets_from_array(target)).item<double>();
    });
    m.def(
        "dice_loss",
        [](const FloatArray& logits, const LabelArray& target, double smooth) {
            return dice_loss(logits_from_array(logits), targets_from_array(target), smooth)
                .item<double>();
        },
        py::arg("logits"), py::arg("target"), py::arg("smooth") = 1e-6);
    m.def(
        "focal_loss",
        [](const FloatArray& logits, const LabelArray& target, double gamma) {
            return focal_loss(logits_from_array(logits), targets_from_array(target), gamma)
                .item<double>();
        },
        py::arg("logits"), py::arg("target"), py::arg("gamma") = 2.0);
    m.def(
        "composite_loss",
        [](const FloatArray& logits, const LabelArray& target, const std::string& kind) {
            return composite_loss(logits_from_array(logits), targets_from_array(target),
                                  LossConfig::from_kind(loss_kind_from_string(kind)))
                .item<double>();
        },
        py::arg("logits"), py::arg("target"), py::arg("kind") = "ce_dice");
    m.def("weighted_batch_loss",
          [](const std::vector<double>& losses, const std::vector<double>& weights) {
              return weighted_batch_loss(torch::tensor(losses, torch::kFloat64), weights)
                  .item<double>();
          });
    m.def(
        "ntxent_loss",
        [](const FloatArray& projections, double temperature) {
            if (projections.ndim() != 2)
                throw Error(ErrorCode::ShapeMismatch, "projections must be (2B, D)");
            auto tensor = torch::empty({projections.shape(0), projections.shape(1)});
            std::memcpy(tensor.data_ptr<float>(), projections.data(),
                        projections.size() * sizeof(float));
            return ntxent_loss(tensor, temperature).item<double>();
        },
        py::arg("projections"), py::arg("temperature") = 0.5);

    // ------------------------------------------------------------------ models
    m.def(
        "count_parameters",
        [](const std::string& kind) {
            return count_parameters(ModelSpec::defaults(model_kind_from_string(kind)));
        },
        py::arg("model"));
    m.def(
        "forward",
        [](const std::string& kind, const FloatArray& batch, uint64_t seed,
           const std::vector<int>& encoder_channels) {
            if (batch.ndim() != 4)
                throw Error(ErrorCode::ShapeMismatch, "batch must be (B, 1, H, W)");
            torch::manual_seed(seed);
            ModelSpec spec = ModelSpec::defaults(model_kind_from_string(kind));
            if (!encoder_channels.empty()) spec.encoder_channels = encoder_channels;
            auto model = build_model(spec);
            model->eval();
            torch::NoGradGuard no_grad;
            auto input = torch::empty(
                {batch.shape(0), batch.shape(1), batch.shape(2), batch.shape(3)});
            std::memcpy(input.data_ptr<float>(), batch.data(), batch.size() * sizeof(float));
            const auto out = model->forward(input).contiguous();
            py::array_t<float> result({out.size(0), out.size(1), out.size(2), out.size(3)});
            std::memcpy(result.mutable_data(), out.data_ptr<float>(),
                        out.numel() * sizeof(float));
            return result;
        },
        py::arg("model"), py::arg("batch"), py::arg("seed") = 0,
        py::arg("encoder_channels") = std::vector<int>{});

    // ---------------------------------------------------------------- training
    m.def("lr_at_epoch", &lr_at_epoch, py::arg("base_lr"), py::arg("epoch"), py::arg("step"),
          py::arg("gamma"));
    m.def(
        "pretrain_encoder",
        [](const std::vector<FloatArray>& frames, const std::string& out_path, int epochs,
           int batch_size, double lr, uint64_t seed, const std::vector<int>& encoder_channels) {
            std::vector<FrameImage> converted;
            for (const auto& f : frames) converted.push_back(frame_from_array(f));
            ModelSpec spec = ModelSpec::defaults(ModelKind::UNet);
            if (!encoder_channels.empty()) spec.encoder_channels = encoder_channels;
            PretrainOptions options;
            options.epochs = epochs;
            options.batch_size = batch_size;
            options.lr = lr;
            options.seed = seed;
            PretrainTrace trace;
            EncoderState state;
            {
                py::gil_scoped_release release;
                state = pretrain_encoder(converted, spec, options, &trace);
                if (!out_path.empty()) save_encoder_state(out_path, state);
            }
            py::dict d;
            d["initial_probe_loss"] = trace.initial_probe_loss;
            d["final_probe_loss"] = trace.final_probe_loss;
            return d;
        },
        py::arg("frames"), py::arg("out_path") = "", py::arg("epochs") = 3,
        py::arg("batch_size") = 8, py::arg("lr") = 1e-3, py::arg("seed") = 0,
        py::arg("encoder_channels") = std::vector<int>{});
    m.def(
        "train",
        [](const std::string& manifest_csv, const py::dict& config, const std::string& out_dir,
           const std::vector<int>& encoder_channels, int max_iterations) {
            const RunConfig run_config = config_from_kwargs(config);
            TrainOptions options;
            options.out_dir = out_dir;
            if (!encoder_channels.empty()) {
                ModelSpec spec = ModelSpec::defaults(run_config.model);
                spec.encoder_channels = encoder_channels;
                options.model_spec = spec;
            }
            if (max_iterations > 0) options.max_iterations = max_iterations;
            RunReport report;
            {
                py::gil_scoped_release release;
                report = train(run_config, read_manifest_csv(manifest_csv), std::nullopt, options);
            }
            py::dict d;
            d["checkpoint"] = report.checkpoint_path;
            d["iterations_run"] = report.iterations_run;
            d["best_val_mean_dice"] = report.best_val_mean_dice;
            py::list epochs;
            for (const auto& e : report.per_epoch) {
                py::dict ed;
                ed["epoch"] = e.epoch;
                ed["lr"] = e.lr;
                ed["train_loss"] = e.train_loss;
                ed["val_mean_dice"] = e.val_mean_dice;
                epochs.append(ed);
            }
            d["per_epoch"] = epochs;
            py::dict final;
            for (const auto& [split, metrics] : report.final_by_split)
                final[py::str(split)] = dict_from_metric_report(metrics);
            d["final"] = final;
            d["dataset_fingerprint"] = report.dataset_fingerprint;
            return d;
        },
        py::arg("manifest_csv"), py::arg("config"), py::arg("out_dir") = "",
        py::arg("encoder_channels") = std::vector<int>{}, py::arg("max_iterations") = 0);
    m.def(
        "evaluate",
        [](const std::string& checkpoint, const std::string& manifest_csv,
           const std::string& split, bool per_patient, bool boundary_metrics) {
            const MetricReport metrics =
                evaluate(checkpoint, read_manifest_csv(manifest_csv), split_from_string(split),
                         per_patient ? AggregationMode::PerPatientMean
                                     : AggregationMode::PerFrameMean,
                         boundary_metrics);
            return dict_from_metric_report(metrics);
        },
        py::arg("checkpoint"), py::arg("manifest_csv"), py::arg("split") = "test",
        py::arg("per_patient") = false, py::arg("boundary_metrics") = false);
}
