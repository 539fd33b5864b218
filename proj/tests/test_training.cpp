#include <filesystem>

#include "echoseg/training.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "torch_doctest.hpp"

#include <fstream>

#include "echoseg/augment.hpp"
#include "echoseg/losses.hpp"
#include "synthetic_shapes.hpp"

using namespace echoseg;
namespace fs = std::filesystem;

namespace {

ModelSpec toy_spec() {
    ModelSpec spec = ModelSpec::defaults(ModelKind::UNet);
    spec.encoder_channels = {4, 8, 16, 32};
    return spec;
}

RunConfig toy_config() {
    RunConfig config;
    config.model = ModelKind::UNet;
    config.resolution = 256;
    config.loss = LossKind::CEDice;
    config.lr = 1e-3;
    config.batch_size = 4;
    config.epochs = 1;
    config.seed = 21;
    return config;
}

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("echoseg_training_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("step decay schedule") {
    CHECK(lr_at_epoch(1e-4, 0, 10, 0.1) == doctest::Approx(1e-4));
    CHECK(lr_at_epoch(1e-4, 9, 10, 0.1) == doctest::Approx(1e-4));
    CHECK(lr_at_epoch(1e-4, 10, 10, 0.1) == doctest::Approx(1e-5));
    CHECK(lr_at_epoch(1e-4, 20, 10, 0.1) == doctest::Approx(1e-6));
    CHECK(lr_at_epoch(1e-4, 25, 10, 0.1) == doctest::Approx(1e-6));
    CHECK_THROWS_AS(lr_at_epoch(1e-4, -1, 10, 0.1), Error);
}

TEST_CASE("gradient clipping") {
    SUBCASE("norm below the threshold is untouched") {
        auto g = torch::tensor({0.3, 0.4});
        const double norm = clip_gradients({g}, 1.0);
        CHECK(norm == doctest::Approx(0.5));
        CHECK(torch::allclose(g, torch::tensor({0.3, 0.4})));
    }

    SUBCASE("(3,4) scales to (0.6,0.8)") {
        auto g = torch::tensor({3.0, 4.0});
        const double norm = clip_gradients({g}, 1.0);
        CHECK(norm == doctest::Approx(5.0));
        CHECK(torch::allclose(g, torch::tensor({0.6, 0.8})));
    }

    SUBCASE("post-clip norm equals min(norm, max) on random gradients") {
        torch::manual_seed(3);
        for (int t = 0; t < 10; ++t) {
            std::vector<torch::Tensor> grads = {torch::randn({17}) * 3, torch::randn({5, 5}) * 3};
            double before = 0.0;
            for (const auto& g : grads) before += g.pow(2).sum().item<double>();
            before = std::sqrt(before);

            clip_gradients(grads, 1.0);

            double after = 0.0;
            for (const auto& g : grads) after += g.pow(2).sum().item<double>();
            after = std::sqrt(after);
            CHECK(after <= 1.0 + 1e-6);
            CHECK(after <= before + 1e-9); // never increases
            CHECK(after == doctest::Approx(std::min(before, 1.0)).epsilon(1e-5));
        }
    }

    SUBCASE("non-finite gradients are fatal") {
        auto g = torch::tensor({1.0, std::numeric_limits<double>::quiet_NaN()});
        try {
            clip_gradients({g}, 1.0);
            FAIL("expected NONFINITE_GRADIENT");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NonfiniteGradient);
        }
    }
}

TEST_CASE("augmentation") {
    FrameImage frame;
    frame.height = 32;
    frame.width = 32;
    frame.pixels.resize(1024);
    for (int i = 0; i < 1024; ++i) frame.pixels[i] = static_cast<float>(i % 61);
    LabelMap mask;
    mask.height = 32;
    mask.width = 32;
    mask.labels.assign(1024, 0);
    for (int y = 10; y < 20; ++y)
        for (int x = 6; x < 16; ++x) mask.at(y, x) = 1;
    for (int y = 22; y < 30; ++y)
        for (int x = 20; x < 30; ++x) mask.at(y, x) = 3;

    SUBCASE("seed-fixed invocations are identical") {
        const auto a = augment(frame, mask, 77);
        const auto b = augment(frame, mask, 77);
        CHECK(a.first.pixels == b.first.pixels);
        CHECK(a.second.labels == b.second.labels);
    }

    SUBCASE("rotation angle stays within +-10 degrees") {
        for (uint64_t seed = 0; seed < 200; ++seed) {
            const AugmentParams p = draw_augment_params(seed);
            CHECK(std::abs(p.rotation_deg) <= 10.0);
        }
    }

    SUBCASE("forced flip applied twice is the identity") {
        AugmentParams flip;
        flip.hflip = true;
        flip.rotation_deg = 0.0;
        const auto once = apply_augment(frame, mask, flip);
        const auto twice = apply_augment(once.first, once.second, flip);
        CHECK(twice.first.pixels == frame.pixels);
        CHECK(twice.second.labels == mask.labels);
    }

    SUBCASE("masks keep only original label values") {
        for (uint64_t seed = 0; seed < 20; ++seed) {
            const auto [af, am] = augment(frame, mask, seed);
            for (uint8_t v : am.labels) CHECK((v == 0 || v == 1 || v == 3));
        }
    }
}

TEST_CASE("run config files round trip") {
    const fs::path dir = temp_dir("config");
    RunConfig config = toy_config();
    config.model = ModelKind::TransUNetLite;
    config.resolution = 512;
    config.ssl_init = true;
    const std::string path = (dir / "run.cfg").string();
    write_run_config(path, config);

    const RunConfig back = read_run_config(path);
    CHECK(back.model == config.model);
    CHECK(back.resolution == config.resolution);
    CHECK(back.lr == doctest::Approx(config.lr));
    CHECK(back.ssl_init == config.ssl_init);
    CHECK(back.seed == config.seed);

    SUBCASE("comments and blank lines are accepted") {
        std::ofstream file(dir / "c.cfg");
        file << "# comment\n\nmodel = unet\nresolution = 256 # trailing\n";
        file.close();
        CHECK(read_run_config((dir / "c.cfg").string()).model == ModelKind::UNet);
    }

    SUBCASE("unknown keys are rejected") {
        std::ofstream file(dir / "bad.cfg");
        file << "models = unet\n";
        file.close();
        CHECK_THROWS_AS(read_run_config((dir / "bad.cfg").string()), Error);
    }
}

TEST_CASE("desk-scale training loop") {
    const fs::path dir = temp_dir("loop");
    const Manifest manifest = testing::build_shapes_dataset(dir / "data", 8, 2, 0, 64);
    RunConfig config = toy_config();

    SUBCASE("missing split raises EMPTY_SPLIT") {
        Manifest train_only = manifest;
        for (auto& r : train_only.records) r.split = Split::Train;
        try {
            train(config, train_only, std::nullopt, {});
            FAIL("expected EMPTY_SPLIT");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptySplit);
        }
    }

    SUBCASE("logged first-epoch loss equals a recomputation of the same batch") {
        TrainOptions options;
        options.model_spec = toy_spec();
        options.max_iterations = 1;
        config.batch_size = 8;
        config.epochs = 1;
        const RunReport report = train(config, manifest, std::nullopt, options);
        REQUIRE(report.per_epoch.size() == 1);

        // independent recomputation from the exposed deterministic helpers
        const auto samples = load_split(manifest, Split::Train, config);
        torch::manual_seed(config.seed);
        auto model = build_model(toy_spec());
        const auto order = epoch_order(samples.size(), config.seed, 0);
        std::vector<FrameImage> frames;
        std::vector<LabelMap> masks;
        std::vector<double> weights;
        for (size_t pos = 0; pos < order.size(); ++pos) {
            auto [f, m] = augment(samples[order[pos]].frame, samples[order[pos]].mask,
                                  augment_seed(config.seed, 0, pos));
            frames.push_back(std::move(f));
            masks.push_back(std::move(m));
            weights.push_back(samples[order[pos]].weight);
        }
        std::vector<const FrameImage*> fp;
        std::vector<const LabelMap*> mp;
        for (size_t i = 0; i < frames.size(); ++i) {
            fp.push_back(&frames[i]);
            mp.push_back(&masks[i]);
        }
        model->train();
        const auto logits = model->forward(frames_to_tensor(fp));
        const auto per_sample =
            composite_loss_per_sample(logits, masks_to_tensor(mp), LossConfig::from_kind(config.loss));
        const double recomputed = weighted_batch_loss(per_sample, weights).item<double>();
        CHECK(report.per_epoch[0].train_loss == doctest::Approx(recomputed).epsilon(1e-7));
    }

    SUBCASE("two runs with one seed log identical curves") {
        TrainOptions options;
        options.model_spec = toy_spec();
        options.max_iterations = 2;
        const RunReport a = train(config, manifest, std::nullopt, options);
        const RunReport b = train(config, manifest, std::nullopt, options);
        REQUIRE(a.per_epoch.size() == b.per_epoch.size());
        for (size_t i = 0; i < a.per_epoch.size(); ++i) {
            CHECK(a.per_epoch[i].train_loss == b.per_epoch[i].train_loss);
            CHECK(a.per_epoch[i].val_mean_dice == b.per_epoch[i].val_mean_dice);
        }
        CHECK(a.dataset_fingerprint == b.dataset_fingerprint);
    }

    SUBCASE("checkpoint evaluation reproduces the logged best val dice") {
        TrainOptions options;
        options.model_spec = toy_spec();
        options.out_dir = (dir / "run").string();
        config.epochs = 2;
        const RunReport report = train(config, manifest, std::nullopt, options);
        REQUIRE_FALSE(report.checkpoint_path.empty());
        REQUIRE(report.per_epoch.size() == 2);

        const MetricReport val = evaluate(report.checkpoint_path, manifest, Split::Val);
        CHECK(val.mean_dice == doctest::Approx(report.best_val_mean_dice).epsilon(1e-6));
        double best_logged = 0.0;
        for (const auto& e : report.per_epoch) best_logged = std::max(best_logged, e.val_mean_dice);
        CHECK(val.mean_dice == doctest::Approx(best_logged).epsilon(1e-6));

        // config + report artifacts written alongside
        CHECK(fs::exists(fs::path(options.out_dir) / "config.resolved.cfg"));
        CHECK(fs::exists(fs::path(options.out_dir) / "report.json"));
        CHECK(fs::exists(fs::path(options.out_dir) / "report.txt"));

        // evaluation is repeatable
        const MetricReport again = evaluate(report.checkpoint_path, manifest, Split::Val);
        CHECK(again.mean_dice == val.mean_dice);
    }

    SUBCASE("logged lr at epoch 10 is one tenth of epoch 9") {
        TrainOptions options;
        options.model_spec = toy_spec();
        config.epochs = 11;
        config.batch_size = 8;
        const RunReport report = train(config, manifest, std::nullopt, options);
        REQUIRE(report.per_epoch.size() == 11);
        CHECK(report.per_epoch[10].lr ==
              doctest::Approx(0.1 * report.per_epoch[9].lr).epsilon(1e-12));
        CHECK(report.per_epoch[0].lr == doctest::Approx(config.lr));
    }
}

TEST_CASE("pseudo-weighted batches mix ground truth and pseudo samples") {
    const fs::path dir = temp_dir("pseudo_mix");
    Manifest manifest = testing::build_shapes_dataset(dir / "data", 6, 2, 0, 64);
    // mark half the train records as pseudo
    int flipped = 0;
    for (auto& r : manifest.records) {
        if (r.split == Split::Train && flipped < 3) {
            r.source = SampleSource::Pseudo;
            r.weight = kPseudoWeight;
            ++flipped;
        }
    }
    RunConfig config = toy_config();
    config.pseudo_enabled = true;
    TrainOptions options;
    options.model_spec = toy_spec();
    options.max_iterations = 1;
    const RunReport with_pseudo = train(config, manifest, std::nullopt, options);

    config.pseudo_enabled = false;
    const RunReport without = train(config, manifest, std::nullopt, options);
    // disabling pseudo shrinks the train split from 6 to 3 samples
    CHECK(with_pseudo.per_epoch[0].train_loss != without.per_epoch[0].train_loss);
}

TEST_CASE("overlays") {
    FrameImage frame;
    frame.height = 16;
    frame.width = 16;
    frame.pixels.resize(256);
    for (int i = 0; i < 256; ++i) frame.pixels[i] = static_cast<float>(i);
    LabelMap empty;
    empty.height = 16;
    empty.width = 16;
    empty.labels.assign(256, 0);

    SUBCASE("background-only mask renders the plain grayscale frame") {
        const auto rgb = overlay_panel(frame, empty);
        for (int i = 0; i < 256; ++i) {
            const auto gray = static_cast<uint8_t>(std::lround(i / 255.0 * 255.0));
            CHECK(rgb[i * 3 + 0] == gray);
            CHECK(rgb[i * 3 + 1] == gray);
            CHECK(rgb[i * 3 + 2] == gray);
        }
    }

    SUBCASE("one composite per frame") {
        const fs::path dir = temp_dir("overlays");
        LabelMap pred = empty;
        pred.at(4, 4) = 1;
        const auto paths = render_overlays({frame, frame, frame}, {empty, empty, empty},
                                           {pred, pred, pred}, dir.string());
        CHECK(paths.size() == 3);
        for (const auto& p : paths) CHECK(fs::exists(p));
    }

    SUBCASE("misaligned lists are rejected") {
        CHECK_THROWS_AS(render_overlays({frame}, {}, {}, "unused"), Error);
    }
}

TEST_CASE("report json and table round trip") {
    RunReport report;
    report.config = toy_config();
    report.dataset_fingerprint = "abc123";
    EpochStats stats;
    stats.epoch = 0;
    stats.lr = 1e-3;
    stats.train_loss = 0.5;
    stats.val_mean_dice = 0.75;
    report.per_epoch.push_back(stats);
    MetricReport metrics;
    metrics.per_class_dice = {1.0, 0.5, 0.25, 0.25};
    metrics.mean_dice = 0.5;
    metrics.mean_dice_foreground = 1.0 / 3.0;
    metrics.per_class_iou = {1.0, 0.33, 0.14, 0.14};
    report.final_by_split["val"] = metrics;

    const RunReport back = run_report_from_json(run_report_json(report));
    CHECK(back.per_epoch.size() == 1);
    CHECK(back.per_epoch[0].val_mean_dice == doctest::Approx(0.75));
    CHECK(back.final_by_split.at("val").mean_dice == doctest::Approx(0.5));
    CHECK(back.dataset_fingerprint == "abc123");

    const std::string table = run_report_table(back);
    CHECK(table.find("val") != std::string::npos);
    CHECK(table.find("mdice") != std::string::npos);
}

TEST_CASE("one-cell ablation grid") {
    const fs::path dir = temp_dir("ablation");
    const Manifest manifest = testing::build_shapes_dataset(dir / "data", 4, 2, 0, 64);
    RunConfig base = toy_config();
    base.epochs = 1;

    TrainOptions cell_options;
    cell_options.model_spec = toy_spec();
    cell_options.max_iterations = 1;

    std::map<DataRoute, Manifest> manifests = {{DataRoute::Png16, manifest}};
    const auto cells = run_ablation(base, manifests, {LossKind::CE}, {256},
                                    (dir / "out").string(), cell_options);
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].report.has_value());
    CHECK(cells[0].error.empty());
    CHECK(fs::exists(dir / "out" / "ablation.txt"));

    SUBCASE("cell count is the cartesian product") {
        const auto grid = run_ablation(base, manifests, {LossKind::CE, LossKind::CEDice}, {256},
                                       "", cell_options);
        CHECK(grid.size() == 2);
    }
}
