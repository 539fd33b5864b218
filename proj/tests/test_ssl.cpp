#include "echoseg/ssl.hpp"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "torch_doctest.hpp"

#include <random>


using namespace echoseg;

namespace {

ModelSpec tiny_spec() {
    ModelSpec spec = ModelSpec::defaults(ModelKind::UNet);
    spec.encoder_channels = {4, 8, 16};
    return spec;
}

std::vector<FrameImage> synthetic_frames(int count, int size = 32) {
    std::mt19937 rng(99);
    std::uniform_real_distribution<float> noise(-0.2f, 0.2f);
    std::vector<FrameImage> frames;
    for (int i = 0; i < count; ++i) {
        FrameImage f;
        f.height = size;
        f.width = size;
        f.pixels.resize(static_cast<size_t>(size) * size);
        const int cy = static_cast<int>(rng() % size), cx = static_cast<int>(rng() % size);
        const double radius = 4.0 + (rng() % 8);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double d = std::hypot(y - cy, x - cx);
                f.pixels[static_cast<size_t>(y) * size + x] =
                    (d < radius ? 1.0f : -0.5f) + noise(rng);
            }
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

} // namespace

TEST_CASE("contrastive views are deterministic given the rng state") {
    const auto frames = synthetic_frames(1);
    ContrastiveConfig config;
    std::mt19937_64 a(7), b(7);
    CHECK(contrastive_view(frames[0], config, a) == contrastive_view(frames[0], config, b));
}

TEST_CASE("pretraining decreases the fixed probe loss") {
    const auto frames = synthetic_frames(100);
    PretrainOptions options;
    options.epochs = 3;
    options.batch_size = 8;
    options.lr = 1e-3;
    options.seed = 5;
    PretrainTrace trace;
    const EncoderState state = pretrain_encoder(frames, tiny_spec(), options, &trace);
    CHECK(trace.final_probe_loss < trace.initial_probe_loss);
    CHECK(state.provenance == EncoderProvenance::SslPretrained);
    CHECK_FALSE(state.tensors.empty());
}

TEST_CASE("pretraining is bit-deterministic for a fixed seed") {
    const auto frames = synthetic_frames(12);
    PretrainOptions options;
    options.epochs = 1;
    options.batch_size = 4;
    options.seed = 11;

    const EncoderState a = pretrain_encoder(frames, tiny_spec(), options);
    const EncoderState b = pretrain_encoder(frames, tiny_spec(), options);
    REQUIRE(a.tensors.size() == b.tensors.size());
    for (size_t i = 0; i < a.tensors.size(); ++i) {
        CHECK(a.tensors[i].first == b.tensors[i].first);
        CHECK(torch::equal(a.tensors[i].second, b.tensors[i].second));
    }
}

TEST_CASE("empty stream is rejected") {
    try {
        pretrain_encoder({}, tiny_spec(), {});
        FAIL("expected EMPTY_STREAM");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyStream);
    }
}

TEST_CASE("pretrained states transfer into a full model") {
    const auto frames = synthetic_frames(8);
    PretrainOptions options;
    options.epochs = 1;
    options.batch_size = 4;
    const EncoderState state = pretrain_encoder(frames, tiny_spec(), options);

    auto model = build_model(tiny_spec());
    CHECK_NOTHROW(transfer_encoder(*model, state));
}
