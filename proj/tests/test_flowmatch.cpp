#include <catch2/catch_amalgamated.hpp>

#include "avdt/flowmatch.hpp"
#include "avdt/rng.hpp"

using namespace avdt;

TEST_CASE("logit-normal timestep sampling") {
    SECTION("scale must be positive") {
        LogitNormalParams p;
        p.s = 0.0;
        REQUIRE_THROWS_AS(p.validate(), ConfigError);
    }
    SECTION("s -> 0 limit concentrates at sigmoid(m)") {
        SeededRng rng(1);
        LogitNormalParams p;
        p.m = 0.0;
        p.s = 1e-12;
        for (int i = 0; i < 10; ++i)
            REQUIRE(sample_t(rng, p) == Catch::Approx(0.5).margin(1e-9));
    }
    SECTION("10^4 samples have median near 0.5 and stay strictly inside (0,1)") {
        SeededRng rng(2);
        LogitNormalParams p;
        std::vector<double> ts(10000);
        for (auto& t : ts) {
            t = sample_t(rng, p);
            REQUIRE(t > 0.0);
            REQUIRE(t < 1.0);
        }
        std::sort(ts.begin(), ts.end());
        double median = 0.5 * (ts[4999] + ts[5000]);
        REQUIRE(median > 0.47);
        REQUIRE(median < 0.53);
    }
    SECTION("deterministic under fixed seed") {
        SeededRng a(3), b(3);
        LogitNormalParams p;
        for (int i = 0; i < 20; ++i) REQUIRE(sample_t(a, p) == sample_t(b, p));
    }
}

TEST_CASE("interpolation and velocity target") {
    SeededRng rng(4);
    Tensor<double> z0(Shape{3, 2});
    Tensor<double> z1(Shape{3, 2});
    rng.fill_normal(z0);
    rng.fill_normal(z1);

    SECTION("endpoints are exact") {
        REQUIRE(interpolate(z0, z1, 0.0).vec() == z0.vec());
        REQUIRE(interpolate(z0, z1, 1.0).vec() == z1.vec());
    }
    SECTION("midpoint example") {
        Tensor<double> a(Shape{1}, std::vector<double>{0.0});
        Tensor<double> b(Shape{1}, std::vector<double>{2.0});
        REQUIRE(interpolate(a, b, 0.5)[0] == 1.0);
    }
    SECTION("velocity identities") {
        REQUIRE(velocity_target(z0, z0).vec() == Tensor<double>(Shape{3, 2}).vec());
        Tensor<double> zero(Shape{3, 2});
        REQUIRE(velocity_target(zero, z1).vec() == z1.vec());
    }
    SECTION("finite difference of the path matches the velocity within 1e-9") {
        Tensor<double> u = velocity_target(z0, z1);
        double t = 0.37, eps = 1e-6;
        Tensor<double> hi = interpolate(z0, z1, t + eps);
        Tensor<double> lo = interpolate(z0, z1, t - eps);
        for (std::size_t i = 0; i < u.numel(); ++i)
            REQUIRE(std::abs((hi[i] - lo[i]) / (2 * eps) - u[i]) < 1e-9);
    }
    SECTION("shape mismatch rejected") {
        Tensor<double> bad(Shape{2, 2});
        REQUIRE_THROWS_AS(interpolate(z0, bad, 0.5), ShapeError);
        REQUIRE_THROWS_AS(velocity_target(z0, bad), ShapeError);
    }
}

TEST_CASE("flow-matching loss axioms") {
    SeededRng rng(5);
    Tensor<float> u(Shape{4, 3});
    rng.fill_normal(u);
    SECTION("zero iff prediction equals target") {
        REQUIRE(fm_loss(u, u) == 0.0);
    }
    SECTION("uniform offset of 1 gives loss 1") {
        Tensor<float> v = u;
        for (auto& x : v.vec()) x += 1.0f;
        REQUIRE(fm_loss(v, u) == Catch::Approx(1.0).margin(1e-6));
    }
    SECTION("hand case: ([0,2],[0,0]) -> 2") {
        Tensor<float> a(Shape{2}, std::vector<float>{0, 2});
        Tensor<float> b(Shape{2}, std::vector<float>{0, 0});
        REQUIRE(fm_loss(a, b) == Catch::Approx(2.0));
    }
    SECTION("non-negative on random pairs") {
        Tensor<float> v(Shape{4, 3});
        rng.fill_normal(v);
        REQUIRE(fm_loss(v, u) >= 0.0);
    }
}

namespace {
// Tiny dataset for loop-level tests: built directly, no files.
std::vector<TrainingExample> tiny_dataset(const ModelConfig& cfg, std::size_t n) {
    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i < n; ++i) {
        SeededRng rng(1000 + i);
        TrainingExample ex;
        ex.z1 = Tensor<float>(Shape{cfg.f_seg, cfg.latent_w, cfg.latent_h, cfg.latent_c()});
        rng.fill_uniform(ex.z1, -1.0, 1.0);
        ex.cond.ref_latent = Tensor<float>(Shape{cfg.latent_w, cfg.latent_h, cfg.latent_c()});
        rng.fill_uniform(ex.cond.ref_latent, -1.0, 1.0);
        ex.cond.aligned_audio =
            Tensor<float>(Shape{cfg.f_seg, kAudioTokensPerLatentFrame, cfg.d_audio});
        rng.fill_normal(ex.cond.aligned_audio, 0.0, 0.5);
        ex.cond.mask_grid = Tensor<float>(Shape{cfg.f_seg, cfg.latent_w, cfg.latent_h}, 1.0f);
        ex.cond.emotion_tokens = Tensor<float>(Shape{cfg.spatial_tokens(), cfg.latent_c()});
        rng.fill_uniform(ex.cond.emotion_tokens, -1.0, 1.0);
        ex.cond.text_ids.assign(cfg.text_len, 2);
        out.push_back(std::move(ex));
    }
    return out;
}

ModelConfig loop_config() {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_double = 1;
    cfg.n_single = 1;
    cfg.latent_w = 2;
    cfg.latent_h = 2;
    cfg.pixel_channels = 1;
    cfg.spatial_factor = 2;
    cfg.f_seg = 3;
    cfg.text_vocab = 16;
    cfg.text_len = 2;
    cfg.d_audio = 3;
    cfg.mlp_ratio = 2;
    return cfg;
}
} // namespace

TEST_CASE("train loop") {
    ModelConfig cfg = loop_config();
    std::vector<TrainingExample> data = tiny_dataset(cfg, 4);

    SECTION("zero steps leaves the model at its initialization") {
        Model<float> m = build_model<float>(cfg, 77);
        Model<float> ref = build_model<float>(cfg, 77);
        AdamOptimizer<float> adam;
        SgdOptimizer<float> sgd;
        TrainOptions opt;
        opt.steps = 0;
        TrainResult r = train_loop(m, data, opt, adam, sgd);
        REQUIRE(r.loss_curve.empty());
        for (std::size_t i = 0; i < m.params.size(); ++i)
            REQUIRE(m.params.at(i).value().vec() == ref.params.at(i).value().vec());
    }
    SECTION("first-step loss equals the batch's mean squared velocity") {
        // Zero-initialized head predicts zero, so loss = mean ||u||^2.
        Model<float> m = build_model<float>(cfg, 78);
        AdamOptimizer<float> adam;
        SgdOptimizer<float> sgd;
        TrainOptions opt;
        opt.steps = 1;
        opt.batch_size = 2;
        opt.seed = 5;
        TrainResult r = train_loop(m, data, opt, adam, sgd);
        REQUIRE(r.loss_curve.size() == 1);

        // Replay the step's draws with the same derived stream.
        SeededRng rng = SeededRng(5).fork(0xA11CE ^ 1);
        LogitNormalParams lp;
        double expect = 0;
        for (std::size_t b = 0; b < 2; ++b) {
            const TrainingExample& ex = data[rng.next_below(data.size())];
            double t = sample_t(rng, lp);
            Tensor<float> z0(ex.z1.shape());
            rng.fill_normal(z0);
            (void)t;
            Tensor<float> u = velocity_target(z0, ex.z1);
            double acc = 0;
            for (std::size_t i = 0; i < u.numel(); ++i) acc += double(u[i]) * double(u[i]);
            expect += acc / double(u.numel());
        }
        expect /= 2.0;
        REQUIRE(r.loss_curve[0].second == Catch::Approx(expect).epsilon(1e-4));
    }
    SECTION("training is deterministic end to end") {
        auto run = [&] {
            Model<float> m = build_model<float>(cfg, 79);
            AdamOptimizer<float> adam;
            SgdOptimizer<float> sgd;
            TrainOptions opt;
            opt.steps = 4;
            opt.batch_size = 2;
            opt.seed = 9;
            train_loop(m, data, opt, adam, sgd);
            std::vector<float> flat;
            for (std::size_t i = 0; i < m.params.size(); ++i)
                for (float v : m.params.at(i).value().vec()) flat.push_back(v);
            return flat;
        };
        REQUIRE(run() == run());
    }
    SECTION("resume reproduces the uninterrupted run exactly") {
        auto train_span = [&](Model<float>& m, AdamOptimizer<float>& adam, std::size_t from,
                              std::size_t to) {
            SgdOptimizer<float> sgd;
            TrainOptions opt;
            opt.steps = to;
            opt.start_step = from;
            opt.batch_size = 2;
            opt.seed = 11;
            train_loop(m, data, opt, adam, sgd);
        };
        Model<float> full = build_model<float>(cfg, 80);
        AdamOptimizer<float> adam_full;
        train_span(full, adam_full, 0, 6);

        Model<float> parts = build_model<float>(cfg, 80);
        AdamOptimizer<float> adam_parts;
        train_span(parts, adam_parts, 0, 3);
        train_span(parts, adam_parts, 3, 6);
        for (std::size_t i = 0; i < full.params.size(); ++i)
            REQUIRE(full.params.at(i).value().vec() == parts.params.at(i).value().vec());
    }
    SECTION("empty dataset rejected") {
        Model<float> m = build_model<float>(cfg, 81);
        AdamOptimizer<float> adam;
        SgdOptimizer<float> sgd;
        TrainOptions opt;
        std::vector<TrainingExample> empty;
        REQUIRE_THROWS_AS(train_loop(m, empty, opt, adam, sgd), ConfigError);
    }
    SECTION("two-stage schedule trains and stays finite") {
        Model<float> m = build_model<float>(cfg, 82);
        AdamOptimizer<float> adam;
        SgdOptimizer<float> sgd;
        TrainOptions opt;
        opt.steps = 6;
        opt.batch_size = 2;
        opt.seed = 13;
        opt.schedule = "two_stage";
        opt.stage1_fraction = 0.5;
        TrainResult r = train_loop(m, data, opt, adam, sgd);
        for (auto& [s, v] : r.loss_curve) REQUIRE(std::isfinite(v));
    }
}
