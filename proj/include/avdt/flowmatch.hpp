#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "avdt/backbone.hpp"
#include "avdt/dataset.hpp"
#include "avdt/optim.hpp"
#include "avdt/rng.hpp"

namespace avdt {

// ============================================================================
// Flow-matching math
// ============================================================================

struct LogitNormalParams {
    double m = 0.0;
    double s = 1.0;

    void validate() const {
        if (s <= 0.0) throw ConfigError("logit-normal scale must be positive");
    }
};

// t = sigmoid(m + s * N(0,1)); strictly inside (0,1).
inline double sample_t(SeededRng& rng, const LogitNormalParams& p) {
    p.validate();
    double z = p.m + p.s * rng.next_normal();
    return 1.0 / (1.0 + std::exp(-z));
}

template <typename T>
Tensor<T> interpolate(const Tensor<T>& z0, const Tensor<T>& z1, double t) {
    if (!z0.same_shape(z1)) throw ShapeError("interpolate: shape mismatch");
    Tensor<T> out(z0.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = T((1.0 - t) * double(z0[i]) + t * double(z1[i]));
    return out;
}

// For the linear path the velocity is constant in t.
template <typename T>
Tensor<T> velocity_target(const Tensor<T>& z0, const Tensor<T>& z1) {
    if (!z0.same_shape(z1)) throw ShapeError("velocity_target: shape mismatch");
    Tensor<T> out(z0.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = z1[i] - z0[i];
    return out;
}

template <typename T>
double fm_loss(const Tensor<T>& predicted, const Tensor<T>& target) {
    if (!predicted.same_shape(target)) throw ShapeError("loss: shape mismatch");
    double acc = 0;
    for (std::size_t i = 0; i < predicted.numel(); ++i) {
        double d = double(predicted[i]) - double(target[i]);
        acc += d * d;
    }
    return acc / double(predicted.numel());
}

// ============================================================================
// Training loop
// ============================================================================

struct TrainOptions {
    std::size_t steps = 200;
    std::size_t batch_size = 4;
    double lr = 1e-3;
    std::string optimizer = "adam"; // "adam" | "sgd"
    LogitNormalParams logit;
    std::uint64_t seed = 0;
    std::size_t start_step = 0; // resume point
    // Optional two-stage regime: audio-only first, then mixed image data at
    // an image:audio ratio of `image_ratio`:1.
    std::string schedule = "single"; // "single" | "two_stage"
    double image_ratio = 1.5;
    double stage1_fraction = 0.5;

    void validate() const {
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (optimizer != "adam" && optimizer != "sgd")
            throw ConfigError("optimizer must be adam or sgd");
        if (schedule != "single" && schedule != "two_stage")
            throw ConfigError("schedule must be single or two_stage");
        logit.validate();
    }
};

struct TrainResult {
    std::vector<std::pair<std::size_t, double>> loss_curve; // (step, loss)
};

// Static-image variant of a clip sample for the optional mixed stage: frame-0
// content repeated, silent audio, mask closed outside the identity frame.
inline TrainingExample make_image_example(const TrainingExample& base) {
    TrainingExample ex = base;
    std::size_t f = ex.z1.extent(0);
    std::size_t frame_sz = ex.z1.numel() / f;
    for (std::size_t l = 1; l < f; ++l)
        std::copy_n(ex.z1.data() + frame_sz, frame_sz, ex.z1.data() + l * frame_sz);
    float silence = float(std::log(kLogFloor));
    std::fill(ex.cond.aligned_audio.vec().begin(), ex.cond.aligned_audio.vec().end(), silence);
    std::size_t mask_frame = ex.cond.mask_grid.numel() / ex.cond.mask_grid.extent(0);
    for (std::size_t i = mask_frame; i < ex.cond.mask_grid.numel(); ++i)
        ex.cond.mask_grid[i] = 0.0f;
    return ex;
}

template <typename StepCallback>
TrainResult train_loop(Model<float>& model, const std::vector<TrainingExample>& dataset,
                       const TrainOptions& opt, AdamOptimizer<float>& adam,
                       SgdOptimizer<float>& sgd, StepCallback&& on_step) {
    opt.validate();
    if (dataset.empty()) throw ConfigError("train_loop: dataset is empty");
    adam.lr = float(opt.lr);
    sgd.lr = float(opt.lr);

    TrainResult result;
    for (std::size_t step = opt.start_step; step < opt.steps; ++step) {
        // Per-step stream derived from (seed, step): resuming at step k
        // reproduces the uninterrupted run exactly.
        SeededRng rng = SeededRng(opt.seed).fork(0xA11CE ^ (step + 1));
        bool stage2 = opt.schedule == "two_stage" &&
                      step >= std::size_t(opt.stage1_fraction * double(opt.steps));

        Tape<float> g;
        std::vector<Var<float>> losses;
        for (std::size_t b = 0; b < opt.batch_size; ++b) {
            const TrainingExample* ex = &dataset[rng.next_below(dataset.size())];
            TrainingExample image_ex;
            if (stage2) {
                double p_image = opt.image_ratio / (1.0 + opt.image_ratio);
                if (rng.next_double() < p_image) {
                    image_ex = make_image_example(*ex);
                    ex = &image_ex;
                }
            }
            double t = sample_t(rng, opt.logit);
            Tensor<float> z0(ex->z1.shape());
            rng.fill_normal(z0);
            Tensor<float> zt = interpolate(z0, ex->z1, t);
            Tensor<float> u = velocity_target(z0, ex->z1);

            ConditioningBundle<float> cond = ex->cond;
            cond.t = t;
            ForwardResult<float> out = forward(model, g, zt, cond);
            Tensor<float> u_rows =
                latent_to_rows(u); // loss over token order equals loss over latent order
            losses.push_back(g.mse(out.velocity_rows, u_rows));
        }
        Var<float> loss = losses[0];
        for (std::size_t i = 1; i < losses.size(); ++i) loss = g.add(loss, losses[i]);
        loss = g.scale(loss, 1.0f / float(losses.size()));

        double loss_value = double(loss->value[0]);
        if (!std::isfinite(loss_value))
            throw NumericError("non-finite loss at step " + std::to_string(step));

        model.params.zero_grad();
        g.backward(loss);
        if (opt.optimizer == "adam")
            adam.step(model.params);
        else
            sgd.step(model.params);

        result.loss_curve.emplace_back(step, loss_value);
        on_step(step, loss_value);
    }
    return result;
}

inline TrainResult train_loop(Model<float>& model, const std::vector<TrainingExample>& dataset,
                              const TrainOptions& opt, AdamOptimizer<float>& adam,
                              SgdOptimizer<float>& sgd) {
    return train_loop(model, dataset, opt, adam, sgd, [](std::size_t, double) {});
}

inline void write_loss_csv(const std::string& path, const TrainResult& r,
                           const std::string& config_hash) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write loss curve: " + path);
    f << "# config_hash=" << config_hash << "\n";
    f << "step,loss\n";
    for (auto& [step, loss] : r.loss_curve) f << step << "," << loss << "\n";
}

} // namespace avdt
