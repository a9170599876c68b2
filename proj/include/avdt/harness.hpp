#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "avdt/config.hpp"
#include "avdt/eval.hpp"
#include "avdt/generate.hpp"
#include "avdt/synth.hpp"

namespace avdt {

// Model-ready examples for every clip in the manifest.
inline std::vector<TrainingExample> build_training_set(const DatasetManifest& manifest,
                                                       const ModelConfig& cfg,
                                                       const AudioFeatureConfig& afc,
                                                       double latent_scale) {
    std::vector<TrainingExample> out;
    for (const ManifestClip& info : manifest.clips) {
        ClipData clip = load_clip(manifest, info);
        Tensor<float> emo = load_emotion_ref_image(manifest, info.emotion);
        out.push_back(build_training_example(clip, emo, cfg, afc, latent_scale));
    }
    return out;
}

struct TrainRunResult {
    TrainResult train;
    std::size_t final_step = 0;
    std::string checkpoint_path;
};

// Shared by the train command, the ablation harness and the acceptance
// suite. Resumes from the checkpoint file when resume is set.
template <typename StepCallback>
TrainRunResult run_training(const RunConfig& cfg, const DatasetManifest& manifest, bool resume,
                            StepCallback&& on_step) {
    std::vector<TrainingExample> examples =
        build_training_set(manifest, cfg.model, cfg.audio, cfg.latent_scale);

    Model<float> model;
    AdamOptimizer<float> adam;
    SgdOptimizer<float> sgd;
    TrainOptions opt = cfg.train;
    opt.seed = cfg.seed;

    if (resume && std::filesystem::exists(cfg.checkpoint)) {
        LoadedCheckpoint<float> loaded = load_checkpoint<float>(cfg.checkpoint);
        model = std::move(loaded.model);
        adam = std::move(loaded.adam);
        opt.start_step = loaded.meta.step;
        opt.optimizer = loaded.meta.optimizer;
    } else {
        model = build_model<float>(cfg.model, cfg.seed);
    }

    TrainRunResult result;
    result.train = train_loop(model, examples, opt, adam, sgd, on_step);
    result.final_step = opt.steps;

    CheckpointMeta meta;
    meta.config = cfg.model;
    meta.optimizer = opt.optimizer;
    meta.step = opt.steps;
    meta.seed = cfg.seed;
    meta.config_hash = config_hash(cfg);
    save_checkpoint(cfg.checkpoint, model, meta,
                    opt.optimizer == "adam" ? &adam : nullptr);
    result.checkpoint_path = cfg.checkpoint;
    return result;
}

inline TrainRunResult run_training(const RunConfig& cfg, const DatasetManifest& manifest,
                                   bool resume = false) {
    return run_training(cfg, manifest, resume, [](std::size_t, double) {});
}

// ============================================================================
// Ablation harness: all three injection mechanisms, identical seeds/steps.
// ============================================================================

struct AblationArm {
    std::string mechanism;
    double final_loss = 0;
    double identity_proxy = 0;
    double motion_proxy = 0;
};

struct AblationReport {
    std::vector<AblationArm> arms;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

inline void to_json(nlohmann::json& j, const AblationArm& a) {
    j = nlohmann::json{{"mechanism", a.mechanism},
                       {"final_loss", a.final_loss},
                       {"identity_proxy", a.identity_proxy},
                       {"motion_proxy", a.motion_proxy}};
}

inline void to_json(nlohmann::json& j, const AblationReport& r) {
    j = nlohmann::json{{"arms", r.arms},
                       {"steps", r.steps},
                       {"seed", r.seed},
                       {"config_hash", r.config_hash}};
}

inline AblationReport run_ablation(const RunConfig& base, const DatasetManifest& manifest,
                                   std::size_t gen_steps = 8) {
    AblationReport report;
    report.steps = base.train.steps;
    report.seed = base.seed;
    report.config_hash = config_hash(base);

    for (InjectionMechanism mech :
         {InjectionMechanism::TokenConcat, InjectionMechanism::TokenChannel,
          InjectionMechanism::TokenAdd}) {
        RunConfig cfg = base;
        cfg.model.mechanism = mech;
        std::vector<TrainingExample> examples =
            build_training_set(manifest, cfg.model, cfg.audio, cfg.latent_scale);
        Model<float> model = build_model<float>(cfg.model, cfg.seed);
        AdamOptimizer<float> adam;
        SgdOptimizer<float> sgd;
        TrainOptions opt = cfg.train;
        opt.seed = cfg.seed;
        TrainResult tr = train_loop(model, examples, opt, adam, sgd);

        AblationArm arm;
        arm.mechanism = mechanism_name(mech);
        std::size_t tail = std::min<std::size_t>(5, tr.loss_curve.size());
        for (std::size_t i = tr.loss_curve.size() - tail; i < tr.loss_curve.size(); ++i)
            arm.final_loss += tr.loss_curve[i].second;
        if (tail) arm.final_loss /= double(tail);

        // Proxies measured on one generated clip.
        const ManifestClip& info = manifest.clips.front();
        ClipData clip = load_clip(manifest, info);
        Tensor<float> ref_img(Shape{clip.video.extent(1), clip.video.extent(2),
                                    clip.video.extent(3)});
        std::copy_n(clip.video.data(), ref_img.numel(), ref_img.data());
        InferenceInputs in;
        in.ref_image = ref_img;
        in.audio = clip.audio;
        in.face_boxes = clip.boxes.face_boxes(std::size_t(info.active_character));
        in.emotion_image = load_emotion_ref_image(manifest, info.emotion);
        in.text_ids = build_text_ids(info.emotion, info.identity, cfg.model.text_vocab,
                                     cfg.model.text_len);
        InferenceOptions iopt;
        iopt.pixel_frames = clip.video.extent(0);
        iopt.steps = gen_steps;
        iopt.alpha = cfg.fusion_alpha;
        iopt.seed = cfg.seed;
        iopt.latent_scale = cfg.latent_scale;
        InferenceResult gen = infer(model, in, iopt, cfg.audio);
        arm.identity_proxy = identity_proxy(gen.video, ref_img);
        arm.motion_proxy = motion_proxy(gen.video);
        if (!std::isfinite(arm.final_loss) || !std::isfinite(arm.identity_proxy) ||
            !std::isfinite(arm.motion_proxy))
            throw NumericError("ablation arm " + arm.mechanism + " produced non-finite metrics");
        report.arms.push_back(arm);
    }
    return report;
}

} // namespace avdt
