#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "avdt/dataset.hpp"
#include "avdt/flowmatch.hpp"
#include "avdt/generate.hpp"

namespace avdt {

inline double pearson_corr(const std::vector<double>& a, const std::vector<double>& b) {
    std::size_t n = a.size();
    if (n != b.size() || n < 3) throw ShapeError("pearson: need matched series of length >= 3");
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= double(n);
    mb /= double(n);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

// Per-frame variance of the pixels inside the mouth box.
inline std::vector<double> mouth_variance_series(const PixelVideo& video,
                                                 const std::vector<PixelBox>& mouth_per_frame) {
    if (mouth_per_frame.size() != video.frames)
        throw ShapeError("mouth box track length mismatch");
    std::vector<double> out(video.frames);
    for (std::size_t t = 0; t < video.frames; ++t) {
        const PixelBox& b = mouth_per_frame[t];
        double mean = 0;
        std::size_t n = 0;
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x)
                for (std::size_t c = 0; c < video.channels; ++c) {
                    mean += video.at(t, std::size_t(y), std::size_t(x), c);
                    ++n;
                }
        mean /= double(n);
        double var = 0;
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x)
                for (std::size_t c = 0; c < video.channels; ++c) {
                    double d = video.at(t, std::size_t(y), std::size_t(x), c) - mean;
                    var += d * d;
                }
        out[t] = var / double(n);
    }
    return out;
}

// Mean per-pixel variance over time inside a static box.
inline double temporal_variance_in_box(const PixelVideo& video, const PixelBox& b) {
    double acc = 0;
    std::size_t n = 0;
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x)
            for (std::size_t c = 0; c < video.channels; ++c) {
                double mean = 0;
                for (std::size_t t = 0; t < video.frames; ++t)
                    mean += video.at(t, std::size_t(y), std::size_t(x), c);
                mean /= double(video.frames);
                double var = 0;
                for (std::size_t t = 0; t < video.frames; ++t) {
                    double d = video.at(t, std::size_t(y), std::size_t(x), c) - mean;
                    var += d * d;
                }
                acc += var / double(video.frames);
                ++n;
            }
    return acc / double(n);
}

// Direct sync score of a video against its audio: Pearson correlation of
// the amplitude envelope with the mouth-box pixel-variance series.
inline double sync_score(const PixelVideo& video, const WavData& audio,
                         const std::vector<PixelBox>& mouth_per_frame,
                         const AudioFeatureConfig& afc) {
    std::vector<double> env = amplitude_envelope(audio, video.frames, afc);
    std::vector<double> var = mouth_variance_series(video, mouth_per_frame);
    return pearson_corr(env, var);
}

struct SyncClipScore {
    std::string id;
    double true_corr = 0, shuffled_corr = 0, gap = 0;
};

struct SyncReport {
    std::vector<SyncClipScore> clips;
    double mean_true = 0, mean_shuffled = 0, mean_gap = 0;
    std::string config_hash;
};

inline void to_json(nlohmann::json& j, const SyncClipScore& s) {
    j = nlohmann::json{{"id", s.id},
                       {"true_corr", s.true_corr},
                       {"shuffled_corr", s.shuffled_corr},
                       {"gap", s.gap}};
}

inline void to_json(nlohmann::json& j, const SyncReport& r) {
    j = nlohmann::json{{"clips", r.clips},
                       {"mean_true", r.mean_true},
                       {"mean_shuffled", r.mean_shuffled},
                       {"mean_gap", r.mean_gap},
                       {"config_hash", r.config_hash}};
}

// Generate every clip twice (true audio, frame-shuffled audio), both scored
// against the true envelope. A model that follows its audio scores high on
// the first and near zero on the second.
inline SyncReport eval_sync(Model<float>& model, const DatasetManifest& manifest,
                            const std::vector<std::size_t>& clip_indices,
                            const InferenceOptions& base_opt, const AudioFeatureConfig& afc) {
    SyncReport report;
    for (std::size_t idx : clip_indices) {
        const ManifestClip& info = manifest.clips.at(idx);
        ClipData clip = load_clip(manifest, info);
        std::size_t fp = clip.video.extent(0);
        std::size_t ch = std::size_t(info.active_character);

        Tensor<float> ref_img(Shape{clip.video.extent(1), clip.video.extent(2),
                                    clip.video.extent(3)});
        std::copy_n(clip.video.data(), ref_img.numel(), ref_img.data());

        InferenceInputs in;
        in.ref_image = ref_img;
        in.audio = clip.audio;
        in.face_boxes = clip.boxes.face_boxes(ch);
        in.emotion_image = load_emotion_ref_image(manifest, info.emotion);
        in.text_ids = build_text_ids(info.emotion, info.identity, model.cfg.text_vocab,
                                     model.cfg.text_len);

        InferenceOptions opt = base_opt;
        opt.pixel_frames = fp;

        std::vector<double> env = amplitude_envelope(clip.audio, fp, afc);
        const std::vector<PixelBox>& mouth = clip.boxes.characters[ch].mouth;

        InferenceResult gen_true = infer(model, in, opt, afc);
        double corr_true = pearson_corr(env, mouth_variance_series(gen_true.video, mouth));

        InferenceInputs in_shuf = in;
        in_shuf.audio = shuffle_audio_frames(clip.audio, afc.fps, fp, opt.seed ^ 0x5AFEu);
        InferenceResult gen_shuf = infer(model, in_shuf, opt, afc);
        double corr_shuf = pearson_corr(env, mouth_variance_series(gen_shuf.video, mouth));

        SyncClipScore s;
        s.id = info.id;
        s.true_corr = corr_true;
        s.shuffled_corr = corr_shuf;
        s.gap = corr_true - corr_shuf;
        report.clips.push_back(s);
        report.mean_true += corr_true;
        report.mean_shuffled += corr_shuf;
        report.mean_gap += s.gap;
    }
    if (!report.clips.empty()) {
        report.mean_true /= double(report.clips.size());
        report.mean_shuffled /= double(report.clips.size());
        report.mean_gap /= double(report.clips.size());
    }
    return report;
}

// ============================================================================
// Multi-character mask steering
// ============================================================================

struct SteeringTrial {
    std::string id;
    int driven = 0;
    double var_driven = 0, var_other = 0;
    bool follows = false;
};

inline void to_json(nlohmann::json& j, const SteeringTrial& t) {
    j = nlohmann::json{{"id", t.id},
                       {"driven", t.driven},
                       {"var_driven", t.var_driven},
                       {"var_other", t.var_other},
                       {"follows", t.follows}};
}

// Drive a two-character clip with one character's audio and face mask; the
// audio-responsive region should be that character's mouth.
inline SteeringTrial steering_trial(Model<float>& model, const DatasetManifest& manifest,
                                    const ManifestClip& info, int driven,
                                    const InferenceOptions& base_opt,
                                    const AudioFeatureConfig& afc) {
    if (info.characters < 2) throw ConfigError("steering trial needs a two-character clip");
    ClipData clip = load_clip(manifest, info);
    std::size_t fp = clip.video.extent(0);

    Tensor<float> ref_img(Shape{clip.video.extent(1), clip.video.extent(2), clip.video.extent(3)});
    std::copy_n(clip.video.data(), ref_img.numel(), ref_img.data());

    InferenceInputs in;
    in.ref_image = ref_img;
    in.audio = read_wav(manifest.resolve(info.audio_tracks.at(std::size_t(driven))));
    in.face_boxes = clip.boxes.face_boxes(std::size_t(driven));
    in.emotion_image = load_emotion_ref_image(manifest, info.emotion);
    in.text_ids = build_text_ids(info.emotion, info.identity, model.cfg.text_vocab,
                                 model.cfg.text_len);

    InferenceOptions opt = base_opt;
    opt.pixel_frames = fp;
    InferenceResult gen = infer(model, in, opt, afc);

    SteeringTrial trial;
    trial.id = info.id;
    trial.driven = driven;
    trial.var_driven =
        temporal_variance_in_box(gen.video, clip.boxes.characters[std::size_t(driven)].mouth[0]);
    trial.var_other = temporal_variance_in_box(
        gen.video, clip.boxes.characters[std::size_t(1 - driven)].mouth[0]);
    trial.follows = trial.var_driven > trial.var_other;
    return trial;
}

// ============================================================================
// Ablation harness metrics
// ============================================================================

// Mean per-frame, per-pixel absolute distance to the reference image.
inline double identity_proxy(const PixelVideo& video, const Tensor<float>& ref_image) {
    double acc = 0;
    std::size_t per_frame = video.height * video.width * video.channels;
    for (std::size_t t = 0; t < video.frames; ++t)
        for (std::size_t i = 0; i < per_frame; ++i)
            acc += std::abs(double(video.data[t * per_frame + i]) - double(ref_image[i]));
    return acc / double(video.frames * per_frame);
}

inline double motion_proxy(const PixelVideo& video) {
    PixelBox all{0, 0, int(video.width), int(video.height)};
    return temporal_variance_in_box(video, all);
}

} // namespace avdt
