#pragma once

#include <vector>

#include "avdt/backbone.hpp"
#include "avdt/dataset.hpp"
#include "avdt/flowmatch.hpp"
#include "avdt/fusion.hpp"

namespace avdt {

struct InferenceOptions {
    std::size_t pixel_frames = 29; // requested f', (f'-1) mod 4 == 0
    std::size_t steps = 25;        // Euler steps T
    std::size_t alpha = 3;         // fusion position-shift offset
    std::uint64_t seed = 0;
    double latent_scale = 2.0;
};

struct InferenceInputs {
    Tensor<float> ref_image;                       // [H,W,C]
    WavData audio;                                 // covers pixel_frames
    std::vector<std::vector<PixelBox>> face_boxes; // per pixel frame
    Tensor<float> emotion_image;                   // [H,W,C] or empty
    std::vector<int> text_ids;
};

struct InferenceResult {
    PixelVideo video;
    Tensor<float> latent; // final timeline latent [l,w,h,c], normalized scale
    std::size_t timeline = 0;
    bool used_fusion = false;
};

// Euler integration of the learned velocity field from noise (t=0) to data
// (t=1). Timelines longer than the model's native segment go through the
// position-shift fusion schedule; the identity lane is re-synthesized per
// step on the training interpolation path from a fixed per-run noise draw.
inline InferenceResult infer(Model<float>& model, const InferenceInputs& in,
                             const InferenceOptions& opt, const AudioFeatureConfig& afc) {
    const ModelConfig& cfg = model.cfg;
    std::size_t fp = opt.pixel_frames;
    if (fp == 0 || (fp - 1) % kTemporalFactor != 0)
        throw ConfigError("inference length must satisfy (f'-1) mod 4 == 0");
    if (in.face_boxes.size() != fp)
        throw ShapeError("inference needs one box list per pixel frame");
    if (in.ref_image.rank() != 3 || in.ref_image.extent(0) != cfg.latent_h * cfg.spatial_factor ||
        in.ref_image.extent(1) != cfg.latent_w * cfg.spatial_factor ||
        in.ref_image.extent(2) != cfg.pixel_channels)
        throw ShapeError("reference image extents do not match the model");
    if (opt.steps == 0) throw ConfigError("inference needs at least one step");

    std::size_t l = latent_frame_count(fp);
    std::size_t f = cfg.f_seg - 1;
    std::size_t w = cfg.latent_w, h = cfg.latent_h, c = cfg.latent_c();

    Tensor<float> feats = extract_audio_features(in.audio, fp, afc);
    Tensor<float> audio_timeline = align_audio(feats, fp); // [l+1,40,d_a]
    FaceMaskGrid mask = align_face_mask(in.face_boxes, fp, cfg.latent_w * cfg.spatial_factor,
                                        cfg.latent_h * cfg.spatial_factor, cfg.spatial_factor);

    ImageLatent ref = encode_image(in.ref_image, cfg.spatial_factor);
    Tensor<float> ref_norm = normalize_latent<float>(ref.data, opt.latent_scale);
    Tensor<float> emotion_tokens;
    if (in.emotion_image.numel() > 0) {
        EmotionRef er = encode_emotion_ref(in.emotion_image, cfg.spatial_factor);
        emotion_tokens = normalize_latent<float>(er.tokens, opt.latent_scale);
    }

    SeededRng rng(opt.seed);
    Tensor<float> id_noise(Shape{w, h, c});
    rng.fill_normal(id_noise);
    Tensor<float> z(Shape{l, w, h, c});
    rng.fill_normal(z);

    std::size_t frame_sz = w * h * c;
    auto step_segment = [&](const Tensor<float>& seg, const Tensor<float>& seg_audio,
                            const Tensor<float>& seg_mask,
                            const FusionSegment& info) -> Tensor<float> {
        std::size_t sf = seg.extent(0);
        double t = double(info.k) / double(opt.steps);
        Tensor<float> z_in(Shape{sf + 1, w, h, c});
        for (std::size_t i = 0; i < frame_sz; ++i)
            z_in[i] = float((1.0 - t) * double(id_noise[i]) + t * double(ref_norm[i]));
        std::copy_n(seg.data(), seg.numel(), z_in.data() + frame_sz);

        ConditioningBundle<float> cond;
        cond.ref_latent = ref_norm;
        cond.aligned_audio = seg_audio;
        cond.mask_grid = seg_mask;
        cond.emotion_tokens = emotion_tokens;
        cond.text_ids = in.text_ids;
        cond.t = t;

        Tape<float> g;
        ForwardResult<float> out = forward(model, g, z_in, cond);
        Tensor<float> lam = rows_to_latent(out.velocity_rows->value, sf + 1, w, h);
        Tensor<float> next = seg;
        float dt = 1.0f / float(opt.steps);
        // The identity lane's velocity is discarded; only timeline frames move.
        for (std::size_t i = 0; i < seg.numel(); ++i) next[i] += dt * lam[frame_sz + i];
        return next;
    };

    InferenceResult res;
    res.timeline = l;
    if (l > f) {
        FusionConfig fc;
        fc.timeline = l;
        fc.f = f;
        fc.alpha = opt.alpha;
        fc.steps = opt.steps;
        z = fuse_denoise(step_segment, audio_timeline, mask.data, z, fc);
        res.used_fusion = true;
    } else {
        for (std::size_t k = 0; k < opt.steps; ++k) {
            FusionSegment whole;
            whole.k = k;
            whole.t = opt.steps - k;
            whole.start = 0;
            whole.end = l;
            z = step_segment(z, audio_timeline, mask.data, whole);
        }
    }

    res.latent = z;
    VideoLatent vz = VideoLatent::from_tensor(denormalize_latent(z, opt.latent_scale));
    res.video = decode_video(vz, cfg.spatial_factor, cfg.pixel_channels);
    return res;
}

// Deterministic per-frame shuffle of the audio's frame windows; used by the
// sync proxy's mismatched-audio arm.
inline WavData shuffle_audio_frames(const WavData& audio, std::size_t fps, std::size_t n_frames,
                                    std::uint64_t seed) {
    AudioFeatureConfig afc;
    afc.sample_rate = audio.sample_rate;
    afc.fps = fps;
    std::size_t hop = afc.hop();
    if (audio.samples.size() < n_frames * hop) throw ShapeError("shuffle: audio too short");
    std::vector<std::size_t> perm(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) perm[i] = i;
    SeededRng rng(seed);
    for (std::size_t i = n_frames; i > 1; --i)
        std::swap(perm[i - 1], perm[rng.next_below(i)]);
    WavData out = audio;
    for (std::size_t t = 0; t < n_frames; ++t)
        std::copy_n(audio.samples.begin() + std::ptrdiff_t(perm[t] * hop), hop,
                    out.samples.begin() + std::ptrdiff_t(t * hop));
    return out;
}

} // namespace avdt
