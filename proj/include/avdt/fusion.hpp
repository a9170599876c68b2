#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "avdt/audio_features.hpp"
#include "avdt/tensor.hpp"

namespace avdt {

// One model call in the long-video schedule. The slice [start, end) covers
// exactly f timeline frames; start >= end means it wraps past the end of the
// timeline (circular padding).
struct FusionSegment {
    std::size_t k = 0;       // 0-based denoising step, counted from t=T
    std::size_t t = 0;       // algorithm timestep value (T - k)
    std::size_t start = 0;
    std::size_t end = 0;
    bool wrapped = false;

    std::vector<std::size_t> indices(std::size_t timeline) const {
        std::vector<std::size_t> idx;
        if (!wrapped) {
            for (std::size_t i = start; i < end; ++i) idx.push_back(i);
        } else {
            for (std::size_t i = start; i < timeline; ++i) idx.push_back(i);
            for (std::size_t i = 0; i < end; ++i) idx.push_back(i);
        }
        return idx;
    }
};

struct FusionPlan {
    std::size_t timeline = 0; // l
    std::size_t f = 0;
    std::size_t steps = 0; // T
    std::vector<FusionSegment> segments;
};

struct FusionConfig {
    std::size_t timeline = 0; // l, latent frames
    std::size_t f = 0;        // model segment length (video frames per call)
    std::size_t alpha = 3;    // position-shift offset, 3..7 by default
    std::size_t steps = 25;   // denoising steps T

    void validate() const {
        if (alpha == 0) throw ConfigError("fusion: alpha must be positive");
        if (!(alpha < f)) throw ConfigError("fusion requires alpha < f");
        if (!(f < timeline)) throw ConfigError("fusion requires f < l");
    }
};

// Position-shift schedule: per timestep, segments of length f starting at
// the accumulated offset, advancing non-overlapping with circular padding at
// the timeline end; the offset grows by alpha per timestep.
inline FusionPlan plan_segments(const FusionConfig& cfg) {
    cfg.validate();
    FusionPlan plan;
    plan.timeline = cfg.timeline;
    plan.f = cfg.f;
    plan.steps = cfg.steps;
    std::size_t l = cfg.timeline, f = cfg.f;
    std::size_t shift = 0; // accumulated offset
    for (std::size_t k = 0; k < cfg.steps; ++k) {
        std::size_t s = shift % l; // keep the first slice in range
        std::size_t e = s + f;
        std::size_t n = 0;
        while (n < l) {
            FusionSegment seg;
            seg.k = k;
            seg.t = cfg.steps - k;
            seg.start = s;
            seg.end = e > l ? e - l : e; // store wrapped end inside [0,l]
            seg.wrapped = seg.start >= seg.end;
            plan.segments.push_back(seg);
            s += f;
            e += f;
            n += f;
            if (s > l || e > l) {
                s %= l;
                e %= l;
            }
        }
        shift += cfg.alpha;
    }
    return plan;
}

inline void trace_to_stream(const FusionPlan& plan, std::ostream& out) {
    out << "k,t,s,e,wrapped\n";
    for (const FusionSegment& s : plan.segments)
        out << s.k << "," << s.t << "," << s.start << "," << s.end << "," << (s.wrapped ? 1 : 0)
            << "\n";
}

inline void trace_to_file(const FusionPlan& plan, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write fusion trace: " + path);
    trace_to_stream(plan, f);
}

// One denoising update for a gathered segment. Receives the segment's
// latent frames [f,w,h,c], its audio block [f+1,40,d_a] and mask block
// [f+1,w,h] (identity frame attached at index 0), and the segment info.
using SegmentDenoiser = std::function<Tensor<float>(const Tensor<float>&, const Tensor<float>&,
                                                    const Tensor<float>&, const FusionSegment&)>;

// Double-buffered realization of the schedule: all segments of one timestep
// read the timestep-t buffer and write the t-1 buffer, so no segment ever
// observes another segment's output from the same timestep. Where a wrapped
// segment re-covers indices (f not dividing l), the later write wins.
inline Tensor<float> fuse_denoise(const SegmentDenoiser& denoiser,
                                  const Tensor<float>& audio_timeline,
                                  const Tensor<float>& mask_timeline, const Tensor<float>& z_start,
                                  const FusionConfig& cfg) {
    cfg.validate();
    std::size_t l = cfg.timeline, f = cfg.f;
    if (z_start.rank() != 4 || z_start.extent(0) != l)
        throw ShapeError("fuse_denoise: latent timeline must be [l,w,h,c]");
    if (audio_timeline.rank() != 3 || audio_timeline.extent(0) != l + 1 ||
        audio_timeline.extent(1) != kAudioTokensPerLatentFrame)
        throw ShapeError("fuse_denoise: audio timeline must be [l+1,40,d_a]");
    if (mask_timeline.rank() != 3 || mask_timeline.extent(0) != l + 1 ||
        mask_timeline.extent(1) != z_start.extent(1) ||
        mask_timeline.extent(2) != z_start.extent(2))
        throw ShapeError("fuse_denoise: mask timeline must be [l+1,w,h]");

    std::size_t frame_sz = z_start.numel() / l;
    std::size_t audio_sz = audio_timeline.numel() / (l + 1);
    std::size_t mask_sz = mask_timeline.numel() / (l + 1);

    FusionPlan plan = plan_segments(cfg);
    Tensor<float> cur = z_start;
    std::size_t seg_i = 0;
    for (std::size_t k = 0; k < cfg.steps; ++k) {
        Tensor<float> next(cur.shape());
        for (; seg_i < plan.segments.size() && plan.segments[seg_i].k == k; ++seg_i) {
            const FusionSegment& seg = plan.segments[seg_i];
            std::vector<std::size_t> idx = seg.indices(l);

            Tensor<float> seg_z(Shape{f, z_start.extent(1), z_start.extent(2), z_start.extent(3)});
            Tensor<float> seg_audio(
                Shape{f + 1, audio_timeline.extent(1), audio_timeline.extent(2)});
            Tensor<float> seg_mask(Shape{f + 1, mask_timeline.extent(1), mask_timeline.extent(2)});
            // Identity frame attachments come from timeline block 0.
            std::copy_n(audio_timeline.data(), audio_sz, seg_audio.data());
            std::copy_n(mask_timeline.data(), mask_sz, seg_mask.data());
            for (std::size_t p = 0; p < f; ++p) {
                std::copy_n(cur.data() + idx[p] * frame_sz, frame_sz,
                            seg_z.data() + p * frame_sz);
                std::copy_n(audio_timeline.data() + (idx[p] + 1) * audio_sz, audio_sz,
                            seg_audio.data() + (p + 1) * audio_sz);
                std::copy_n(mask_timeline.data() + (idx[p] + 1) * mask_sz, mask_sz,
                            seg_mask.data() + (p + 1) * mask_sz);
            }

            Tensor<float> out = denoiser(seg_z, seg_audio, seg_mask, seg);
            if (!out.same_shape(seg_z))
                throw ShapeError("fuse_denoise: denoiser changed the segment shape");
            for (std::size_t p = 0; p < f; ++p)
                std::copy_n(out.data() + p * frame_sz, frame_sz,
                            next.data() + idx[p] * frame_sz);
        }
        cur = std::move(next);
    }
    return cur;
}

} // namespace avdt
