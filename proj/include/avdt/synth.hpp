#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "avdt/audio_features.hpp"
#include "avdt/container.hpp"
#include "avdt/dataset.hpp"
#include "avdt/rng.hpp"
#include "avdt/wav.hpp"

namespace avdt {

struct SynthOptions {
    std::size_t n_clips = 64;
    std::uint64_t seed = 1;
    std::size_t frames = 29; // (f-1) mod 4 == 0
    std::size_t height = 8, width = 8, channels = 3;
    std::size_t fps = 25, sample_rate = 16000;
    double two_char_fraction = 0.25;
    std::size_t identities = 8;

    void validate() const {
        if (frames == 0 || (frames - 1) % kTemporalFactor != 0)
            throw ConfigError("synth frames must satisfy (f-1) mod 4 == 0");
        if (channels != 3) throw ConfigError("synth renders RGB clips");
        if (width < 8 || height < 8) throw ConfigError("synth canvas too small");
        if (sample_rate % fps != 0) throw ConfigError("sample rate must divide by fps");
    }
};

struct SynthReport {
    std::size_t clips = 0;
    std::size_t two_char_clips = 0;
    double min_mouth_env_corr = 1.0; // generator self-check, must stay >= 0.95
    std::string manifest_path;
};

namespace synth_detail {

struct Tint {
    float r, g, b;
};

inline Tint emotion_tint(const std::string& label) {
    if (label == "neutral") return {0.0f, 0.0f, 0.0f};
    if (label == "happy") return {0.18f, 0.10f, -0.08f};
    if (label == "sad") return {-0.10f, -0.04f, 0.18f};
    if (label == "angry") return {0.22f, -0.10f, -0.10f};
    throw ConfigError("unknown emotion label " + label);
}

struct CharacterLayout {
    PixelBox face;
    PixelBox mouth;
    PixelBox eyes[2];
};

// Static geometry; the animation is the mouth intensity pattern.
inline CharacterLayout layout_for(std::size_t width, std::size_t height, int character,
                                  int characters) {
    CharacterLayout c;
    int w = int(width), h = int(height);
    if (characters == 1) {
        c.face = {w / 8, h / 8, w - w / 8, h - h / 8};
    } else {
        int half = w / 2;
        int x0 = character == 0 ? 0 : half;
        c.face = {x0, h / 4, x0 + half, h - h / 8};
    }
    int fw = c.face.x1 - c.face.x0, fh = c.face.y1 - c.face.y0;
    int mw = std::max(2, (2 * fw) / 3 & ~1); // even pixel count keeps the checker zero-mean
    int mx0 = c.face.x0 + (fw - mw) / 2;
    int my0 = c.face.y0 + (2 * fh) / 3;
    c.mouth = {mx0, my0, mx0 + mw, std::min(c.face.y1, my0 + 2)};
    int ey = c.face.y0 + fh / 3;
    c.eyes[0] = {c.face.x0 + fw / 4, ey, c.face.x0 + fw / 4 + 1, ey + 1};
    c.eyes[1] = {c.face.x1 - fw / 4 - 1, ey, c.face.x1 - fw / 4, ey + 1};
    return c;
}

// Smooth positive amplitude envelope evaluated in frame units.
struct Envelope {
    double freq_hz;
    double phase;
    double fps;
    double at(double frame) const {
        return 0.5 + 0.45 * std::sin(2.0 * M_PI * freq_hz * frame / fps + phase);
    }
};

inline WavData render_audio(const Envelope& env, double carrier_hz, std::size_t frames,
                            std::size_t fps, std::size_t sample_rate) {
    WavData w;
    w.sample_rate = std::uint32_t(sample_rate);
    std::size_t n = frames * (sample_rate / fps);
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double frame_pos = double(i) * double(fps) / double(sample_rate);
        double a = 0.7 * env.at(frame_pos);
        w.samples[i] = float(a * std::sin(2.0 * M_PI * carrier_hz * double(i) / double(sample_rate)));
    }
    return w;
}

inline void fill_rect(Tensor<float>& frame, const PixelBox& b, float r, float g, float bl) {
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x) {
            frame.at3(std::size_t(y), std::size_t(x), 0) = std::clamp(r, 0.0f, 1.0f);
            frame.at3(std::size_t(y), std::size_t(x), 1) = std::clamp(g, 0.0f, 1.0f);
            frame.at3(std::size_t(y), std::size_t(x), 2) = std::clamp(bl, 0.0f, 1.0f);
        }
}

} // namespace synth_detail

// Emotion reference image: neutral canvas with the label's tint over the
// center region. Deterministic in the label alone.
inline Tensor<float> make_emotion_ref_image(const std::string& label, std::size_t height,
                                            std::size_t width) {
    synth_detail::Tint t = synth_detail::emotion_tint(label);
    Tensor<float> img(Shape{height, width, 3}, 0.5f);
    for (std::size_t y = height / 4; y < height - height / 4; ++y)
        for (std::size_t x = width / 4; x < width - width / 4; ++x) {
            img.at3(y, x, 0) = std::clamp(0.55f + t.r, 0.0f, 1.0f);
            img.at3(y, x, 1) = std::clamp(0.55f + t.g, 0.0f, 1.0f);
            img.at3(y, x, 2) = std::clamp(0.55f + t.b, 0.0f, 1.0f);
        }
    return img;
}

// Generate a deterministic toy corpus: colored faces whose mouth region's
// mean intensity tracks the audio amplitude envelope linearly and whose
// mouth-pixel variance tracks it too (checker contrast scaled by sqrt(env)).
// Two-character clips animate only the active character.
inline SynthReport synth_dataset(const std::string& out_dir, const SynthOptions& opt,
                                 const std::string& config_hash) {
    using namespace synth_detail;
    opt.validate();
    std::filesystem::create_directories(out_dir);

    SynthReport report;
    DatasetManifest manifest;
    manifest.fps = opt.fps;
    manifest.sample_rate = opt.sample_rate;
    manifest.config_hash = config_hash;
    manifest.dir = out_dir;

    // Emotion reference images, one per label.
    for (const std::string& label : emotion_labels()) {
        Tensor<float> img = make_emotion_ref_image(label, opt.height, opt.width);
        Container c;
        nlohmann::json meta{{"emotion", label}, {"config_hash", config_hash}};
        c.add_bytes("__meta__", meta.dump());
        c.add_f32("image", img);
        std::string rel = "emotion_" + label + ".avdt";
        c.save((std::filesystem::path(out_dir) / rel).string());
        manifest.emotion_refs[label] = rel;
    }

    SeededRng root(opt.seed);
    for (std::size_t ci = 0; ci < opt.n_clips; ++ci) {
        SeededRng rng = root.fork(ci + 1);
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "clip_%04zu", ci);
        std::string id = idbuf;

        int characters = rng.next_double() < opt.two_char_fraction ? 2 : 1;
        int active = characters == 2 ? int(rng.next_below(2)) : 0;
        int identity = int(rng.next_below(opt.identities));
        std::string emotion = emotion_labels()[rng.next_below(emotion_labels().size())];
        Tint tint = emotion_tint(emotion);

        // Identity-derived palette.
        auto color = [&](double lo, double hi) { return float(rng.next_uniform(lo, hi)); };
        float bg_r = color(0.05, 0.35), bg_g = color(0.05, 0.35), bg_b = color(0.05, 0.35);
        float face_r = std::clamp(color(0.45, 0.8) + tint.r, 0.0f, 1.0f);
        float face_g = std::clamp(color(0.45, 0.8) + tint.g, 0.0f, 1.0f);
        float face_b = std::clamp(color(0.45, 0.8) + tint.b, 0.0f, 1.0f);

        std::vector<Envelope> envs;
        std::vector<double> carriers;
        std::vector<CharacterLayout> layouts;
        for (int ch = 0; ch < characters; ++ch) {
            Envelope e;
            e.freq_hz = rng.next_uniform(0.6, 1.6);
            e.phase = rng.next_uniform(0.0, 2.0 * M_PI);
            e.fps = double(opt.fps);
            envs.push_back(e);
            std::size_t band = 2 + rng.next_below(6);
            carriers.push_back(band_center_hz(band, opt.sample_rate));
            layouts.push_back(layout_for(opt.width, opt.height, ch, characters));
        }

        // Render frames.
        Tensor<float> video(Shape{opt.frames, opt.height, opt.width, 3});
        std::vector<double> mouth_mean_series(opt.frames);
        for (std::size_t t = 0; t < opt.frames; ++t) {
            Tensor<float> frame(Shape{opt.height, opt.width, 3});
            fill_rect(frame, {0, 0, int(opt.width), int(opt.height)}, bg_r, bg_g, bg_b);
            for (int ch = 0; ch < characters; ++ch) {
                const CharacterLayout& lay = layouts[ch];
                float fr = face_r, fg = face_g, fb = face_b;
                if (ch == 1) { // second character gets a shifted palette
                    fr = std::clamp(1.0f - face_r, 0.0f, 1.0f);
                    fg = std::clamp(1.0f - face_g * 0.7f, 0.0f, 1.0f);
                }
                fill_rect(frame, lay.face, fr, fg, fb);
                fill_rect(frame, lay.eyes[0], 0.05f, 0.05f, 0.05f);
                fill_rect(frame, lay.eyes[1], 0.05f, 0.05f, 0.05f);

                // Mouth: mean tracks env, pixel variance tracks env.
                double env = ch == active ? envs[ch].at(double(t) + 0.5) : 0.0;
                double base = 0.28 + 0.30 * env;
                double contrast = 0.40 * std::sqrt(env);
                double acc = 0.0;
                std::size_t cnt = 0;
                for (int y = lay.mouth.y0; y < lay.mouth.y1; ++y)
                    for (int x = lay.mouth.x0; x < lay.mouth.x1; ++x) {
                        double checker = ((x + y) & 1) ? 1.0 : -1.0;
                        auto v = float(base + contrast * checker);
                        for (int cidx = 0; cidx < 3; ++cidx)
                            frame.at3(std::size_t(y), std::size_t(x), std::size_t(cidx)) =
                                std::clamp(v, 0.0f, 1.0f);
                        acc += double(v);
                        ++cnt;
                    }
                if (ch == active) mouth_mean_series[t] = acc / double(cnt);
            }
            std::copy_n(frame.data(), frame.numel(), video.data() + t * frame.numel());
        }

        // Audio tracks (one per character) and boxes.
        ManifestClip clip;
        clip.id = id;
        clip.identity = identity;
        clip.emotion = emotion;
        clip.characters = characters;
        clip.active_character = active;
        BoxFile boxes;
        boxes.frames = opt.frames;
        boxes.width = opt.width;
        boxes.height = opt.height;
        for (int ch = 0; ch < characters; ++ch) {
            WavData wav = render_audio(envs[ch], carriers[ch], opt.frames, opt.fps, opt.sample_rate);
            std::string rel = id + ".c" + std::to_string(ch) + ".wav";
            write_wav((std::filesystem::path(out_dir) / rel).string(), wav);
            clip.audio_tracks.push_back(rel);
            BoxTrack track;
            for (std::size_t t = 0; t < opt.frames; ++t) {
                track.face.push_back(layouts[ch].face);
                track.mouth.push_back(layouts[ch].mouth);
            }
            boxes.characters.push_back(std::move(track));
        }
        clip.audio = clip.audio_tracks[std::size_t(active)];

        // Generator self-check: audio RMS envelope vs rendered mouth mean.
        {
            AudioFeatureConfig afc;
            afc.sample_rate = opt.sample_rate;
            afc.fps = opt.fps;
            WavData active_wav =
                read_wav((std::filesystem::path(out_dir) / clip.audio).string());
            std::vector<double> env = amplitude_envelope(active_wav, opt.frames, afc);
            double corr = 0.0;
            {
                std::size_t n = env.size();
                double ma = 0, mb = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    ma += env[i];
                    mb += mouth_mean_series[i];
                }
                ma /= double(n);
                mb /= double(n);
                double sab = 0, saa = 0, sbb = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    sab += (env[i] - ma) * (mouth_mean_series[i] - mb);
                    saa += (env[i] - ma) * (env[i] - ma);
                    sbb += (mouth_mean_series[i] - mb) * (mouth_mean_series[i] - mb);
                }
                corr = sab / std::sqrt(saa * sbb);
            }
            report.min_mouth_env_corr = std::min(report.min_mouth_env_corr, corr);
            if (corr < 0.95)
                throw NumericError("synth self-check failed: mouth/envelope corr " +
                                   std::to_string(corr) + " on " + id);
        }

        std::string boxes_rel = id + ".boxes.json";
        {
            nlohmann::json j = boxes;
            std::ofstream f((std::filesystem::path(out_dir) / boxes_rel).string(),
                            std::ios::trunc);
            f << j.dump(2) << "\n";
        }
        clip.boxes = boxes_rel;

        std::string video_rel = id + ".avdt";
        {
            Container c;
            nlohmann::json meta{{"id", id},
                                {"emotion", emotion},
                                {"identity", identity},
                                {"fps", opt.fps},
                                {"config_hash", config_hash}};
            c.add_bytes("__meta__", meta.dump());
            c.add_f32("video", video);
            c.save((std::filesystem::path(out_dir) / video_rel).string());
        }
        clip.video = video_rel;

        manifest.clips.push_back(std::move(clip));
        if (characters == 2) ++report.two_char_clips;
        ++report.clips;
    }

    std::string manifest_path = (std::filesystem::path(out_dir) / "manifest.json").string();
    manifest.save(manifest_path);
    report.manifest_path = manifest_path;
    return report;
}

} // namespace avdt
