#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "avdt/aem.hpp"
#include "avdt/audio_features.hpp"
#include "avdt/backbone.hpp"
#include "avdt/container.hpp"
#include "avdt/vae.hpp"
#include "avdt/wav.hpp"

namespace avdt {

// Latents are trained and sampled in a centered scale; the VAE itself stays
// untouched so its roundtrip remains bit-exact.
inline float normalize_latent_value(float v, double scale) {
    return float((double(v) - 0.5) * scale);
}
inline float denormalize_latent_value(float v, double scale) {
    return float(double(v) / scale + 0.5);
}

template <typename T>
Tensor<T> normalize_latent(const Tensor<float>& t, double scale) {
    Tensor<T> out(t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i)
        out[i] = T((double(t[i]) - 0.5) * scale);
    return out;
}

inline Tensor<float> denormalize_latent(const Tensor<float>& t, double scale) {
    Tensor<float> out(t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i)
        out[i] = std::clamp(float(double(t[i]) / scale + 0.5), 0.0f, 1.0f);
    return out;
}

// ============================================================================
// Face/mouth box tracks
// ============================================================================

struct BoxTrack {
    std::vector<PixelBox> face;  // one per pixel frame
    std::vector<PixelBox> mouth; // one per pixel frame
};

struct BoxFile {
    std::size_t frames = 0, width = 0, height = 0;
    std::vector<BoxTrack> characters;

    std::vector<std::vector<PixelBox>> face_boxes(std::size_t character) const {
        std::vector<std::vector<PixelBox>> out(frames);
        for (std::size_t t = 0; t < frames; ++t)
            out[t].push_back(characters.at(character).face.at(t));
        return out;
    }
};

inline void to_json(nlohmann::json& j, const PixelBox& b) {
    j = nlohmann::json::array({b.x0, b.y0, b.x1, b.y1});
}
inline void from_json(const nlohmann::json& j, PixelBox& b) {
    b.x0 = j.at(0).get<int>();
    b.y0 = j.at(1).get<int>();
    b.x1 = j.at(2).get<int>();
    b.y1 = j.at(3).get<int>();
}

inline void to_json(nlohmann::json& j, const BoxTrack& t) {
    j = nlohmann::json{{"face", t.face}, {"mouth", t.mouth}};
}
inline void from_json(const nlohmann::json& j, BoxTrack& t) {
    j.at("face").get_to(t.face);
    j.at("mouth").get_to(t.mouth);
}

inline void to_json(nlohmann::json& j, const BoxFile& b) {
    j = nlohmann::json{{"frames", b.frames},
                       {"width", b.width},
                       {"height", b.height},
                       {"characters", b.characters}};
}
inline void from_json(const nlohmann::json& j, BoxFile& b) {
    j.at("frames").get_to(b.frames);
    j.at("width").get_to(b.width);
    j.at("height").get_to(b.height);
    j.at("characters").get_to(b.characters);
}

inline BoxFile load_box_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open boxes file: " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    BoxFile b = j.get<BoxFile>();
    for (const BoxTrack& t : b.characters)
        if (t.face.size() != b.frames || t.mouth.size() != b.frames)
            throw ShapeError("boxes file frame count mismatch: " + path);
    return b;
}

// ============================================================================
// Dataset manifest
// ============================================================================

inline const std::vector<std::string>& emotion_labels() {
    static const std::vector<std::string> labels{"neutral", "happy", "sad", "angry"};
    return labels;
}

inline int emotion_index(const std::string& label) {
    const auto& labels = emotion_labels();
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return int(i);
    throw ConfigError("unknown emotion label: " + label);
}

struct ManifestClip {
    std::string id;
    std::string video;
    std::string audio; // active character's track
    std::string boxes;
    std::string emotion = "neutral";
    int identity = 0;
    int characters = 1;
    int active_character = 0;
    std::vector<std::string> audio_tracks; // per character (two-character clips)
};

inline void to_json(nlohmann::json& j, const ManifestClip& c) {
    j = nlohmann::json{{"id", c.id},
                       {"video", c.video},
                       {"audio", c.audio},
                       {"boxes", c.boxes},
                       {"emotion", c.emotion},
                       {"identity", c.identity},
                       {"characters", c.characters},
                       {"active_character", c.active_character},
                       {"audio_tracks", c.audio_tracks}};
}
inline void from_json(const nlohmann::json& j, ManifestClip& c) {
    j.at("id").get_to(c.id);
    j.at("video").get_to(c.video);
    j.at("audio").get_to(c.audio);
    j.at("boxes").get_to(c.boxes);
    j.at("emotion").get_to(c.emotion);
    j.at("identity").get_to(c.identity);
    j.at("characters").get_to(c.characters);
    j.at("active_character").get_to(c.active_character);
    j.at("audio_tracks").get_to(c.audio_tracks);
}

struct DatasetManifest {
    std::size_t fps = 25;
    std::size_t sample_rate = 16000;
    std::string config_hash;
    std::vector<ManifestClip> clips;
    std::map<std::string, std::string> emotion_refs;
    std::string dir; // directory the manifest was loaded from

    std::string resolve(const std::string& rel) const {
        return (std::filesystem::path(dir) / rel).string();
    }

    static DatasetManifest load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot open manifest: " + path);
        nlohmann::json j = nlohmann::json::parse(f);
        DatasetManifest m;
        j.at("fps").get_to(m.fps);
        j.at("sample_rate").get_to(m.sample_rate);
        j.at("config_hash").get_to(m.config_hash);
        j.at("clips").get_to(m.clips);
        j.at("emotion_refs").get_to(m.emotion_refs);
        m.dir = std::filesystem::path(path).parent_path().string();
        for (const ManifestClip& c : m.clips) {
            for (const std::string& rel : {c.video, c.audio, c.boxes})
                if (!std::filesystem::exists(m.resolve(rel)))
                    throw IoError("manifest references missing file: " + rel);
            for (const std::string& rel : c.audio_tracks)
                if (!std::filesystem::exists(m.resolve(rel)))
                    throw IoError("manifest references missing file: " + rel);
        }
        for (const auto& [label, rel] : m.emotion_refs)
            if (!std::filesystem::exists(m.resolve(rel)))
                throw IoError("manifest references missing emotion ref: " + rel);
        return m;
    }

    void save(const std::string& path) const {
        nlohmann::json j{{"fps", fps},
                         {"sample_rate", sample_rate},
                         {"config_hash", config_hash},
                         {"clips", clips},
                         {"emotion_refs", emotion_refs}};
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IoError("cannot write manifest: " + path);
        f << j.dump(2) << "\n";
    }
};

// ============================================================================
// Loaded clips and model-ready training examples
// ============================================================================

struct ClipData {
    ManifestClip info;
    Tensor<float> video; // [f,H,W,C]
    WavData audio;       // active track
    BoxFile boxes;
};

inline ClipData load_clip(const DatasetManifest& m, const ManifestClip& info) {
    ClipData c;
    c.info = info;
    Container vc = Container::load(m.resolve(info.video));
    c.video = vc.get_f32("video");
    if (c.video.rank() != 4) throw ShapeError("clip video must be [f,H,W,C]: " + info.id);
    c.audio = read_wav(m.resolve(info.audio));
    if (c.audio.sample_rate != m.sample_rate)
        throw ShapeError("clip audio sample rate mismatch: " + info.id);
    c.boxes = load_box_file(m.resolve(info.boxes));
    if (c.boxes.frames != c.video.extent(0) || c.boxes.width != c.video.extent(2) ||
        c.boxes.height != c.video.extent(1))
        throw ShapeError("clip boxes do not match video extents: " + info.id);
    if (info.active_character < 0 || std::size_t(info.active_character) >= c.boxes.characters.size())
        throw ShapeError("active character out of range: " + info.id);
    return c;
}

inline Tensor<float> load_emotion_ref_image(const DatasetManifest& m, const std::string& label) {
    auto it = m.emotion_refs.find(label);
    if (it == m.emotion_refs.end()) throw ConfigError("dataset has no emotion ref for " + label);
    Container c = Container::load(m.resolve(it->second));
    return c.get_f32("image");
}

// Deterministic text ids from the clip's labels.
inline std::vector<int> build_text_ids(const std::string& emotion, int identity,
                                       std::size_t vocab, std::size_t len) {
    if (vocab < 16) throw ConfigError("text vocab must be at least 16");
    std::vector<int> ids(len, 0);
    ids[0] = 1;
    if (len > 1) ids[1] = 2 + emotion_index(emotion);
    if (len > 2) ids[2] = 8 + identity % int(vocab - 8);
    return ids;
}

// Everything forward() needs for one clip, in model precision.
struct TrainingExample {
    Tensor<float> z1;             // [f_seg,w,h,c] clean latent incl. identity frame
    ConditioningBundle<float> cond; // t filled per step
};

template <typename TModelCfg>
TrainingExample build_training_example(const ClipData& clip,
                                       const Tensor<float>& emotion_image,
                                       const TModelCfg& cfg, const AudioFeatureConfig& afc,
                                       double latent_scale) {
    std::size_t f_pixels = clip.video.extent(0);
    PixelVideo pv = PixelVideo::from_tensor(clip.video);
    VideoLatent z = encode_video(pv, cfg.spatial_factor);
    if (z.w != cfg.latent_w || z.h != cfg.latent_h || z.c != cfg.latent_c())
        throw ShapeError("clip latent extents do not match model config");
    if (z.frames + 1 != cfg.f_seg)
        throw ShapeError("clip length gives " + std::to_string(z.frames + 1) +
                         " segment frames, model expects " + std::to_string(cfg.f_seg));

    // Reference image: pixel frame 0.
    Tensor<float> ref_img(Shape{pv.height, pv.width, pv.channels});
    std::copy_n(pv.data.data(), ref_img.numel(), ref_img.data());
    ImageLatent ref = encode_image(ref_img, cfg.spatial_factor);

    TrainingExample ex;
    ex.z1 = Tensor<float>(Shape{cfg.f_seg, z.w, z.h, z.c});
    std::size_t frame_sz = z.w * z.h * z.c;
    // Identity frame first, then the video latent frames.
    for (std::size_t i = 0; i < frame_sz; ++i)
        ex.z1[i] = normalize_latent_value(ref.data[i], latent_scale);
    for (std::size_t i = 0; i < z.frames * frame_sz; ++i)
        ex.z1[frame_sz + i] = normalize_latent_value(z.data[i], latent_scale);

    ex.cond.ref_latent = normalize_latent<float>(ref.data, latent_scale);
    Tensor<float> feats = extract_audio_features(clip.audio, f_pixels, afc);
    ex.cond.aligned_audio = align_audio(feats, f_pixels);
    FaceMaskGrid mask = align_face_mask(clip.boxes.face_boxes(std::size_t(clip.info.active_character)),
                                        f_pixels, pv.width, pv.height, cfg.spatial_factor);
    ex.cond.mask_grid = mask.data;
    EmotionRef er = encode_emotion_ref(emotion_image, cfg.spatial_factor);
    ex.cond.emotion_tokens = normalize_latent<float>(er.tokens, latent_scale);
    ex.cond.text_ids = build_text_ids(clip.info.emotion, clip.info.identity, cfg.text_vocab,
                                      cfg.text_len);
    return ex;
}

} // namespace avdt
