#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "avdt/audio_features.hpp"
#include "avdt/backbone.hpp"
#include "avdt/flowmatch.hpp"
#include "avdt/synth.hpp"

namespace avdt {

// Full run configuration: every command is reproducible from this plus the
// seed. Unknown keys are rejected so typos cannot silently change a run.
struct RunConfig {
    std::uint64_t seed = 7;
    ModelConfig model;
    AudioFeatureConfig audio;
    TrainOptions train;
    double latent_scale = 2.0;
    std::size_t fusion_alpha = 3;
    std::size_t fusion_steps = 25; // denoising steps at inference
    SynthOptions synth;
    std::string dataset_dir = "data";
    std::string checkpoint = "checkpoint.avdt";
    std::string loss_csv = "loss.csv";

    void validate() const {
        model.validate();
        train.validate();
        if (latent_scale <= 0) throw ConfigError("latent_scale must be positive");
        if (fusion_steps == 0) throw ConfigError("fusion.steps must be positive");
        synth.validate();
    }
};

namespace config_detail {

inline void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    if (!j.is_object()) throw ConfigError("config section " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown config key '" + where + "." + it.key() + "'");
}

} // namespace config_detail

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["model"] = {{"d_model", c.model.d_model},
                  {"n_heads", c.model.n_heads},
                  {"n_double", c.model.n_double},
                  {"n_single", c.model.n_single},
                  {"latent_w", c.model.latent_w},
                  {"latent_h", c.model.latent_h},
                  {"pixel_channels", c.model.pixel_channels},
                  {"spatial_factor", c.model.spatial_factor},
                  {"f_seg", c.model.f_seg},
                  {"text_vocab", c.model.text_vocab},
                  {"text_len", c.model.text_len},
                  {"d_audio", c.model.d_audio},
                  {"mlp_ratio", c.model.mlp_ratio},
                  {"faa_double", c.model.faa_double},
                  {"faa_single", c.model.faa_single}};
    j["injection"] = {{"mechanism", mechanism_name(c.model.mechanism)}};
    j["audio"] = {{"fps", c.audio.fps}, {"sample_rate", c.audio.sample_rate}};
    j["train"] = {{"steps", c.train.steps},
                  {"batch_size", c.train.batch_size},
                  {"lr", c.train.lr},
                  {"optimizer", c.train.optimizer},
                  {"logit_m", c.train.logit.m},
                  {"logit_s", c.train.logit.s},
                  {"schedule", c.train.schedule},
                  {"image_ratio", c.train.image_ratio},
                  {"stage1_fraction", c.train.stage1_fraction}};
    j["latent_scale"] = c.latent_scale;
    j["fusion"] = {{"alpha", c.fusion_alpha}, {"steps", c.fusion_steps}};
    j["synth"] = {{"clips", c.synth.n_clips},
                  {"frames", c.synth.frames},
                  {"height", c.synth.height},
                  {"width", c.synth.width},
                  {"two_char_fraction", c.synth.two_char_fraction},
                  {"identities", c.synth.identities}};
    j["paths"] = {{"dataset", c.dataset_dir},
                  {"checkpoint", c.checkpoint},
                  {"loss_csv", c.loss_csv}};
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    using config_detail::require_keys;
    require_keys(j, {"seed", "model", "injection", "audio", "train", "latent_scale", "fusion",
                     "synth", "paths"},
                 "");
    RunConfig c;
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("model")) {
        const auto& m = j["model"];
        require_keys(m,
                     {"d_model", "n_heads", "n_double", "n_single", "latent_w", "latent_h",
                      "pixel_channels", "spatial_factor", "f_seg", "text_vocab", "text_len",
                      "d_audio", "mlp_ratio", "faa_double", "faa_single"},
                     "model");
        auto get = [&](const char* k, auto& dst) {
            if (m.contains(k)) dst = m[k].template get<std::decay_t<decltype(dst)>>();
        };
        get("d_model", c.model.d_model);
        get("n_heads", c.model.n_heads);
        get("n_double", c.model.n_double);
        get("n_single", c.model.n_single);
        get("latent_w", c.model.latent_w);
        get("latent_h", c.model.latent_h);
        get("pixel_channels", c.model.pixel_channels);
        get("spatial_factor", c.model.spatial_factor);
        get("f_seg", c.model.f_seg);
        get("text_vocab", c.model.text_vocab);
        get("text_len", c.model.text_len);
        get("d_audio", c.model.d_audio);
        get("mlp_ratio", c.model.mlp_ratio);
        get("faa_double", c.model.faa_double);
        get("faa_single", c.model.faa_single);
    }
    if (j.contains("injection")) {
        require_keys(j["injection"], {"mechanism"}, "injection");
        if (j["injection"].contains("mechanism"))
            c.model.mechanism = parse_mechanism(j["injection"]["mechanism"].get<std::string>());
    }
    if (j.contains("audio")) {
        require_keys(j["audio"], {"fps", "sample_rate"}, "audio");
        if (j["audio"].contains("fps")) c.audio.fps = j["audio"]["fps"].get<std::size_t>();
        if (j["audio"].contains("sample_rate"))
            c.audio.sample_rate = j["audio"]["sample_rate"].get<std::size_t>();
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        require_keys(t,
                     {"steps", "batch_size", "lr", "optimizer", "logit_m", "logit_s", "schedule",
                      "image_ratio", "stage1_fraction"},
                     "train");
        if (t.contains("steps")) c.train.steps = t["steps"].get<std::size_t>();
        if (t.contains("batch_size")) c.train.batch_size = t["batch_size"].get<std::size_t>();
        if (t.contains("lr")) c.train.lr = t["lr"].get<double>();
        if (t.contains("optimizer")) c.train.optimizer = t["optimizer"].get<std::string>();
        if (t.contains("logit_m")) c.train.logit.m = t["logit_m"].get<double>();
        if (t.contains("logit_s")) c.train.logit.s = t["logit_s"].get<double>();
        if (t.contains("schedule")) c.train.schedule = t["schedule"].get<std::string>();
        if (t.contains("image_ratio")) c.train.image_ratio = t["image_ratio"].get<double>();
        if (t.contains("stage1_fraction"))
            c.train.stage1_fraction = t["stage1_fraction"].get<double>();
    }
    if (j.contains("latent_scale")) c.latent_scale = j["latent_scale"].get<double>();
    if (j.contains("fusion")) {
        require_keys(j["fusion"], {"alpha", "steps"}, "fusion");
        if (j["fusion"].contains("alpha")) c.fusion_alpha = j["fusion"]["alpha"].get<std::size_t>();
        if (j["fusion"].contains("steps")) c.fusion_steps = j["fusion"]["steps"].get<std::size_t>();
    }
    if (j.contains("synth")) {
        const auto& s = j["synth"];
        require_keys(s, {"clips", "frames", "height", "width", "two_char_fraction", "identities"},
                     "synth");
        if (s.contains("clips")) c.synth.n_clips = s["clips"].get<std::size_t>();
        if (s.contains("frames")) c.synth.frames = s["frames"].get<std::size_t>();
        if (s.contains("height")) c.synth.height = s["height"].get<std::size_t>();
        if (s.contains("width")) c.synth.width = s["width"].get<std::size_t>();
        if (s.contains("two_char_fraction"))
            c.synth.two_char_fraction = s["two_char_fraction"].get<double>();
        if (s.contains("identities")) c.synth.identities = s["identities"].get<std::size_t>();
    }
    if (j.contains("paths")) {
        require_keys(j["paths"], {"dataset", "checkpoint", "loss_csv"}, "paths");
        if (j["paths"].contains("dataset")) c.dataset_dir = j["paths"]["dataset"].get<std::string>();
        if (j["paths"].contains("checkpoint"))
            c.checkpoint = j["paths"]["checkpoint"].get<std::string>();
        if (j["paths"].contains("loss_csv")) c.loss_csv = j["paths"]["loss_csv"].get<std::string>();
    }
    // Derived couplings.
    c.synth.seed = c.seed;
    c.synth.fps = c.audio.fps;
    c.synth.sample_rate = c.audio.sample_rate;
    c.synth.channels = c.model.pixel_channels;
    c.train.seed = c.seed;
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

// FNV-1a over the canonical (sorted-key) JSON dump.
inline std::string config_hash(const RunConfig& c) {
    std::string s = run_config_to_json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace avdt
