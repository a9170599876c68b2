// avdt command line: synthetic-data generation, flow-matching training,
// audio-driven inference with long-video fusion, the injection-mechanism
// ablation harness, fusion schedule tracing, and the sync proxy evaluation.
//
// Exit codes: 0 ok, 2 configuration error, 3 numeric failure, 1 I/O or other.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "avdt/avdt.hpp"

namespace {

using namespace avdt;

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) {
        RunConfig c;
        c.validate();
        return c;
    }
    return load_run_config(path);
}

Tensor<float> load_image_arg(const std::string& path) {
    Container c = Container::load(path);
    if (c.has("image")) return c.get_f32("image");
    if (c.has("video")) {
        Tensor<float> v = c.get_f32("video");
        Tensor<float> img(Shape{v.extent(1), v.extent(2), v.extent(3)});
        std::copy_n(v.data(), img.numel(), img.data());
        return img;
    }
    throw IoError("no image or video entry in " + path);
}

int cmd_synth_data(const std::string& config_path, const std::string& out_dir,
                   std::optional<std::size_t> clips, std::optional<std::uint64_t> seed,
                   std::optional<std::size_t> frames, std::optional<double> two_char_fraction) {
    RunConfig cfg = load_config_or_default(config_path);
    if (clips) cfg.synth.n_clips = *clips;
    if (seed) {
        cfg.seed = *seed;
        cfg.synth.seed = *seed;
    }
    if (frames) cfg.synth.frames = *frames;
    if (two_char_fraction) cfg.synth.two_char_fraction = *two_char_fraction;
    cfg.synth.validate();
    SynthReport rep = synth_dataset(out_dir, cfg.synth, config_hash(cfg));
    std::cout << "wrote " << rep.clips << " clips (" << rep.two_char_clips
              << " two-character) to " << out_dir << "\n"
              << "manifest: " << rep.manifest_path << "\n"
              << "min mouth/envelope correlation: " << rep.min_mouth_env_corr << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::string> dataset,
              std::optional<std::string> checkpoint, std::optional<std::size_t> steps,
              std::optional<double> lr, std::optional<std::string> optimizer,
              std::optional<std::string> mechanism, std::optional<std::uint64_t> seed,
              std::optional<std::string> loss_csv, std::optional<std::string> schedule,
              bool resume) {
    RunConfig cfg = load_config_or_default(config_path);
    if (dataset) cfg.dataset_dir = *dataset;
    if (checkpoint) cfg.checkpoint = *checkpoint;
    if (steps) cfg.train.steps = *steps;
    if (lr) cfg.train.lr = *lr;
    if (optimizer) cfg.train.optimizer = *optimizer;
    if (mechanism) cfg.model.mechanism = parse_mechanism(*mechanism);
    if (seed) {
        cfg.seed = *seed;
        cfg.train.seed = *seed;
    }
    if (loss_csv) cfg.loss_csv = *loss_csv;
    if (schedule) cfg.train.schedule = *schedule;
    cfg.validate();

    DatasetManifest manifest =
        DatasetManifest::load((std::filesystem::path(cfg.dataset_dir) / "manifest.json").string());
    TrainRunResult res = run_training(cfg, manifest, resume, [](std::size_t step, double loss) {
        if (step % 10 == 0) std::cout << "step " << step << " loss " << loss << "\n";
    });
    write_loss_csv(cfg.loss_csv, res.train, config_hash(cfg));
    std::cout << "checkpoint: " << res.checkpoint_path << " (step " << res.final_step << ")\n"
              << "loss curve: " << cfg.loss_csv << "\n";
    return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& ref_path,
              const std::string& audio_path, const std::string& boxes_path, int character,
              const std::string& emotion_ref, std::size_t length, std::size_t steps,
              std::size_t alpha, std::uint64_t seed, double latent_scale,
              const std::string& out_path, const std::string& dump_frames,
              const std::string& emotion_label, int identity) {
    LoadedCheckpoint<float> loaded = load_checkpoint<float>(checkpoint);
    Model<float>& model = loaded.model;

    InferenceInputs in;
    in.ref_image = load_image_arg(ref_path);
    in.audio = read_wav(audio_path);
    BoxFile boxes = load_box_file(boxes_path);
    if (character < 0 || std::size_t(character) >= boxes.characters.size())
        throw ConfigError("character index out of range for boxes file");
    if (length == 0) length = boxes.frames;
    if (boxes.frames < length) throw ConfigError("boxes file shorter than requested length");
    std::vector<std::vector<PixelBox>> face(length);
    for (std::size_t t = 0; t < length; ++t)
        face[t].push_back(boxes.characters[std::size_t(character)].face[t]);
    in.face_boxes = std::move(face);
    if (!emotion_ref.empty()) in.emotion_image = load_image_arg(emotion_ref);
    in.text_ids =
        build_text_ids(emotion_label, identity, model.cfg.text_vocab, model.cfg.text_len);

    InferenceOptions opt;
    opt.pixel_frames = length;
    opt.steps = steps;
    opt.alpha = alpha;
    opt.seed = seed;
    opt.latent_scale = latent_scale;

    AudioFeatureConfig afc;
    afc.sample_rate = in.audio.sample_rate;
    afc.d_audio = model.cfg.d_audio;
    InferenceResult res = infer(model, in, opt, afc);

    Container out;
    nlohmann::json meta{{"config_hash", loaded.meta.config_hash},
                        {"seed", seed},
                        {"steps", steps},
                        {"alpha", alpha},
                        {"length", length},
                        {"used_fusion", res.used_fusion}};
    out.add_bytes("__meta__", meta.dump());
    out.add_f32("video", res.video.data);
    out.add_f32("latent", res.latent);
    out.save(out_path);
    std::cout << "generated " << res.video.frames << " frames (timeline " << res.timeline
              << " latent frames, fusion " << (res.used_fusion ? "on" : "off") << ") -> "
              << out_path << "\n";
    if (!dump_frames.empty()) {
        dump_video_frames(dump_frames, res.video);
        std::cout << "frame dumps: " << dump_frames << "_*.png\n";
    }
    return 0;
}

int cmd_ablate(const std::string& config_path, std::optional<std::string> dataset,
               std::optional<std::size_t> steps, std::optional<std::uint64_t> seed,
               const std::string& out_path) {
    RunConfig cfg = load_config_or_default(config_path);
    if (dataset) cfg.dataset_dir = *dataset;
    if (steps) cfg.train.steps = *steps;
    if (seed) {
        cfg.seed = *seed;
        cfg.train.seed = *seed;
    }
    cfg.validate();
    DatasetManifest manifest =
        DatasetManifest::load((std::filesystem::path(cfg.dataset_dir) / "manifest.json").string());
    AblationReport rep = run_ablation(cfg, manifest);
    nlohmann::json j = rep;
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw IoError("cannot write report: " + out_path);
    f << j.dump(2) << "\n";
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_trace_fusion(std::size_t l, std::size_t f, std::size_t alpha, std::size_t steps,
                     const std::string& out_path) {
    FusionConfig cfg;
    cfg.timeline = l;
    cfg.f = f;
    cfg.alpha = alpha;
    cfg.steps = steps;
    FusionPlan plan = plan_segments(cfg);
    if (out_path.empty()) {
        trace_to_stream(plan, std::cout);
    } else {
        trace_to_file(plan, out_path);
        std::cout << "wrote " << plan.segments.size() << " segments to " << out_path << "\n";
    }
    return 0;
}

int cmd_eval_sync(const std::string& checkpoint, const std::string& dataset,
                  std::optional<std::size_t> max_clips, std::uint64_t seed, std::size_t steps,
                  double latent_scale, const std::string& out_path, bool untrained) {
    LoadedCheckpoint<float> loaded = load_checkpoint<float>(checkpoint);
    Model<float> model = std::move(loaded.model);
    if (untrained) // zero-velocity reference model with the same config
        model = build_model<float>(loaded.meta.config, loaded.meta.seed);

    DatasetManifest manifest =
        DatasetManifest::load((std::filesystem::path(dataset) / "manifest.json").string());
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.clips.size(); ++i)
        if (manifest.clips[i].characters == 1) idx.push_back(i);
    if (max_clips && idx.size() > *max_clips) idx.resize(*max_clips);
    if (idx.empty()) throw ConfigError("no single-character clips in dataset");

    InferenceOptions opt;
    opt.steps = steps;
    opt.seed = seed;
    opt.latent_scale = latent_scale;
    AudioFeatureConfig afc;
    afc.fps = manifest.fps;
    afc.sample_rate = manifest.sample_rate;
    afc.d_audio = model.cfg.d_audio;

    SyncReport rep = eval_sync(model, manifest, idx, opt, afc);
    rep.config_hash = loaded.meta.config_hash;
    nlohmann::json j = rep;
    if (!out_path.empty()) {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) throw IoError("cannot write report: " + out_path);
        f << j.dump(2) << "\n";
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"audio-driven avatar video diffusion toolkit (desk scale)"};
    app.require_subcommand(1);

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset");
    std::string s_config, s_out = "data";
    std::optional<std::size_t> s_clips, s_frames;
    std::optional<std::uint64_t> s_seed;
    std::optional<double> s_two;
    synth->add_option("--config", s_config, "run config JSON");
    synth->add_option("--out", s_out, "output directory");
    synth->add_option("--clips", s_clips, "number of clips");
    synth->add_option("--seed", s_seed, "generator seed");
    synth->add_option("--frames", s_frames, "pixel frames per clip ((f-1) mod 4 == 0)");
    synth->add_option("--two-char-fraction", s_two, "fraction of two-character clips");

    // train
    auto* train = app.add_subcommand("train", "flow-matching training");
    std::string t_config;
    std::optional<std::string> t_dataset, t_ckpt, t_opt, t_mech, t_csv, t_sched;
    std::optional<std::size_t> t_steps;
    std::optional<double> t_lr;
    std::optional<std::uint64_t> t_seed;
    bool t_resume = false;
    train->add_option("--config", t_config, "run config JSON");
    train->add_option("--dataset", t_dataset, "dataset directory");
    train->add_option("--checkpoint", t_ckpt, "checkpoint path");
    train->add_option("--steps", t_steps, "training steps");
    train->add_option("--lr", t_lr, "learning rate");
    train->add_option("--optimizer", t_opt, "adam|sgd");
    train->add_option("--mechanism", t_mech, "injection mechanism a|b|c");
    train->add_option("--seed", t_seed, "seed");
    train->add_option("--loss-csv", t_csv, "loss curve output");
    train->add_option("--schedule", t_sched, "single|two_stage");
    train->add_flag("--resume", t_resume, "resume from the checkpoint file");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "generate a talking video");
    std::string i_ckpt, i_ref, i_audio, i_boxes, i_emo, i_out = "out.avdt", i_dump;
    std::string i_emo_label = "neutral";
    int i_char = 0, i_identity = 0;
    std::size_t i_len = 0, i_steps = 25, i_alpha = 3;
    std::uint64_t i_seed = 0;
    double i_scale = 2.0;
    infer_cmd->add_option("--checkpoint", i_ckpt)->required();
    infer_cmd->add_option("--ref", i_ref, "reference image (.avdt)")->required();
    infer_cmd->add_option("--audio", i_audio, "driving audio (16-bit PCM mono WAV)")->required();
    infer_cmd->add_option("--boxes", i_boxes, "face boxes JSON")->required();
    infer_cmd->add_option("--character", i_char, "character index in the boxes file");
    infer_cmd->add_option("--emotion-ref", i_emo, "emotion reference image (.avdt)");
    infer_cmd->add_option("--emotion-label", i_emo_label, "emotion label for text conditioning");
    infer_cmd->add_option("--identity", i_identity, "identity id for text conditioning");
    infer_cmd->add_option("--length", i_len, "pixel frames to generate (default: boxes length)");
    infer_cmd->add_option("--steps", i_steps, "denoising steps");
    infer_cmd->add_option("--alpha", i_alpha, "fusion position-shift offset");
    infer_cmd->add_option("--seed", i_seed, "noise seed");
    infer_cmd->add_option("--latent-scale", i_scale, "latent normalization scale");
    infer_cmd->add_option("--out", i_out, "output container");
    infer_cmd->add_option("--dump-frames", i_dump, "PNG frame dump prefix");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "compare the three injection mechanisms");
    std::string a_config, a_out = "ablation.json";
    std::optional<std::string> a_dataset;
    std::optional<std::size_t> a_steps;
    std::optional<std::uint64_t> a_seed;
    ablate->add_option("--config", a_config, "run config JSON");
    ablate->add_option("--dataset", a_dataset, "dataset directory");
    ablate->add_option("--steps", a_steps, "training steps per arm");
    ablate->add_option("--seed", a_seed, "seed");
    ablate->add_option("--out", a_out, "report path");

    // trace-fusion
    auto* trace = app.add_subcommand("trace-fusion", "dump the long-video fusion schedule");
    std::size_t f_l = 0, f_f = 0, f_alpha = 3, f_steps = 25;
    std::string f_out;
    trace->add_option("--l", f_l, "timeline length (latent frames)")->required();
    trace->add_option("--f", f_f, "segment length")->required();
    trace->add_option("--alpha", f_alpha, "position-shift offset");
    trace->add_option("--steps", f_steps, "denoising steps");
    trace->add_option("--out", f_out, "CSV path (stdout when omitted)");

    // eval-sync
    auto* evals = app.add_subcommand("eval-sync", "audio/mouth sync proxy score");
    std::string e_ckpt, e_dataset, e_out;
    std::optional<std::size_t> e_clips;
    std::uint64_t e_seed = 0;
    std::size_t e_steps = 25;
    double e_scale = 2.0;
    bool e_untrained = false;
    evals->add_option("--checkpoint", e_ckpt)->required();
    evals->add_option("--dataset", e_dataset, "held-out dataset directory")->required();
    evals->add_option("--clips", e_clips, "max clips to score");
    evals->add_option("--seed", e_seed, "generation seed");
    evals->add_option("--steps", e_steps, "denoising steps");
    evals->add_option("--latent-scale", e_scale, "latent normalization scale");
    evals->add_option("--out", e_out, "report path");
    evals->add_flag("--untrained", e_untrained,
                    "score a freshly initialized model with the checkpoint's config");

    try {
        app.parse(argc, argv);
        if (synth->parsed())
            return cmd_synth_data(s_config, s_out, s_clips, s_seed, s_frames, s_two);
        if (train->parsed())
            return cmd_train(t_config, t_dataset, t_ckpt, t_steps, t_lr, t_opt, t_mech, t_seed,
                             t_csv, t_sched, t_resume);
        if (infer_cmd->parsed())
            return cmd_infer(i_ckpt, i_ref, i_audio, i_boxes, i_char, i_emo, i_len, i_steps,
                             i_alpha, i_seed, i_scale, i_out, i_dump, i_emo_label, i_identity);
        if (ablate->parsed()) return cmd_ablate(a_config, a_dataset, a_steps, a_seed, a_out);
        if (trace->parsed()) return cmd_trace_fusion(f_l, f_f, f_alpha, f_steps, f_out);
        if (evals->parsed())
            return cmd_eval_sync(e_ckpt, e_dataset, e_clips, e_seed, e_steps, e_scale, e_out,
                                 e_untrained);
        return 2;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 2;
    } catch (const avdt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const avdt::ShapeError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const avdt::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
