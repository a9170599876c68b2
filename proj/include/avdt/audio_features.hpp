#pragma once

#include <cmath>
#include <vector>

#include "avdt/tensor.hpp"
#include "avdt/vae.hpp"
#include "avdt/wav.hpp"

namespace avdt {

inline constexpr std::size_t kAudioBands = 10;
// 4 source frames x 10 band tokens per latent frame.
inline constexpr std::size_t kAudioTokensPerLatentFrame = kTemporalFactor * kAudioBands;

struct AudioFeatureConfig {
    std::size_t sample_rate = 16000;
    std::size_t fps = 25;
    std::size_t d_audio = 8;

    std::size_t hop() const {
        if (fps == 0 || sample_rate % fps != 0)
            throw ConfigError("audio sample rate must be a multiple of fps");
        return sample_rate / fps;
    }
};

namespace audio_detail {

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular filterbank edges, mel-spaced between 100 Hz and 0.95 * Nyquist.
inline std::vector<double> band_edges(std::size_t sample_rate) {
    double lo = hz_to_mel(100.0);
    double hi = hz_to_mel(0.95 * double(sample_rate) / 2.0);
    std::vector<double> edges(kAudioBands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(lo + (hi - lo) * double(i) / double(kAudioBands + 1));
    return edges;
}

} // namespace audio_detail

inline double band_center_hz(std::size_t band, std::size_t sample_rate) {
    if (band >= kAudioBands) throw ConfigError("band index out of range");
    return audio_detail::band_edges(sample_rate)[band + 1];
}

inline constexpr double kLogFloor = 1e-8;

// Deterministic log-energy filterbank stand-in for a pretrained audio
// encoder: per video frame, a Hann-windowed power spectrum reduced to 10
// triangular bands; each band's log energy is broadcast to a d_audio token.
// Output shape [n', 10, d_audio].
inline Tensor<float> extract_audio_features(const WavData& audio, std::size_t n_frames,
                                            const AudioFeatureConfig& cfg) {
    if (audio.sample_rate != cfg.sample_rate)
        throw ConfigError("audio sample rate mismatch: wav " + std::to_string(audio.sample_rate) +
                          " vs config " + std::to_string(cfg.sample_rate));
    std::size_t hop = cfg.hop();
    if (audio.samples.size() < n_frames * hop)
        throw ShapeError("audio too short: need " + std::to_string(n_frames * hop) +
                         " samples for " + std::to_string(n_frames) + " frames, have " +
                         std::to_string(audio.samples.size()));

    std::size_t bins = hop / 2 + 1;
    std::vector<double> edges = audio_detail::band_edges(cfg.sample_rate);

    // Triangular weights per band over DFT bins.
    std::vector<std::vector<double>> weights(kAudioBands, std::vector<double>(bins, 0.0));
    for (std::size_t b = 0; b < kAudioBands; ++b) {
        double f0 = edges[b], f1 = edges[b + 1], f2 = edges[b + 2];
        for (std::size_t k = 0; k < bins; ++k) {
            double fk = double(k) * double(cfg.sample_rate) / double(hop);
            if (fk > f0 && fk < f1)
                weights[b][k] = (fk - f0) / (f1 - f0);
            else if (fk >= f1 && fk < f2)
                weights[b][k] = (f2 - fk) / (f2 - f1);
        }
    }

    std::vector<double> hann(hop);
    for (std::size_t i = 0; i < hop; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(hop));

    // Twiddle table for the naive real DFT: cos/sin of 2*pi*r/hop.
    std::vector<double> tc(hop), ts(hop);
    for (std::size_t r = 0; r < hop; ++r) {
        tc[r] = std::cos(2.0 * M_PI * double(r) / double(hop));
        ts[r] = std::sin(2.0 * M_PI * double(r) / double(hop));
    }

    Tensor<float> out(Shape{n_frames, kAudioBands, cfg.d_audio});
    std::vector<double> win(hop), power(bins);
    for (std::size_t t = 0; t < n_frames; ++t) {
        for (std::size_t i = 0; i < hop; ++i)
            win[i] = double(audio.samples[t * hop + i]) * hann[i];
        for (std::size_t k = 0; k < bins; ++k) {
            double re = 0, im = 0;
            for (std::size_t mIdx = 0; mIdx < hop; ++mIdx) {
                std::size_t r = (k * mIdx) % hop;
                re += win[mIdx] * tc[r];
                im -= win[mIdx] * ts[r];
            }
            power[k] = (re * re + im * im) / double(hop);
        }
        for (std::size_t b = 0; b < kAudioBands; ++b) {
            double e = 0;
            for (std::size_t k = 0; k < bins; ++k) e += weights[b][k] * power[k];
            auto v = float(std::log(e + kLogFloor));
            for (std::size_t m = 0; m < cfg.d_audio; ++m) out.at3(t, b, m) = v;
        }
    }
    return out;
}

// Eq.-4 temporal alignment: pad (n+1)*4 - n' frames before frame 0 by edge
// replication, then merge each group of 4 frames into one 40-token block.
// [n',10,d] -> [n+1, 40, d] with n = floor(n'/4) + 1.
inline Tensor<float> align_audio(const Tensor<float>& g0, std::size_t n_frames) {
    if (g0.rank() != 3 || g0.extent(1) != kAudioBands)
        throw ShapeError("align_audio: features must be [n',10,d]");
    if (g0.extent(0) != n_frames) throw ShapeError("align_audio: frame count mismatch");
    if (n_frames == 0) throw ShapeError("align_audio: empty feature sequence");
    std::size_t d = g0.extent(2);
    std::size_t n = n_frames / kTemporalFactor + 1;
    std::size_t total = (n + 1) * kTemporalFactor;
    std::size_t pad = total - n_frames;
    Tensor<float> out(Shape{n + 1, kTemporalFactor * kAudioBands, d});
    for (std::size_t grp = 0; grp < n + 1; ++grp)
        for (std::size_t dt = 0; dt < kTemporalFactor; ++dt) {
            std::size_t p = grp * kTemporalFactor + dt;
            std::size_t src = p < pad ? 0 : p - pad;
            for (std::size_t b = 0; b < kAudioBands; ++b)
                for (std::size_t m = 0; m < d; ++m)
                    out.at3(grp, dt * kAudioBands + b, m) = g0.at3(src, b, m);
        }
    return out;
}

// Per-pixel-frame RMS amplitude envelope, used by the synthetic generator
// self-check and the sync proxy.
inline std::vector<double> amplitude_envelope(const WavData& audio, std::size_t n_frames,
                                              const AudioFeatureConfig& cfg) {
    std::size_t hop = cfg.hop();
    if (audio.samples.size() < n_frames * hop) throw ShapeError("envelope: audio too short");
    std::vector<double> env(n_frames);
    for (std::size_t t = 0; t < n_frames; ++t) {
        double acc = 0;
        for (std::size_t i = 0; i < hop; ++i) {
            double s = audio.samples[t * hop + i];
            acc += s * s;
        }
        env[t] = std::sqrt(acc / double(hop));
    }
    return env;
}

} // namespace avdt
