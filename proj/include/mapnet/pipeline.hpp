#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mapnet/audio.hpp"
#include "mapnet/noise.hpp"
#include "mapnet/pose.hpp"

namespace mapnet {

struct WindowSpec {
    double window_s = 3.0;
    double hop_s = 1.0;
};

enum class Split { Train, Valid, Test };
std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct SyncResult {
    double audio_offset_s = 0.0;  // added to audio timestamps to reach pose time
    double play_onset_s = 0.0;    // audio time
    double play_offset_s = 0.0;
};

struct SampleMeta {
    int trial_id = 0;
    int variant_id = 0;
    int window_id = 0;
    double window_start_s = 0.0;
    double tau = 1.0;
    Split split = Split::Train;
    bool has_swap = false;  // a swap event overlaps this window
};

struct Sample {
    SampleMeta meta;
    PoseSequence sparse_pose;   // noisy, downsampled
    AudioFeature audio;         // 150 x 35
    PoseSequence target_pose;   // clean, 50 fps, 150 frames
};

struct NoActivityDetected : std::runtime_error {
    NoActivityDetected() : std::runtime_error("no playing activity detected") {}
};
struct EmptyAfterTrim : std::runtime_error {
    EmptyAfterTrim() : std::runtime_error("streams empty after trimming") {}
};
struct UnsupportedTau : std::runtime_error {
    explicit UnsupportedTau(double tau)
        : std::runtime_error("unsupported tau: " + std::to_string(tau)) {}
};
struct TooFewGroups : std::runtime_error {
    explicit TooFewGroups(std::size_t n)
        : std::runtime_error("too few groups for an 8:1:1 split: " + std::to_string(n)) {}
};

struct SyncParams {
    double rms_threshold = 0.02;
    double sustain_s = 0.2;
    double max_lag_s = 2.0;
};

// Onset/offset of playing from the audio RMS envelope, plus the audio-to-pose
// lag from cross-correlating the envelope with right-wrist speed at 50 Hz.
SyncResult synchronize(const AudioClip& audio, const PoseSequence& pose,
                       const SyncParams& params = {});

std::pair<PoseSequence, AudioClip> trim(const PoseSequence& pose, const AudioClip& audio,
                                        const SyncResult& sync);

struct WindowPair {
    PoseSequence pose;
    AudioClip audio;
    double start_s = 0.0;
};

std::vector<WindowPair> slice_windows(const PoseSequence& pose, const AudioClip& audio,
                                      const WindowSpec& spec);

// Stride subsampling; tau in {1.0, 0.5, 0.33} -> stride {1, 2, 3}.
PoseSequence downsample(const PoseSequence& window, double tau);
int stride_for_tau(double tau);

// Shuffle (trial, variant) groups by seed, assign 80/10/10 by count.
// Keys are arbitrary distinct group identifiers.
std::vector<std::pair<std::string, Split>> split_dataset(
    const std::vector<std::string>& group_keys, std::uint64_t seed,
    bool allow_degenerate = false);

struct SynthMotionParams {
    double bow_freq_min_hz = 0.5;
    double bow_freq_max_hz = 4.0;
    double bow_amp_min_mm = 250.0;
    double bow_amp_max_mm = 500.0;
    double segment_min_s = 1.5;
    double segment_max_s = 4.0;
    double tone_hz = 220.0;
    double sway_amp_mm = 30.0;
};

struct SynthTrial {
    PoseSequence pose;           // 50 fps
    AudioClip audio;             // 44.1 kHz
    std::vector<double> reversal_times_s;  // bow direction reversals
};

// Coupled synthetic trial: right wrist follows a piecewise-sinusoidal bowing
// trajectory; the audio is a sawtooth whose amplitude tracks wrist speed with
// a sharp burst at each direction reversal.
SynthTrial synth_generate(double duration_s, const SynthMotionParams& params,
                          std::uint64_t seed);

// ---- Dataset archive ----

struct ArchiveManifest {
    std::vector<double> taus;
    WindowSpec window;
    NoiseParams noise;
    std::uint64_t split_seed = 0;
    std::vector<SampleMeta> samples;
};

class DatasetArchive {
public:
    explicit DatasetArchive(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const { return root_; }
    static std::string sample_stem(const SampleMeta& m);

    void write_manifest(const ArchiveManifest& manifest) const;
    ArchiveManifest read_manifest() const;

    void write_sample(const Sample& sample) const;
    Sample read_sample(const SampleMeta& meta) const;

private:
    std::filesystem::path root_;
};

}  // namespace mapnet
