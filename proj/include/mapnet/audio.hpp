#pragma once

#include <complex>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "mapnet/pose_io.hpp"

namespace mapnet {

struct AudioClip {
    std::vector<double> samples;  // normalized to [-1, 1]
    int sample_rate_hz = 44100;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate_hz;
    }
};

// Feature block layout: [envelope:1 | mfcc:20 | chroma:12 | peaks:1 | rms:1].
inline constexpr int kAudioSteps = 150;
inline constexpr int kAudioDim = 35;
inline constexpr int kMfccDim = 20;
inline constexpr int kChromaDim = 12;
using AudioFeature = Eigen::MatrixXd;  // 150 x 35

struct StftParams {
    int n_fft = 2048;
    int hop_samples = 882;  // 3 s at 44.1 kHz -> exactly 150 frames
    int n_mels = 128;
    double log_floor = 1e-10;
    // CENS
    int cens_smooth_frames = 41;
    // Peak picking
    int peak_local_radius = 3;
    int peak_mean_radius = 7;
    double peak_delta_frac = 0.01;
    int peak_min_gap = 5;
};

struct UnsupportedFormat : std::runtime_error {
    explicit UnsupportedFormat(const std::string& what) : std::runtime_error(what) {}
};
struct BadWindowLength : std::runtime_error {
    explicit BadWindowLength(const std::string& what) : std::runtime_error(what) {}
};

AudioClip load_wav(const std::filesystem::path& path);
void save_wav(const AudioClip& clip, const std::filesystem::path& path);

// Linear-interpolation resample to a new rate.
AudioClip resample_linear(const AudioClip& clip, int target_rate_hz);

// Frame count for an arbitrary-length clip: ceil(n_samples / hop),
// centered frames (frame i spans [i*hop - n_fft/2, i*hop + n_fft/2)).
int num_frames(std::size_t n_samples, const StftParams& p);

// Magnitude spectrogram, frames x (n_fft/2 + 1), Hann window, zero padding.
Eigen::MatrixXd stft_magnitude(const std::vector<double>& samples, const StftParams& p);

// Slaney-style mel filterbank, n_mels x (n_fft/2 + 1).
Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, double sample_rate_hz);

// Per-window features; each expects exactly a 3 s window at the clip rate.
Eigen::VectorXd onset_envelope(const AudioClip& window, const StftParams& p = {});
Eigen::MatrixXd mfcc(const AudioClip& window, const StftParams& p = {});
Eigen::MatrixXd chroma_cens(const AudioClip& window, const StftParams& p = {});
Eigen::VectorXd rms(const AudioClip& window, const StftParams& p = {});
Eigen::VectorXd peak_onehot(const Eigen::VectorXd& envelope, const StftParams& p = {});

AudioFeature extract_audio_features(const AudioClip& window, const StftParams& p = {});

// Whole-clip RMS envelope resampled to the given rate (used for sync).
std::vector<double> rms_envelope_at(const AudioClip& clip, double rate_hz,
                                    double frame_s = 0.04);

namespace dsp {
// In-place radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& x);
// Orthonormal DCT-II matrix, n_out x n_in.
Eigen::MatrixXd dct2_matrix(int n_out, int n_in);
}  // namespace dsp

}  // namespace mapnet
