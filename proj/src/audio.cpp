#include "mapnet/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace mapnet {

namespace dsp {

void fft(std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    if (n == 0 || (n & (n - 1)) != 0) {
        throw std::invalid_argument("fft size must be a power of two");
    }
    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = x[i + k];
                const std::complex<double> v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

Eigen::MatrixXd dct2_matrix(int n_out, int n_in) {
    Eigen::MatrixXd d(n_out, n_in);
    const double scale = std::sqrt(2.0 / n_in);
    for (int k = 0; k < n_out; ++k) {
        const double row_scale = (k == 0) ? scale / std::sqrt(2.0) : scale;
        for (int n = 0; n < n_in; ++n) {
            d(k, n) = row_scale *
                      std::cos(std::numbers::pi * (n + 0.5) * k / static_cast<double>(n_in));
        }
    }
    return d;
}

}  // namespace dsp

int num_frames(std::size_t n_samples, const StftParams& p) {
    return static_cast<int>((n_samples + p.hop_samples - 1) / p.hop_samples);
}

Eigen::MatrixXd stft_magnitude(const std::vector<double>& samples, const StftParams& p) {
    const int frames = num_frames(samples.size(), p);
    const int bins = p.n_fft / 2 + 1;
    Eigen::MatrixXd mag(frames, bins);

    std::vector<double> window(static_cast<std::size_t>(p.n_fft));
    for (int i = 0; i < p.n_fft; ++i) {
        window[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / p.n_fft));
    }

    std::vector<std::complex<double>> buf(static_cast<std::size_t>(p.n_fft));
    const auto n = static_cast<long>(samples.size());
    for (int f = 0; f < frames; ++f) {
        const long center = static_cast<long>(f) * p.hop_samples;
        const long begin = center - p.n_fft / 2;
        for (int i = 0; i < p.n_fft; ++i) {
            const long idx = begin + i;
            const double s = (idx >= 0 && idx < n) ? samples[static_cast<std::size_t>(idx)] : 0.0;
            buf[i] = s * window[i];
        }
        dsp::fft(buf);
        for (int b = 0; b < bins; ++b) mag(f, b) = std::abs(buf[b]);
    }
    return mag;
}

namespace {

// Slaney-style mel scale.
double hz_to_mel(double hz) {
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    constexpr double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (hz < min_log_hz) return hz / f_sp;
    return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    constexpr double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (mel < min_log_mel) return mel * f_sp;
    return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

void check_window(const AudioClip& window) {
    if (window.sample_rate_hz <= 0) throw BadWindowLength("non-positive sample rate");
    const std::size_t expected = static_cast<std::size_t>(3) * window.sample_rate_hz;
    if (window.samples.size() != expected) {
        throw BadWindowLength("expected a 3 s window (" + std::to_string(expected) +
                              " samples), got " + std::to_string(window.samples.size()));
    }
}

// Hop that yields exactly kAudioSteps frames for a 3 s window.
StftParams window_params(const AudioClip& window, const StftParams& p) {
    StftParams q = p;
    q.hop_samples = static_cast<int>(window.samples.size() / kAudioSteps);
    if (q.hop_samples * kAudioSteps != static_cast<int>(window.samples.size())) {
        throw BadWindowLength("window length not divisible into 150 steps");
    }
    return q;
}

Eigen::MatrixXd log_mel_power(const AudioClip& window, const StftParams& p) {
    const Eigen::MatrixXd mag = stft_magnitude(window.samples, p);
    const Eigen::MatrixXd mel =
        mel_filterbank(p.n_mels, p.n_fft, window.sample_rate_hz);
    Eigen::MatrixXd mel_power = mag.array().square().matrix() * mel.transpose();
    return (mel_power.array().max(p.log_floor)).log().matrix();
}

}  // namespace

Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, double sample_rate_hz) {
    const int bins = n_fft / 2 + 1;
    const double mel_max = hz_to_mel(sample_rate_hz / 2.0);
    std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
    for (int i = 0; i < n_mels + 2; ++i) {
        edges[i] = mel_to_hz(mel_max * i / (n_mels + 1));
    }
    Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, bins);
    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        // Slaney area normalization.
        const double enorm = 2.0 / (hi - lo);
        for (int b = 0; b < bins; ++b) {
            const double f = b * sample_rate_hz / n_fft;
            double w = 0.0;
            if (f > lo && f < mid) {
                w = (f - lo) / (mid - lo);
            } else if (f >= mid && f < hi) {
                w = (hi - f) / (hi - mid);
            }
            fb(m, b) = w * enorm;
        }
    }
    return fb;
}

Eigen::VectorXd onset_envelope(const AudioClip& window, const StftParams& p) {
    check_window(window);
    const StftParams q = window_params(window, p);
    const Eigen::MatrixXd logmel = log_mel_power(window, q);
    Eigen::VectorXd env = Eigen::VectorXd::Zero(logmel.rows());
    for (Eigen::Index t = 1; t < logmel.rows(); ++t) {
        env(t) = (logmel.row(t) - logmel.row(t - 1)).array().max(0.0).sum();
    }
    return env;
}

Eigen::MatrixXd mfcc(const AudioClip& window, const StftParams& p) {
    check_window(window);
    const StftParams q = window_params(window, p);
    const Eigen::MatrixXd logmel = log_mel_power(window, q);
    const Eigen::MatrixXd dct = dsp::dct2_matrix(kMfccDim, q.n_mels);
    return logmel * dct.transpose();
}

Eigen::MatrixXd chroma_cens(const AudioClip& window, const StftParams& p) {
    check_window(window);
    const StftParams q = window_params(window, p);
    const Eigen::MatrixXd mag = stft_magnitude(window.samples, q);
    const int bins = q.n_fft / 2 + 1;

    // Energy per pitch class, nearest-semitone binning above ~C2.
    Eigen::MatrixXd chroma = Eigen::MatrixXd::Zero(mag.rows(), kChromaDim);
    for (int b = 1; b < bins; ++b) {
        const double f = b * static_cast<double>(window.sample_rate_hz) / q.n_fft;
        if (f < 65.0 || f > window.sample_rate_hz / 2.0 - 1.0) continue;
        const double midi = 69.0 + 12.0 * std::log2(f / 440.0);
        const int cls = ((static_cast<int>(std::lround(midi)) % 12) + 12) % 12;
        for (Eigen::Index t = 0; t < mag.rows(); ++t) {
            chroma(t, cls) += mag(t, b) * mag(t, b);
        }
    }

    // CENS: L1 normalize, quantize, boxcar smooth, L2 normalize.
    static const double thresholds[] = {0.05, 0.1, 0.2, 0.4};
    Eigen::MatrixXd quant = Eigen::MatrixXd::Zero(chroma.rows(), kChromaDim);
    for (Eigen::Index t = 0; t < chroma.rows(); ++t) {
        const double l1 = chroma.row(t).sum();
        if (l1 <= 0) continue;
        for (int c = 0; c < kChromaDim; ++c) {
            const double v = chroma(t, c) / l1;
            for (double thr : thresholds) {
                if (v > thr) quant(t, c) += 1.0;
            }
        }
    }
    const int half = p.cens_smooth_frames / 2;
    Eigen::MatrixXd smooth(quant.rows(), kChromaDim);
    for (Eigen::Index t = 0; t < quant.rows(); ++t) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, t - half);
        const Eigen::Index hi = std::min<Eigen::Index>(quant.rows() - 1, t + half);
        smooth.row(t) = quant.middleRows(lo, hi - lo + 1).colwise().mean();
    }
    for (Eigen::Index t = 0; t < smooth.rows(); ++t) {
        const double l2 = smooth.row(t).norm();
        if (l2 > 0) smooth.row(t) /= l2;
    }
    return smooth;
}

Eigen::VectorXd rms(const AudioClip& window, const StftParams& p) {
    check_window(window);
    const StftParams q = window_params(window, p);
    const int frames = num_frames(window.samples.size(), q);
    const auto n = static_cast<long>(window.samples.size());
    Eigen::VectorXd out(frames);
    for (int f = 0; f < frames; ++f) {
        const long center = static_cast<long>(f) * q.hop_samples;
        // Truncate the span at the clip edges rather than zero-pad.
        const long lo = std::max(0L, center - q.n_fft / 2);
        const long hi = std::min(n, center + q.n_fft / 2);
        double acc = 0.0;
        for (long i = lo; i < hi; ++i) acc += window.samples[i] * window.samples[i];
        out(f) = (hi > lo) ? std::sqrt(acc / static_cast<double>(hi - lo)) : 0.0;
    }
    return out;
}

Eigen::VectorXd peak_onehot(const Eigen::VectorXd& envelope, const StftParams& p) {
    const Eigen::Index n = envelope.size();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    if (n == 0) return out;
    const double delta = p.peak_delta_frac * envelope.maxCoeff();
    Eigen::Index last_peak = -1000;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, i - p.peak_local_radius);
        const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + p.peak_local_radius);
        if (envelope(i) < envelope.segment(lo, hi - lo + 1).maxCoeff()) continue;
        const Eigen::Index mlo = std::max<Eigen::Index>(0, i - p.peak_mean_radius);
        const Eigen::Index mhi = std::min<Eigen::Index>(n - 1, i + p.peak_mean_radius);
        const double mean = envelope.segment(mlo, mhi - mlo + 1).mean();
        if (envelope(i) <= mean + delta) continue;
        if (i - last_peak < p.peak_min_gap) continue;
        out(i) = 1.0;
        last_peak = i;
    }
    return out;
}

AudioFeature extract_audio_features(const AudioClip& window, const StftParams& p) {
    const Eigen::VectorXd env = onset_envelope(window, p);
    AudioFeature feat(kAudioSteps, kAudioDim);
    feat.col(0) = env;
    feat.block(0, 1, kAudioSteps, kMfccDim) = mfcc(window, p);
    feat.block(0, 1 + kMfccDim, kAudioSteps, kChromaDim) = chroma_cens(window, p);
    feat.col(1 + kMfccDim + kChromaDim) = peak_onehot(env, p);
    feat.col(1 + kMfccDim + kChromaDim + 1) = rms(window, p);
    return feat;
}

std::vector<double> rms_envelope_at(const AudioClip& clip, double rate_hz, double frame_s) {
    const auto n = static_cast<long>(clip.samples.size());
    const long half = std::lround(frame_s * clip.sample_rate_hz / 2.0);
    const std::size_t frames =
        static_cast<std::size_t>(std::floor(clip.duration_s() * rate_hz));
    std::vector<double> out(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        const long center = std::lround(static_cast<double>(f) / rate_hz * clip.sample_rate_hz);
        const long lo = std::max(0L, center - half);
        const long hi = std::min(n, center + half);
        double acc = 0.0;
        for (long i = lo; i < hi; ++i) acc += clip.samples[i] * clip.samples[i];
        out[f] = (hi > lo) ? std::sqrt(acc / static_cast<double>(hi - lo)) : 0.0;
    }
    return out;
}

// ---- WAV I/O (PCM 16-bit RIFF) ----

namespace {

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

AudioClip load_wav(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    std::vector<unsigned char> data((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    if (data.size() < 44 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
        std::memcmp(data.data() + 8, "WAVE", 4) != 0) {
        throw UnsupportedFormat("not a RIFF/WAVE file: " + path.string());
    }
    int channels = 0, bits = 0;
    int sample_rate = 0;
    std::size_t data_off = 0, data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= data.size()) {
        const std::uint32_t chunk_len = read_u32(data.data() + pos + 4);
        if (std::memcmp(data.data() + pos, "fmt ", 4) == 0 && chunk_len >= 16) {
            const unsigned char* f = data.data() + pos + 8;
            const int format = read_u16(f);
            channels = read_u16(f + 2);
            sample_rate = static_cast<int>(read_u32(f + 4));
            bits = read_u16(f + 14);
            if (format != 1) throw UnsupportedFormat("only PCM WAV supported");
        } else if (std::memcmp(data.data() + pos, "data", 4) == 0) {
            data_off = pos + 8;
            data_len = chunk_len;
        }
        pos += 8 + chunk_len + (chunk_len & 1);
    }
    if (channels < 1 || channels > 2 || bits != 16 || data_off == 0) {
        throw UnsupportedFormat("expected 16-bit mono/stereo PCM: " + path.string());
    }
    data_len = std::min(data_len, data.size() - data_off);
    const std::size_t n = data_len / (2 * static_cast<std::size_t>(channels));
    AudioClip clip;
    clip.sample_rate_hz = sample_rate;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const std::size_t off = data_off + 2 * (i * channels + c);
            const auto raw = static_cast<std::int16_t>(read_u16(data.data() + off));
            acc += raw / 32768.0;
        }
        clip.samples[i] = acc / channels;
    }
    return clip;
}

void save_wav(const AudioClip& clip, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
    auto u32 = [&](std::uint32_t v) {
        char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                     static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
        os.write(b, 4);
    };
    auto u16 = [&](std::uint16_t v) {
        char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
        os.write(b, 2);
    };
    os.write("RIFF", 4);
    u32(36 + data_len);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    u32(16);
    u16(1);  // PCM
    u16(1);  // mono
    u32(static_cast<std::uint32_t>(clip.sample_rate_hz));
    u32(static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
    u16(2);
    u16(16);
    os.write("data", 4);
    u32(data_len);
    for (double s : clip.samples) {
        const double clamped = std::clamp(s, -1.0, 1.0);
        u16(static_cast<std::uint16_t>(
            static_cast<std::int16_t>(std::lround(clamped * 32767.0))));
    }
    if (!os) throw IoError("write failed: " + path.string());
}

AudioClip resample_linear(const AudioClip& clip, int target_rate_hz) {
    if (target_rate_hz == clip.sample_rate_hz) return clip;
    AudioClip out;
    out.sample_rate_hz = target_rate_hz;
    const double ratio = static_cast<double>(clip.sample_rate_hz) / target_rate_hz;
    const std::size_t n = static_cast<std::size_t>(
        std::floor(static_cast<double>(clip.samples.size()) / ratio));
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double src = i * ratio;
        const auto lo = static_cast<std::size_t>(src);
        const double frac = src - static_cast<double>(lo);
        const double a = clip.samples[lo];
        const double b = (lo + 1 < clip.samples.size()) ? clip.samples[lo + 1] : a;
        out.samples[i] = a + frac * (b - a);
    }
    return out;
}

}  // namespace mapnet
