#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "mapnet/audio.hpp"

using namespace mapnet;

namespace {

AudioClip sine_window(double freq_hz, double amp, int sr = 44100, double dur_s = 3.0) {
    AudioClip clip;
    clip.sample_rate_hz = sr;
    clip.samples.resize(static_cast<std::size_t>(std::lround(dur_s * sr)));
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq_hz * i / sr);
    }
    return clip;
}

AudioClip silence_window(int sr = 44100) {
    AudioClip clip;
    clip.sample_rate_hz = sr;
    clip.samples.assign(static_cast<std::size_t>(3 * sr), 0.0);
    return clip;
}

}  // namespace

TEST_CASE("fft matches a direct DFT") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const int n = 64;
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {dist(rng), dist(rng)};
    auto y = x;
    dsp::fft(y);
    for (int k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (int t = 0; t < n; ++t) {
            const double ang = -2.0 * std::numbers::pi * k * t / n;
            acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        CHECK(std::abs(y[k] - acc) < 1e-9);
    }
}

TEST_CASE("silence produces zero envelope and rms, and a 150x35 block") {
    AudioClip clip = silence_window();
    const Eigen::VectorXd env = onset_envelope(clip);
    const Eigen::VectorXd r = rms(clip);
    REQUIRE(env.size() == 150);
    REQUIRE(r.size() == 150);
    CHECK(env.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.cwiseAbs().maxCoeff() == 0.0);
    const AudioFeature feat = extract_audio_features(clip);
    CHECK(feat.rows() == 150);
    CHECK(feat.cols() == 35);
}

TEST_CASE("onset envelope localizes a click") {
    AudioClip clip = silence_window();
    const std::size_t pos = static_cast<std::size_t>(1.5 * 44100);
    for (std::size_t i = pos; i < pos + 50; ++i) clip.samples[i] = 0.9;
    const Eigen::VectorXd env = onset_envelope(clip);
    Eigen::Index argmax = 0;
    env.maxCoeff(&argmax);
    CHECK(argmax >= 73);
    CHECK(argmax <= 77);
    CHECK(env.minCoeff() >= 0.0);
    CHECK(env(0) == 0.0);
}

TEST_CASE("mfcc shape and stationarity on silence") {
    const Eigen::MatrixXd m = mfcc(silence_window());
    REQUIRE(m.rows() == 150);
    REQUIRE(m.cols() == 20);
    for (Eigen::Index t = 1; t < m.rows(); ++t) {
        CHECK((m.row(t) - m.row(0)).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("mfcc separates a tone from white noise") {
    const Eigen::MatrixXd tone = mfcc(sine_window(440.0, 0.8));
    AudioClip noise;
    noise.sample_rate_hz = 44100;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> dist(-0.8, 0.8);
    noise.samples.resize(3 * 44100);
    for (auto& s : noise.samples) s = dist(rng);
    const Eigen::MatrixXd white = mfcc(noise);

    const double mean_tone = tone.col(1).mean();
    const double mean_white = white.col(1).mean();
    const double sd_tone = std::sqrt((tone.col(1).array() - mean_tone).square().mean());
    const double sd_white = std::sqrt((white.col(1).array() - mean_white).square().mean());
    const double pooled = std::sqrt(0.5 * (sd_tone * sd_tone + sd_white * sd_white));
    CHECK(std::abs(mean_tone - mean_white) > 5.0 * pooled);
}

TEST_CASE("chroma of a 440 Hz sine peaks at pitch class A") {
    const Eigen::MatrixXd c = chroma_cens(sine_window(440.0, 0.7));
    REQUIRE(c.rows() == 150);
    REQUIRE(c.cols() == 12);
    // Pitch class 9 = A with class 0 = C.
    int hits = 0, interior = 0;
    for (Eigen::Index t = 5; t < 145; ++t) {
        ++interior;
        Eigen::Index argmax = 0;
        c.row(t).maxCoeff(&argmax);
        if (argmax == 9) ++hits;
    }
    CHECK(hits >= interior * 95 / 100);
}

TEST_CASE("chroma rows are l2-normalized or zero") {
    const Eigen::MatrixXd c = chroma_cens(sine_window(261.63, 0.5));
    for (Eigen::Index t = 0; t < c.rows(); ++t) {
        const double n = c.row(t).norm();
        CHECK((n == 0.0 || std::abs(n - 1.0) < 1e-6));
    }
    const Eigen::MatrixXd z = chroma_cens(silence_window());
    CHECK(z.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rms of a sinusoid and of a constant") {
    const Eigen::VectorXd r = rms(sine_window(440.0, 0.8));
    const double expected = 0.8 / std::sqrt(2.0);
    for (Eigen::Index t = 10; t < 140; ++t) {
        CHECK(r(t) == doctest::Approx(expected).epsilon(0.01));
    }
    AudioClip flat = silence_window();
    for (auto& s : flat.samples) s = 0.3;
    const Eigen::VectorXd rc = rms(flat);
    for (Eigen::Index t = 0; t < rc.size(); ++t) {
        CHECK(rc(t) == doctest::Approx(0.3).epsilon(1e-9));
    }
}

TEST_CASE("rms is scale-monotone") {
    AudioClip a = sine_window(300.0, 0.3);
    AudioClip b = sine_window(300.0, 0.6);
    const Eigen::VectorXd ra = rms(a);
    const Eigen::VectorXd rb = rms(b);
    for (Eigen::Index t = 0; t < ra.size(); ++t) CHECK(rb(t) >= ra(t));
}

TEST_CASE("peak_onehot basics") {
    Eigen::VectorXd flat = Eigen::VectorXd::Constant(150, 2.0);
    CHECK(peak_onehot(flat).cwiseAbs().maxCoeff() == 0.0);

    Eigen::VectorXd bump = Eigen::VectorXd::Zero(150);
    for (int i = 0; i < 9; ++i) bump(70 + i) = 1.0 - 0.2 * std::abs(i - 4);
    Eigen::VectorXd peaks = peak_onehot(bump);
    CHECK(peaks.sum() == 1.0);
    CHECK(peaks(74) == 1.0);
    for (Eigen::Index i = 0; i < peaks.size(); ++i) {
        CHECK((peaks(i) == 0.0 || peaks(i) == 1.0));
    }
}

TEST_CASE("feature block layout matches the standalone features") {
    AudioClip clip = sine_window(440.0, 0.6);
    const AudioFeature feat = extract_audio_features(clip);
    const Eigen::VectorXd env = onset_envelope(clip);
    CHECK(feat.col(0) == env);
    CHECK(feat.block(0, 1, 150, 20) == mfcc(clip));
    CHECK(feat.block(0, 21, 150, 12) == chroma_cens(clip));
    CHECK(feat.col(33) == peak_onehot(env));
    CHECK(feat.col(34) == rms(clip));
    CHECK(extract_audio_features(clip) == feat);
}

TEST_CASE("time-shift covariance of rms and envelope") {
    AudioClip a = silence_window();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (std::size_t i = 20000; i < 60000; ++i) a.samples[i] = dist(rng);
    // Shift by exactly 2 hops (1764 samples).
    AudioClip b = silence_window();
    for (std::size_t i = 20000; i < 60000; ++i) b.samples[i + 1764] = a.samples[i];
    const Eigen::VectorXd ra = rms(a), rb = rms(b);
    const Eigen::VectorXd ea = onset_envelope(a), eb = onset_envelope(b);
    for (Eigen::Index t = 5; t < 140; ++t) {
        CHECK(rb(t + 2) == doctest::Approx(ra(t)).epsilon(1e-9));
        CHECK(eb(t + 2) == doctest::Approx(ea(t)).epsilon(1e-9));
    }
}

TEST_CASE("wav round trip, stereo downmix, and full-scale value") {
    const auto dir = std::filesystem::temp_directory_path() / "mapnet_audio_test";
    std::filesystem::create_directories(dir);
    AudioClip clip = sine_window(440.0, 0.5, 44100, 1.0);
    save_wav(clip, dir / "tone.wav");
    AudioClip back = load_wav(dir / "tone.wav");
    REQUIRE(back.samples.size() == clip.samples.size());
    CHECK(back.sample_rate_hz == 44100);
    for (std::size_t i = 0; i < back.samples.size(); ++i) {
        CHECK(std::abs(back.samples[i] - clip.samples[i]) < 1.0 / 32000.0);
    }
    CHECK(back.samples.size() == 44100);

    // 32767 maps to 32767/32768.
    AudioClip full;
    full.sample_rate_hz = 44100;
    full.samples = {1.0, -1.0, 0.0};
    save_wav(full, dir / "full.wav");
    AudioClip fb = load_wav(dir / "full.wav");
    CHECK(fb.samples[0] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-12));
    std::filesystem::remove_all(dir);
}

TEST_CASE("stereo wav is downmixed by averaging") {
    const auto dir = std::filesystem::temp_directory_path() / "mapnet_audio_test2";
    std::filesystem::create_directories(dir);
    // Hand-built 2-channel PCM file, one frame: L = +16384, R = -16384.
    std::ofstream os(dir / "stereo.wav", std::ios::binary);
    auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
    os.write("RIFF", 4);
    u32(36 + 4);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(2);
    u32(44100);
    u32(44100 * 4);
    u16(4);
    u16(16);
    os.write("data", 4);
    u32(4);
    u16(16384);
    u16(static_cast<std::uint16_t>(-16384));
    os.close();
    AudioClip clip = load_wav(dir / "stereo.wav");
    REQUIRE(clip.samples.size() == 1);
    CHECK(clip.samples[0] == doctest::Approx(0.0).epsilon(1e-12));
    std::filesystem::remove_all(dir);
}

TEST_CASE("resample_linear changes rate and length proportionally") {
    AudioClip clip = sine_window(100.0, 0.5, 48000, 1.0);
    AudioClip out = resample_linear(clip, 44100);
    CHECK(out.sample_rate_hz == 44100);
    CHECK(std::abs(static_cast<double>(out.samples.size()) - 44100.0) < 2.0);
}
