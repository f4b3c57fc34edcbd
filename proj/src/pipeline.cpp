#include "mapnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include <json.hpp>

namespace mapnet {

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "valid") return Split::Valid;
    if (name == "test") return Split::Test;
    throw std::invalid_argument("unknown split: " + name);
}

namespace {

constexpr double kSyncRate = 50.0;

std::vector<double> wrist_speed_at(const PoseSequence& pose, double rate_hz) {
    // Speed magnitude of the right wrist at the pose rate, then linear
    // resample to rate_hz.
    if (pose.size() < 2) return {};
    // Central differences keep the estimate aligned with the frame times.
    std::vector<double> speed(pose.size());
    for (std::size_t t = 0; t < pose.size(); ++t) {
        const std::size_t lo = t > 0 ? t - 1 : 0;
        const std::size_t hi = std::min(t + 1, pose.size() - 1);
        speed[t] = (pose.frames[hi][JointId::RMWR] - pose.frames[lo][JointId::RMWR])
                       .norm() *
                   pose.fps / static_cast<double>(hi - lo);
    }
    const std::size_t n_out = static_cast<std::size_t>(
        std::floor(static_cast<double>(speed.size()) / pose.fps * rate_hz));
    std::vector<double> out(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double src = static_cast<double>(i) / rate_hz * pose.fps;
        const auto lo = static_cast<std::size_t>(src);
        const double frac = src - static_cast<double>(lo);
        const double a = speed[std::min(lo, speed.size() - 1)];
        const double b = speed[std::min(lo + 1, speed.size() - 1)];
        out[i] = a + frac * (b - a);
    }
    return out;
}

std::vector<double> zscore(const std::vector<double>& x) {
    if (x.empty()) return x;
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / x.size());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = sd > 0 ? (x[i] - mean) / sd : 0.0;
    }
    return out;
}

}  // namespace

SyncResult synchronize(const AudioClip& audio, const PoseSequence& pose,
                       const SyncParams& params) {
    if (audio.samples.empty() || pose.empty()) {
        throw std::invalid_argument("synchronize: empty input");
    }
    const std::vector<double> env = rms_envelope_at(audio, kSyncRate);

    // Sustained-activity onset/offset.
    const auto sustain = static_cast<std::size_t>(std::lround(params.sustain_s * kSyncRate));
    std::size_t run = 0;
    std::optional<std::size_t> onset, offset;
    for (std::size_t i = 0; i < env.size(); ++i) {
        if (env[i] > params.rms_threshold) {
            ++run;
            if (run >= sustain) {
                if (!onset) onset = i + 1 - run;
                offset = i;
            }
        } else {
            run = 0;
        }
    }
    if (!onset) throw NoActivityDetected();

    // Lag via brute-force cross-correlation of z-scored signals.
    const std::vector<double> speed = wrist_speed_at(pose, kSyncRate);
    const std::vector<double> ze = zscore(env);
    const std::vector<double> zs = zscore(speed);
    const int max_lag = static_cast<int>(std::lround(params.max_lag_s * kSyncRate));
    double best = -std::numeric_limits<double>::infinity();
    int best_lag = 0;
    for (int lag = -max_lag; lag <= max_lag; ++lag) {
        // Unnormalized overlap sum: for periodic signals the longer overlap
        // breaks the tie between period-multiple lags.
        double acc = 0.0;
        for (std::size_t t = 0; t < ze.size(); ++t) {
            const long j = static_cast<long>(t) + lag;
            if (j < 0 || j >= static_cast<long>(zs.size())) continue;
            acc += ze[t] * zs[static_cast<std::size_t>(j)];
        }
        if (acc > best) {
            best = acc;
            best_lag = lag;
        }
    }

    SyncResult sync;
    sync.audio_offset_s = best_lag / kSyncRate;
    sync.play_onset_s = static_cast<double>(*onset) / kSyncRate;
    sync.play_offset_s = static_cast<double>(*offset + 1) / kSyncRate;
    return sync;
}

std::pair<PoseSequence, AudioClip> trim(const PoseSequence& pose, const AudioClip& audio,
                                        const SyncResult& sync) {
    // Audio interval in audio time; pose interval shifted by the lag.
    const double a_lo = std::max(0.0, sync.play_onset_s);
    const double a_hi = std::min(audio.duration_s(), sync.play_offset_s);
    const double p_lo = std::max(0.0, sync.play_onset_s + sync.audio_offset_s);
    const double p_hi =
        std::min(pose.duration_s(), sync.play_offset_s + sync.audio_offset_s);
    const double len = std::min(a_hi - a_lo, p_hi - p_lo);
    if (len <= 0) throw EmptyAfterTrim();

    PoseSequence pose_out;
    pose_out.fps = pose.fps;
    pose_out.start_time = 0.0;
    const auto pf0 = static_cast<std::size_t>(std::lround(p_lo * pose.fps));
    const auto pf1 = std::min(pose.size(),
                              pf0 + static_cast<std::size_t>(std::lround(len * pose.fps)));
    pose_out.frames.assign(pose.frames.begin() + static_cast<long>(pf0),
                           pose.frames.begin() + static_cast<long>(pf1));

    AudioClip audio_out;
    audio_out.sample_rate_hz = audio.sample_rate_hz;
    const auto as0 = static_cast<std::size_t>(std::lround(a_lo * audio.sample_rate_hz));
    const auto as1 = std::min(
        audio.samples.size(),
        as0 + static_cast<std::size_t>(std::lround(len * audio.sample_rate_hz)));
    audio_out.samples.assign(audio.samples.begin() + static_cast<long>(as0),
                             audio.samples.begin() + static_cast<long>(as1));
    if (pose_out.empty() || audio_out.samples.empty()) throw EmptyAfterTrim();
    return {std::move(pose_out), std::move(audio_out)};
}

std::vector<WindowPair> slice_windows(const PoseSequence& pose, const AudioClip& audio,
                                      const WindowSpec& spec) {
    const double duration = std::min(pose.duration_s(), audio.duration_s());
    std::vector<WindowPair> out;
    for (int i = 0;; ++i) {
        const double start = i * spec.hop_s;
        if (start + spec.window_s > duration + 1e-9) break;
        WindowPair w;
        w.start_s = start;
        const auto pf0 = static_cast<std::size_t>(std::lround(start * pose.fps));
        const auto pn = static_cast<std::size_t>(std::lround(spec.window_s * pose.fps));
        w.pose.fps = pose.fps;
        w.pose.start_time = start;
        w.pose.frames.assign(pose.frames.begin() + static_cast<long>(pf0),
                             pose.frames.begin() + static_cast<long>(pf0 + pn));
        const auto as0 =
            static_cast<std::size_t>(std::lround(start * audio.sample_rate_hz));
        const auto an =
            static_cast<std::size_t>(std::lround(spec.window_s * audio.sample_rate_hz));
        w.audio.sample_rate_hz = audio.sample_rate_hz;
        w.audio.samples.assign(audio.samples.begin() + static_cast<long>(as0),
                               audio.samples.begin() + static_cast<long>(as0 + an));
        out.push_back(std::move(w));
    }
    return out;
}

int stride_for_tau(double tau) {
    if (std::abs(tau - 1.0) < 1e-6) return 1;
    if (std::abs(tau - 0.5) < 1e-6) return 2;
    if (std::abs(tau - 0.33) < 1e-6) return 3;
    throw UnsupportedTau(tau);
}

PoseSequence downsample(const PoseSequence& window, double tau) {
    const int stride = stride_for_tau(tau);
    if (stride == 1) return window;
    PoseSequence out;
    out.fps = window.fps / stride;
    out.start_time = window.start_time;
    for (std::size_t t = 0; t < window.size(); t += static_cast<std::size_t>(stride)) {
        out.frames.push_back(window.frames[t]);
    }
    return out;
}

std::vector<std::pair<std::string, Split>> split_dataset(
    const std::vector<std::string>& group_keys, std::uint64_t seed,
    bool allow_degenerate) {
    const std::size_t n = group_keys.size();
    if (n < 10 && !allow_degenerate) throw TooFewGroups(n);
    std::vector<std::string> keys = group_keys;
    std::mt19937_64 rng(seed);
    std::shuffle(keys.begin(), keys.end(), rng);
    const auto n_valid = static_cast<std::size_t>(std::lround(n / 10.0));
    const auto n_test = static_cast<std::size_t>(std::lround(n / 10.0));
    std::vector<std::pair<std::string, Split>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Split s = Split::Train;
        if (i < n_test) {
            s = Split::Test;
        } else if (i < n_test + n_valid) {
            s = Split::Valid;
        }
        out.emplace_back(keys[i], s);
    }
    return out;
}

SynthTrial synth_generate(double duration_s, const SynthMotionParams& params,
                          std::uint64_t seed) {
    if (duration_s < 3.0) throw std::invalid_argument("duration_s must be >= 3");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> freq_dist(params.bow_freq_min_hz,
                                                     params.bow_freq_max_hz);
    std::uniform_real_distribution<double> amp_dist(params.bow_amp_min_mm,
                                                    params.bow_amp_max_mm);
    std::uniform_real_distribution<double> seg_dist(params.segment_min_s,
                                                    params.segment_max_s);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

    struct Segment {
        double t0, t1;      // time span
        double omega;       // rad/s
        double amp;         // mm
        double theta0;      // phase at t0
        double pos0;        // wrist bow displacement at t0, mm
    };
    std::vector<Segment> segments;
    {
        double t = 0.0, theta = phase_dist(rng), pos = 0.0;
        while (t < duration_s) {
            Segment s;
            s.t0 = t;
            s.t1 = std::min(duration_s, t + seg_dist(rng));
            s.omega = 2.0 * std::numbers::pi * freq_dist(rng);
            s.amp = amp_dist(rng);
            s.theta0 = theta;
            s.pos0 = pos;
            const double dt = s.t1 - s.t0;
            theta += s.omega * dt;
            pos = s.pos0 + s.amp * (std::sin(theta) - std::sin(s.theta0));
            segments.push_back(s);
            t = s.t1;
        }
    }
    auto segment_at = [&](double t) -> const Segment& {
        for (const auto& s : segments) {
            if (t < s.t1) return s;
        }
        return segments.back();
    };
    auto bow_pos = [&](double t) {
        const Segment& s = segment_at(t);
        return s.pos0 + s.amp * (std::sin(s.theta0 + s.omega * (t - s.t0)) -
                                 std::sin(s.theta0));
    };
    auto bow_speed = [&](double t) {
        const Segment& s = segment_at(t);
        return std::abs(s.amp * s.omega * std::cos(s.theta0 + s.omega * (t - s.t0)));
    };

    SynthTrial trial;
    // Direction reversals: cos(theta) zero crossings, per segment.
    for (const auto& s : segments) {
        const double theta_end = s.theta0 + s.omega * (s.t1 - s.t0);
        if (s.omega <= 0) continue;
        double k = std::ceil((s.theta0 - std::numbers::pi / 2.0) / std::numbers::pi);
        for (;; k += 1.0) {
            const double theta_rev = std::numbers::pi / 2.0 + k * std::numbers::pi;
            if (theta_rev < s.theta0) continue;
            if (theta_rev >= theta_end) break;
            trial.reversal_times_s.push_back(s.t0 + (theta_rev - s.theta0) / s.omega);
        }
    }

    // Base skeleton of a standing figure, mm. Left toe at the origin.
    std::array<Vec3, kNumJoints> base{};
    base[static_cast<int>(JointId::LTOE)] = {0, 0, 0};
    base[static_cast<int>(JointId::RTOE)] = {320, 0, 0};
    base[static_cast<int>(JointId::LKNE)] = {20, 30, 480};
    base[static_cast<int>(JointId::RKNE)] = {300, 30, 480};
    base[static_cast<int>(JointId::LBWT)] = {60, -40, 980};
    base[static_cast<int>(JointId::RBWT)] = {260, -40, 980};
    base[static_cast<int>(JointId::C7)] = {160, -20, 1480};
    base[static_cast<int>(JointId::LSHO)] = {-30, 0, 1430};
    base[static_cast<int>(JointId::RSHO)] = {350, 0, 1430};
    base[static_cast<int>(JointId::LMEL)] = {-120, 180, 1280};
    base[static_cast<int>(JointId::RMEL)] = {470, 160, 1260};
    base[static_cast<int>(JointId::LMWR)] = {-40, 380, 1380};
    base[static_cast<int>(JointId::RMWR)] = {420, 380, 1320};
    const Vec3 bow_axis = Vec3(0.64, 0.6, -0.48).normalized();
    const double sway_phase = phase_dist(rng);

    const double fps = 50.0;
    const auto n_frames = static_cast<std::size_t>(std::lround(duration_s * fps));
    trial.pose.fps = fps;
    trial.pose.frames.resize(n_frames);
    for (std::size_t f = 0; f < n_frames; ++f) {
        const double t = static_cast<double>(f) / fps;
        Skeleton13& sk = trial.pose.frames[f];
        const double sway =
            params.sway_amp_mm * std::sin(2.0 * std::numbers::pi * 0.3 * t + sway_phase);
        for (int j = 0; j < kNumJoints; ++j) {
            sk.joints[j] = base[j];
            if (j != static_cast<int>(JointId::LTOE) &&
                j != static_cast<int>(JointId::RTOE)) {
                sk.joints[j].y() += sway;
            }
        }
        const double disp = bow_pos(t);
        sk[JointId::RMWR] += bow_axis * disp;
        sk[JointId::RMEL] += bow_axis * (0.5 * disp);
    }

    // Audio: sawtooth whose amplitude tracks wrist speed, with a short burst
    // at each reversal so onsets are sharp. Everything scales with segment
    // speed, so zero-amplitude motion is silent.
    const double max_speed =
        params.bow_amp_max_mm * 2.0 * std::numbers::pi * params.bow_freq_max_hz;
    const int sr = 44100;
    trial.audio.sample_rate_hz = sr;
    trial.audio.samples.assign(static_cast<std::size_t>(std::lround(duration_s * sr)), 0.0);
    std::vector<double> burst_env(trial.audio.samples.size(), 0.0);
    if (max_speed > 0) {
        for (double r : trial.reversal_times_s) {
            const Segment& s = segment_at(r);
            const double scale = std::sqrt((s.amp * s.omega) / max_speed);
            const auto i0 = static_cast<std::size_t>(std::lround(r * sr));
            const auto i1 = std::min(burst_env.size(),
                                     i0 + static_cast<std::size_t>(sr * 25 / 1000));
            for (std::size_t i = i0; i < i1; ++i) {
                const double dt = static_cast<double>(i - i0) / sr;
                burst_env[i] =
                    std::max(burst_env[i], 0.8 * scale * std::exp(-dt / 0.005));
            }
        }
        for (std::size_t i = 0; i < trial.audio.samples.size(); ++i) {
            const double t = static_cast<double>(i) / sr;
            const double amp =
                std::min(0.95, 0.65 * bow_speed(t) / max_speed + burst_env[i]);
            const double saw_phase = params.tone_hz * t;
            const double saw = 2.0 * (saw_phase - std::floor(saw_phase)) - 1.0;
            trial.audio.samples[i] = amp * saw;
        }
    }
    return trial;
}

// ---- Dataset archive ----

std::string DatasetArchive::sample_stem(const SampleMeta& m) {
    char tau_buf[16];
    std::snprintf(tau_buf, sizeof(tau_buf), "%.2f", m.tau);
    return "t" + std::to_string(m.trial_id) + "_v" + std::to_string(m.variant_id) +
           "_w" + std::to_string(m.window_id) + "_tau" + tau_buf;
}

namespace {

nlohmann::json meta_to_json(const SampleMeta& m) {
    return {{"trial", m.trial_id},       {"variant", m.variant_id},
            {"window", m.window_id},     {"start_s", m.window_start_s},
            {"tau", m.tau},              {"split", split_name(m.split)},
            {"has_swap", m.has_swap}};
}

SampleMeta meta_from_json(const nlohmann::json& j) {
    SampleMeta m;
    m.trial_id = j.at("trial").get<int>();
    m.variant_id = j.at("variant").get<int>();
    m.window_id = j.at("window").get<int>();
    m.window_start_s = j.at("start_s").get<double>();
    m.tau = j.at("tau").get<double>();
    m.split = split_from_name(j.at("split").get<std::string>());
    m.has_swap = j.at("has_swap").get<bool>();
    return m;
}

std::string shared_target_stem(const SampleMeta& m) {
    return "t" + std::to_string(m.trial_id) + "_v" + std::to_string(m.variant_id) +
           "_w" + std::to_string(m.window_id);
}

std::string shared_audio_stem(const SampleMeta& m) {
    return "t" + std::to_string(m.trial_id) + "_w" + std::to_string(m.window_id);
}

}  // namespace

void DatasetArchive::write_manifest(const ArchiveManifest& manifest) const {
    nlohmann::json j;
    j["taus"] = manifest.taus;
    j["window"] = {{"window_s", manifest.window.window_s}, {"hop_s", manifest.window.hop_s}};
    j["noise"] = {{"jitter_std_mm", manifest.noise.jitter_std_mm},
                  {"swap_rate_per_min", manifest.noise.swap_rate_per_min},
                  {"swap_dur_min_s", manifest.noise.swap_dur_min_s},
                  {"swap_dur_max_s", manifest.noise.swap_dur_max_s},
                  {"n_variants", manifest.noise.n_variants},
                  {"base_seed", manifest.noise.base_seed},
                  {"pair_policy", manifest.noise.pair_policy == SwapPairPolicy::Uniform
                                      ? "uniform"
                                      : "mostly_symmetric"}};
    j["split_seed"] = manifest.split_seed;
    j["sample_count"] = manifest.samples.size();
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& m : manifest.samples) samples.push_back(meta_to_json(m));
    j["samples"] = std::move(samples);
    std::ofstream os(root_ / "manifest.json");
    if (!os) throw IoError("cannot write manifest in " + root_.string());
    os << j.dump(1) << "\n";
}

ArchiveManifest DatasetArchive::read_manifest() const {
    std::ifstream is(root_ / "manifest.json");
    if (!is) throw IoError("cannot open manifest in " + root_.string());
    nlohmann::json j = nlohmann::json::parse(is);
    ArchiveManifest m;
    m.taus = j.at("taus").get<std::vector<double>>();
    m.window.window_s = j.at("window").at("window_s").get<double>();
    m.window.hop_s = j.at("window").at("hop_s").get<double>();
    const auto& n = j.at("noise");
    m.noise.jitter_std_mm = n.at("jitter_std_mm").get<double>();
    m.noise.swap_rate_per_min = n.at("swap_rate_per_min").get<double>();
    m.noise.swap_dur_min_s = n.at("swap_dur_min_s").get<double>();
    m.noise.swap_dur_max_s = n.at("swap_dur_max_s").get<double>();
    m.noise.n_variants = n.at("n_variants").get<int>();
    m.noise.base_seed = n.at("base_seed").get<std::uint64_t>();
    m.noise.pair_policy = n.at("pair_policy").get<std::string>() == "uniform"
                              ? SwapPairPolicy::Uniform
                              : SwapPairPolicy::MostlySymmetric;
    m.split_seed = j.at("split_seed").get<std::uint64_t>();
    for (const auto& s : j.at("samples")) m.samples.push_back(meta_from_json(s));
    return m;
}

void DatasetArchive::write_sample(const Sample& sample) const {
    const std::string stem = sample_stem(sample.meta);
    write_pose_csv(sample.sparse_pose, root_ / ("pose_sparse_" + stem + ".csv"));
    // Target pose and audio features are shared across taus (and audio across
    // variants too); written once under their shared stems.
    const auto target_path =
        root_ / ("pose_target_" + shared_target_stem(sample.meta) + ".csv");
    if (!std::filesystem::exists(target_path)) {
        write_pose_csv(sample.target_pose, target_path);
    }
    const auto audio_path =
        root_ / ("audio_feat_" + shared_audio_stem(sample.meta) + ".csv");
    if (!std::filesystem::exists(audio_path)) {
        write_matrix_csv(sample.audio, audio_path);
    }
}

Sample DatasetArchive::read_sample(const SampleMeta& meta) const {
    Sample s;
    s.meta = meta;
    s.sparse_pose = read_pose_csv(root_ / ("pose_sparse_" + sample_stem(meta) + ".csv"));
    s.target_pose =
        read_pose_csv(root_ / ("pose_target_" + shared_target_stem(meta) + ".csv"));
    s.audio = read_matrix_csv(root_ / ("audio_feat_" + shared_audio_stem(meta) + ".csv"));
    return s;
}

}  // namespace mapnet
