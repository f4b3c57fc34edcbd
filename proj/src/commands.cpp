#include "mapnet/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include "mapnet/lstm.hpp"

namespace mapnet {

namespace {

namespace fs = std::filesystem;

// Windows a full trial, applies the noise variants and writes every
// (variant, window, tau) sample. Metas are appended; splits are assigned later.
void archive_trial(int trial_id, const PoseSequence& clean, const AudioClip& audio,
                   const ExperimentConfig& cfg, const DatasetArchive& archive,
                   std::vector<SampleMeta>& metas) {
    NoiseParams noise = cfg.noise;
    noise.base_seed = cfg.noise.base_seed + 100003ULL * static_cast<std::uint64_t>(trial_id);
    const auto variants = generate_variants(clean, noise);

    const auto windows = slice_windows(clean, audio, cfg.data.window);
    const Eigen::Index frames_per_window = static_cast<Eigen::Index>(
        std::lround(cfg.data.window.window_s * clean.fps));

    for (int w = 0; w < static_cast<int>(windows.size()); ++w) {
        const auto& win = windows[static_cast<std::size_t>(w)];
        const AudioFeature feat = extract_audio_features(win.audio, cfg.audio);
        const std::size_t first =
            static_cast<std::size_t>(std::lround(win.start_s * clean.fps));

        for (int v = 0; v < static_cast<int>(variants.size()); ++v) {
            const auto& variant = variants[static_cast<std::size_t>(v)];
            PoseSequence noisy_window;
            noisy_window.fps = clean.fps;
            noisy_window.start_time = win.start_s;
            noisy_window.frames.assign(
                variant.pose.frames.begin() + static_cast<long>(first),
                variant.pose.frames.begin() + static_cast<long>(first) + frames_per_window);

            bool has_swap = false;
            for (const auto& e : variant.events) {
                if (e.start_s < win.start_s + cfg.data.window.window_s &&
                    e.start_s + e.duration_s > win.start_s) {
                    has_swap = true;
                    break;
                }
            }

            for (double tau : cfg.data.taus) {
                Sample s;
                s.meta.trial_id = trial_id;
                s.meta.variant_id = v;
                s.meta.window_id = w;
                s.meta.window_start_s = win.start_s;
                s.meta.tau = tau;
                s.meta.has_swap = has_swap;
                s.sparse_pose = downsample(noisy_window, tau);
                s.audio = feat;
                s.target_pose = win.pose;
                archive.write_sample(s);
                metas.push_back(s.meta);
            }
        }
    }
}

void assign_splits(std::vector<SampleMeta>& metas, std::uint64_t seed) {
    std::set<std::string> group_set;
    auto group_of = [](const SampleMeta& m) {
        return "t" + std::to_string(m.trial_id) + "_v" + std::to_string(m.variant_id);
    };
    for (const auto& m : metas) group_set.insert(group_of(m));
    const std::vector<std::string> keys(group_set.begin(), group_set.end());
    std::map<std::string, Split> split_of;
    for (const auto& [key, split] : split_dataset(keys, seed)) split_of[key] = split;
    for (auto& m : metas) m.split = split_of.at(group_of(m));
}

void finish_archive(const DatasetArchive& archive, const ExperimentConfig& cfg,
                    std::vector<SampleMeta> metas) {
    assign_splits(metas, cfg.noise.base_seed);
    ArchiveManifest manifest;
    manifest.taus = cfg.data.taus;
    manifest.window = cfg.data.window;
    manifest.noise = cfg.noise;
    manifest.split_seed = cfg.noise.base_seed;
    manifest.samples = std::move(metas);
    archive.write_manifest(manifest);
}

std::vector<TrainSample> load_split(const DatasetArchive& archive,
                                    const ArchiveManifest& manifest, double tau,
                                    Split split) {
    std::vector<TrainSample> out;
    for (const auto& m : manifest.samples) {
        if (m.split != split || std::abs(m.tau - tau) > 1e-9) continue;
        out.push_back(sample_to_train(archive.read_sample(m)));
    }
    return out;
}

std::vector<Sample> load_samples(const DatasetArchive& archive,
                                 const ArchiveManifest& manifest, double tau, Split split) {
    std::vector<Sample> out;
    for (const auto& m : manifest.samples) {
        if (m.split != split || std::abs(m.tau - tau) > 1e-9) continue;
        out.push_back(archive.read_sample(m));
    }
    return out;
}

std::unique_ptr<SequenceModel> build_model(const std::string& method,
                                           const ExperimentConfig& cfg) {
    ModelConfig mc = cfg.model;
    if (method == "mapnet") {
        mc.use_audio = true;
        return std::make_unique<MapNet>(mc, cfg.train.seed);
    }
    if (method == "pot") {
        mc.use_audio = false;
        return std::make_unique<MapNet>(mc, cfg.train.seed);
    }
    if (method == "lstm_po" || method == "lstm_pa") {
        mc.use_audio = method == "lstm_pa";
        return std::make_unique<LstmBaseline>(mc, mc.use_audio, cfg.eval.lstm_hidden,
                                              cfg.eval.lstm_layers, cfg.train.seed);
    }
    throw BadConfig("unknown method: " + method);
}

}  // namespace

int cmd_synth(const ExperimentConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string());

    DatasetArchive archive(out_dir);
    std::vector<SampleMeta> metas;
    for (int t = 0; t < cfg.data.synth_trials; ++t) {
        const std::uint64_t seed =
            cfg.noise.base_seed * 1000003ULL + static_cast<std::uint64_t>(t);
        SynthTrial trial = synth_generate(cfg.data.synth_duration_s, cfg.data.synth, seed);
        std::cerr << "synth: trial " << t << " (" << trial.pose.duration_s() << " s)\n";
        archive_trial(t, normalize_origin(trial.pose), trial.audio, cfg, archive, metas);
    }
    finish_archive(archive, cfg, std::move(metas));
    std::cerr << "synth: archive written to " << out_dir.string() << "\n";
    return 0;
}

int cmd_prepare(const fs::path& pose_dir, const fs::path& wav_dir,
                const ExperimentConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    if (!fs::is_directory(pose_dir)) throw IoError("not a directory: " + pose_dir.string());
    if (!fs::is_directory(wav_dir)) throw IoError("not a directory: " + wav_dir.string());

    std::vector<fs::path> pose_files;
    for (const auto& entry : fs::directory_iterator(pose_dir)) {
        if (entry.path().extension() == ".csv") pose_files.push_back(entry.path());
    }
    std::sort(pose_files.begin(), pose_files.end());
    if (pose_files.empty()) throw IoError("no pose CSVs in " + pose_dir.string());

    std::vector<std::string> unpaired;
    for (const auto& p : pose_files) {
        if (!fs::exists(wav_dir / (p.stem().string() + ".wav"))) {
            unpaired.push_back(p.stem().string());
        }
    }
    if (!unpaired.empty()) {
        for (const auto& u : unpaired) std::cerr << "prepare: missing WAV for " << u << "\n";
        return 2;
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string());

    DatasetArchive archive(out_dir);
    std::vector<SampleMeta> metas;
    int trial_id = 0;
    for (const auto& p : pose_files) {
        PoseSequence pose = read_pose_csv(p);
        AudioClip audio = load_wav(wav_dir / (p.stem().string() + ".wav"));
        try {
            const SyncResult sync = synchronize(audio, pose);
            auto [pose_t, audio_t] = trim(pose, audio, sync);
            archive_trial(trial_id, normalize_origin(pose_t), audio_t, cfg, archive, metas);
            std::cerr << "prepare: " << p.stem().string() << " -> trial " << trial_id
                      << "\n";
            ++trial_id;
        } catch (const NoActivityDetected&) {
            std::cerr << "prepare: no playing activity in " << p.stem().string()
                      << ", skipped\n";
        }
    }
    if (trial_id == 0) throw IoError("no usable trials");
    finish_archive(archive, cfg, std::move(metas));
    return 0;
}

int cmd_train(const fs::path& archive_dir, const ExperimentConfig& cfg,
              const std::string& method, const fs::path& out_path) {
    cfg.validate();
    if (method == "sma") throw BadConfig("sma needs no training");

    DatasetArchive archive(archive_dir);
    const ArchiveManifest manifest = archive.read_manifest();
    const double tau = cfg.model.tau;
    const auto train_set = load_split(archive, manifest, tau, Split::Train);
    const auto valid_set = load_split(archive, manifest, tau, Split::Valid);
    if (train_set.empty()) throw BadConfig("no training samples at this tau");
    std::cerr << "train: " << method << " tau=" << tau << " train=" << train_set.size()
              << " valid=" << valid_set.size() << "\n";

    auto model = build_model(method, cfg);
    const auto history = train(*model, train_set, valid_set, cfg.train);

    if (out_path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(out_path.parent_path(), ec);
    }
    make_checkpoint(*model, history, cfg.train.seed).save(out_path);

    std::ofstream log(out_path.string() + ".log.csv");
    if (!log) throw IoError("cannot write training log");
    log << "epoch,train_mpjpe,valid_mpjpe\n";
    for (const auto& e : history) {
        log << e.epoch << ',' << format_double(e.train_mpjpe) << ','
            << format_double(e.valid_mpjpe) << '\n';
    }
    std::cerr << "train: checkpoint written to " << out_path.string() << "\n";
    return 0;
}

namespace {

struct LoadedMethods {
    std::vector<std::unique_ptr<SequenceModel>> owned;
    bool want_sma = false;
    int sma_window = 5;
};

LoadedMethods load_methods(const std::vector<MethodRef>& methods,
                           const ExperimentConfig& cfg) {
    LoadedMethods out;
    out.sma_window = cfg.eval.sma_window;
    for (const auto& m : methods) {
        if (m.name == "sma") {
            out.want_sma = true;
            continue;
        }
        if (m.name != "mapnet" && m.name != "pot" && m.name != "lstm_po" &&
            m.name != "lstm_pa") {
            throw BadConfig("unknown method: " + m.name);
        }
        if (m.checkpoint.empty() || !fs::exists(m.checkpoint)) {
            throw MissingCheckpoint(m.name);
        }
        out.owned.push_back(model_from_checkpoint(Checkpoint::load(m.checkpoint)));
    }
    return out;
}

}  // namespace

int cmd_eval(const fs::path& archive_dir, const std::vector<MethodRef>& methods,
             const ExperimentConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    DatasetArchive archive(archive_dir);
    const ArchiveManifest manifest = archive.read_manifest();
    LoadedMethods loaded = load_methods(methods, cfg);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string());

    EvalReport merged;
    for (double tau : manifest.taus) {
        const auto testset = load_samples(archive, manifest, tau, Split::Test);
        if (testset.empty()) continue;

        std::vector<MethodEntry> entries;
        if (loaded.want_sma) entries.push_back({"sma", nullptr, loaded.sma_window});
        for (auto& model : loaded.owned) {
            if (std::abs(model->config().tau - tau) < 1e-9) {
                entries.push_back({model->kind(), model.get(), 0});
            }
        }
        if (entries.empty()) continue;
        std::cerr << "eval: tau=" << tau << " windows=" << testset.size() << " methods="
                  << entries.size() << "\n";

        EvalReport part = evaluate_suite(entries, testset, cfg.eval.theta);
        merged.rows.insert(merged.rows.end(), part.rows.begin(), part.rows.end());
        char tau_buf[16];
        std::snprintf(tau_buf, sizeof(tau_buf), "%.2f", tau);
        for (auto& [name, v] : part.per_joint_mpjpe) {
            merged.per_joint_mpjpe[name + "@tau" + tau_buf] = v;
        }
    }
    if (merged.rows.empty()) throw BadConfig("nothing to evaluate");

    std::ofstream csv(out_dir / "report.csv");
    std::ofstream txt(out_dir / "report.txt");
    if (!csv || !txt) throw IoError("cannot write reports in " + out_dir.string());
    csv << merged.to_csv();
    txt << merged.to_table();
    txt << "# per-joint MPJPE (mm):\n";
    for (const auto& [name, v] : merged.per_joint_mpjpe) {
        txt << "# " << name << ':';
        for (int j = 0; j < kNumJoints; ++j) {
            txt << ' ' << joint_names()[static_cast<std::size_t>(j)] << '='
                << format_double(v(j));
        }
        txt << '\n';
    }
    std::cerr << "eval: reports written to " << out_dir.string() << "\n";
    return 0;
}

int cmd_plot(const fs::path& archive_dir, const std::vector<MethodRef>& methods,
             const std::string& joint_name, const ExperimentConfig& cfg,
             const fs::path& out_dir) {
    cfg.validate();
    JointId joint;
    try {
        joint = joint_from_name(joint_name);
    } catch (const std::exception&) {
        throw BadConfig("unknown joint: " + joint_name);
    }

    DatasetArchive archive(archive_dir);
    const ArchiveManifest manifest = archive.read_manifest();
    LoadedMethods loaded = load_methods(methods, cfg);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string());

    std::vector<std::vector<double>> series;
    std::vector<std::string> labels;
    bool wrote_any = false;

    auto plot_one = [&](const std::string& name, SequenceModel* model, double tau) {
        const auto testset = load_samples(archive, manifest, tau, Split::Test);
        if (testset.empty()) return;
        const Sample& s = testset.front();
        const nn::Mat gt = flatten_pose(s.target_pose);
        nn::Mat pred;
        if (model != nullptr) {
            pred = model->forward(flatten_pose(s.sparse_pose), s.audio, false);
        } else {
            pred = flatten_pose(sma_upsample(s.sparse_pose, loaded.sma_window,
                                             s.target_pose.fps));
            if (pred.rows() != gt.rows()) pred = resample_rows(pred, gt.rows());
        }
        std::ofstream traj(out_dir / ("trajectory_" + name + "_" + joint_name + ".csv"));
        if (!traj) throw IoError("cannot write trajectory CSV");
        write_trajectory_csv(traj, s.target_pose,
                             unflatten_pose(pred, s.target_pose.fps, s.target_pose.start_time),
                             joint);
        series.push_back(per_frame_error_series(pred, gt));
        labels.push_back(name);
        wrote_any = true;
    };

    const double tau0 = manifest.taus.empty() ? 1.0 : manifest.taus.front();
    if (loaded.want_sma) plot_one("sma", nullptr, tau0);
    for (auto& model : loaded.owned) {
        plot_one(model->kind(), model.get(), model->config().tau);
    }
    if (!wrote_any) throw BadConfig("no test samples to plot");

    std::ofstream svg(out_dir / "error_series.svg");
    if (!svg) throw IoError("cannot write error-series SVG");
    svg << svg_line_plot(series, labels, "normalized per-frame L2 error");
    std::cerr << "plot: files written to " << out_dir.string() << "\n";
    return 0;
}

}  // namespace mapnet
