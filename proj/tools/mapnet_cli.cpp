// mapnet command-line driver: synth / prepare / train / eval / plot.
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "mapnet/commands.hpp"

namespace {

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("MAPNET_DATA_DIR")) return env;
    return "data";
}

std::vector<mapnet::MethodRef> parse_methods(const std::vector<std::string>& specs) {
    // "name" (sma) or "name=checkpoint_path"
    std::vector<mapnet::MethodRef> out;
    for (const auto& s : specs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            out.push_back({s, {}});
        } else {
            out.push_back({s.substr(0, eq), s.substr(eq + 1)});
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MAPnet: cross-modal refinement of sparse noisy pose sequences"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_given = false;
    double tau = 0.0;
    bool tau_given = false;
    int jobs = 1;
    bool deterministic = false;
    std::string out_dir = default_data_dir().string();

    app.add_option("--config", config_path, "config file (TOML-style sections)");
    app.add_option("--set", overrides, "override: section.key=value")->take_all();
    app.add_option("--seed", seed, "base seed for data and training")
        ->each([&](const std::string&) { seed_given = true; });
    app.add_option("--tau", tau, "input/output frame-rate ratio {1.0|0.5|0.33}")
        ->each([&](const std::string&) { tau_given = true; });
    app.add_option("--jobs", jobs, "worker bound (compute here is single-threaded)");
    app.add_flag("--deterministic", deterministic, "force single-threaded reductions");
    app.add_option("--out", out_dir, "output directory (default $MAPNET_DATA_DIR or ./data)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic coupled dataset");

    std::string pose_dir, wav_dir;
    auto* prepare = app.add_subcommand("prepare", "build an archive from pose CSV + WAV pairs");
    prepare->add_option("--pose-dir", pose_dir, "directory of pose CSVs")->required();
    prepare->add_option("--wav-dir", wav_dir, "directory of WAV files")->required();

    std::string method = "mapnet";
    std::string archive_dir;
    std::string ckpt_out = "checkpoint.bin";
    auto* train_cmd = app.add_subcommand("train", "train one method on an archive");
    train_cmd->add_option("--archive", archive_dir, "dataset archive directory")->required();
    train_cmd->add_option("--method", method, "mapnet|pot|lstm_po|lstm_pa");
    train_cmd->add_option("--ckpt-out", ckpt_out, "checkpoint output path");

    std::vector<std::string> method_specs;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate methods on the test split");
    eval_cmd->add_option("--archive", archive_dir, "dataset archive directory")->required();
    eval_cmd->add_option("--method", method_specs, "name=checkpoint, or plain 'sma'")
        ->required()
        ->take_all();

    std::string joint = "RMWR";
    auto* plot_cmd = app.add_subcommand("plot", "trajectory CSVs and error-series SVG");
    plot_cmd->add_option("--archive", archive_dir, "dataset archive directory")->required();
    plot_cmd->add_option("--method", method_specs, "name=checkpoint, or plain 'sma'")
        ->required()
        ->take_all();
    plot_cmd->add_option("--joint", joint, "joint name, e.g. RMWR");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        mapnet::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = mapnet::ExperimentConfig::load(config_path);
        for (const auto& o : overrides) cfg.set(o);
        if (seed_given) {
            cfg.noise.base_seed = seed;
            cfg.train.seed = seed;
        }
        if (tau_given) cfg.model.tau = tau;
        (void)jobs;  // all heavy loops are deterministic and single-threaded
        (void)deterministic;

        if (*synth) return mapnet::cmd_synth(cfg, out_dir);
        if (*prepare) return mapnet::cmd_prepare(pose_dir, wav_dir, cfg, out_dir);
        if (*train_cmd) return mapnet::cmd_train(archive_dir, cfg, method, ckpt_out);
        if (*eval_cmd) {
            return mapnet::cmd_eval(archive_dir, parse_methods(method_specs), cfg, out_dir);
        }
        if (*plot_cmd) {
            return mapnet::cmd_plot(archive_dir, parse_methods(method_specs), joint, cfg,
                                    out_dir);
        }
        return 1;
    } catch (const mapnet::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
