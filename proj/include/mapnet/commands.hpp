#pragma once

#include "mapnet/config.hpp"
#include "mapnet/eval.hpp"
#include "mapnet/pose_io.hpp"

namespace mapnet {

// A learned method plus the checkpoint file backing it; name "sma" needs no
// checkpoint.
struct MethodRef {
    std::string name;
    std::filesystem::path checkpoint;
};

// Generate coupled synthetic trials, apply noise variants, window, split and
// archive them under out_dir. Returns the process exit code.
int cmd_synth(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Same archive flow for recorded trials: paired pose CSV + WAV by basename.
int cmd_prepare(const std::filesystem::path& pose_dir, const std::filesystem::path& wav_dir,
                const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Train one method on the archive at cfg.model.tau; writes the checkpoint to
// out_path and an epoch log CSV next to it.
int cmd_train(const std::filesystem::path& archive_dir, const ExperimentConfig& cfg,
              const std::string& method, const std::filesystem::path& out_path);

// Evaluate methods on the archive's test split; writes report.csv/report.txt.
int cmd_eval(const std::filesystem::path& archive_dir, const std::vector<MethodRef>& methods,
             const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Trajectory CSVs for one joint plus an error-series SVG for each method.
int cmd_plot(const std::filesystem::path& archive_dir, const std::vector<MethodRef>& methods,
             const std::string& joint_name, const ExperimentConfig& cfg,
             const std::filesystem::path& out_dir);

}  // namespace mapnet
