#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "mapnet/model.hpp"
#include "mapnet/pipeline.hpp"

namespace mapnet {

struct BadConfig : std::runtime_error {
    explicit BadConfig(const std::string& what) : std::runtime_error(what) {}
};

struct DataConfig {
    WindowSpec window;
    std::vector<double> taus = {1.0, 0.5, 0.33};
    int synth_trials = 4;
    double synth_duration_s = 60.0;
    SynthMotionParams synth;
};

struct EvalConfig {
    std::vector<std::string> methods = {"mapnet", "pot", "sma"};
    double theta = 0.05;
    int sma_window = 5;
    int lstm_hidden = 256;
    int lstm_layers = 2;
};

// Everything a run needs, sectioned like the config file. Defaults are the
// values used throughout the experiments.
struct ExperimentConfig {
    DataConfig data;
    NoiseParams noise;
    StftParams audio;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;

    // "section.key=value", as accepted by the --set flag.
    void set(const std::string& assignment);

    std::string serialize() const;
    static ExperimentConfig parse(std::istream& in);
    static ExperimentConfig load(const std::filesystem::path& path);

    void validate() const;
};

}  // namespace mapnet
