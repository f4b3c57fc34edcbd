#pragma once

#include "mapnet/model.hpp"

namespace mapnet {

namespace nn {

// Single LSTM layer unrolled over time, with BPTT. Gate order [i, f, g, o].
class LstmLayer {
public:
    LstmLayer() = default;
    LstmLayer(const std::string& name, int input, int hidden, Rng& rng);

    Mat forward(const Mat& x);       // T x input -> T x hidden
    Mat backward(const Mat& dh);     // T x hidden -> T x input
    void params(std::vector<Param*>& out);

    Param w, u, b;

private:
    int hidden_ = 0;
    Mat x_, h_, c_, gates_;  // caches from the last forward
};

}  // namespace nn

// Stacked-LSTM comparison model. The PA variant appends the audio feature
// block, linearly resampled along time to T_in rows, to each step's input.
class LstmBaseline : public SequenceModel {
public:
    LstmBaseline(const ModelConfig& cfg, bool use_audio, int hidden = 256, int layers = 2,
                 std::uint64_t seed = 0);

    nn::Mat forward(const nn::Mat& pose_feat, const nn::Mat& audio_feat,
                    bool train = false) override;
    void backward(const nn::Mat& dout) override;
    std::vector<nn::Param*> parameters() override;
    const ModelConfig& config() const override { return cfg_; }
    std::string kind() const override { return cfg_.use_audio ? "lstm_pa" : "lstm_po"; }

    int hidden_size() const { return hidden_; }
    int layer_count() const { return static_cast<int>(layers_.size()); }

private:
    ModelConfig cfg_;
    int hidden_ = 256;
    std::vector<nn::LstmLayer> layers_;
    nn::Dense fc1_, fc2_, fc3_;
    nn::Mat relu1_in_, relu2_in_;
    static constexpr double kPoseScale = 1e-3;
    static constexpr double kAudioScale = 1e-2;
};

// Linear interpolation of matrix rows onto a new row count.
nn::Mat resample_rows(const nn::Mat& x, Eigen::Index rows_out);

}  // namespace mapnet
