#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "mapnet/nn.hpp"
#include "mapnet/pipeline.hpp"
#include "mapnet/pose.hpp"

namespace mapnet {

enum class FusionStrategy { Early, Balanced, Late };  // 2/12, 7/7, 12/2

struct ModelConfig {
    int h1 = 160;
    int h2 = 150;
    int pose_audio_layers = 7;
    int fusion_layers = 7;
    int heads = 8;
    int ff_dim = 640;
    double tau = 1.0;
    int t_out = 150;
    int decode_hidden = 1024;
    double dropout = 0.1;
    bool use_audio = true;      // false -> pose-only transformer (PoT)
    bool use_rebalance = true;

    int t_in() const { return static_cast<int>(std::lround(t_out * tau)); }
    void apply_strategy(FusionStrategy s);
    void validate() const;
};

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};
struct NonFiniteLoss : std::runtime_error {
    explicit NonFiniteLoss(const std::string& what) : std::runtime_error(what) {}
};

// Mean over frames and joints of the per-joint Euclidean distance, mm.
double mpjpe_loss(const nn::Mat& pred, const nn::Mat& gt);
// Gradient of mpjpe_loss with respect to pred.
nn::Mat mpjpe_loss_grad(const nn::Mat& pred, const nn::Mat& gt);

// Training-harness interface shared by MAPnet and the LSTM baselines.
// pose_feat is T_in x 39 (mm), audio_feat is 150 x 35; output T_out x 39 (mm).
class SequenceModel {
public:
    virtual ~SequenceModel() = default;
    virtual nn::Mat forward(const nn::Mat& pose_feat, const nn::Mat& audio_feat,
                            bool train = false) = 0;
    virtual void backward(const nn::Mat& dout) = 0;
    virtual std::vector<nn::Param*> parameters() = 0;
    virtual const ModelConfig& config() const = 0;
    virtual std::string kind() const = 0;

    void zero_grad();
    std::size_t parameter_count();
    // Round all weights to float32 so a saved checkpoint reproduces the
    // in-memory forward pass bit-exactly.
    void quantize_weights();
};

class MapNet : public SequenceModel {
public:
    MapNet(const ModelConfig& cfg, std::uint64_t seed);

    nn::Mat forward(const nn::Mat& pose_feat, const nn::Mat& audio_feat,
                    bool train = false) override;
    void backward(const nn::Mat& dout) override;
    std::vector<nn::Param*> parameters() override;
    const ModelConfig& config() const override { return cfg_; }
    std::string kind() const override { return cfg_.use_audio ? "mapnet" : "pot"; }

private:
    ModelConfig cfg_;
    nn::Rng rng_;
    nn::Dense embed_pose_, embed_audio_;
    nn::TransformerEncoder pose_enc_, audio_enc_, fusion_enc_;
    nn::TimeRebalance rebalance_pose_, rebalance_audio_;
    nn::Dense fc1_, fc2_, fc3_;

    // forward caches
    Eigen::Index combined_rows_ = 0;
    nn::Mat relu1_in_, relu2_in_;
    static constexpr double kPoseScale = 1e-3;   // mm -> m internally
    static constexpr double kAudioScale = 1e-2;  // tames log-power magnitudes
};

struct TrainConfig {
    int batch_size = 128;
    nn::Adam::Config adam{};
    int epochs = 100;
    std::uint64_t seed = 0;
    int patience = 0;          // 0 disables early stopping
    int max_train_samples = 0; // 0 = use all
    double target_train_mpjpe = 0.0;  // stop once train loss drops below (0 = off)
    bool verbose = false;
};

struct TrainSample {
    nn::Mat pose_feat;   // T_in x 39
    nn::Mat audio_feat;  // 150 x 35
    nn::Mat target;      // T_out x 39
};

struct EpochStats {
    int epoch = 0;
    double train_mpjpe = 0.0;
    double valid_mpjpe = 0.0;
    double wall_s = 0.0;
};

struct Checkpoint {
    ModelConfig config;
    std::string kind;  // "mapnet", "pot", "lstm_po", "lstm_pa"
    int lstm_hidden = 0;
    int lstm_layers = 0;
    std::vector<std::pair<std::string, nn::Mat>> arrays;
    std::vector<EpochStats> history;
    std::uint64_t seed = 0;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

Checkpoint make_checkpoint(SequenceModel& model, const std::vector<EpochStats>& history,
                           std::uint64_t seed);
void restore_weights(SequenceModel& model, const Checkpoint& ckpt);
// Builds the right model type for a checkpoint and loads its weights.
std::unique_ptr<SequenceModel> model_from_checkpoint(const Checkpoint& ckpt,
                                                     std::uint64_t seed = 1);

std::vector<EpochStats> train(SequenceModel& model, const std::vector<TrainSample>& train_set,
                              const std::vector<TrainSample>& valid_set,
                              const TrainConfig& cfg);

// Sliding-window inference over full streams with uniform averaging of
// overlapping window predictions. sparse fps = 50 * tau; audio at 44.1 kHz.
PoseSequence infer_stitched(SequenceModel& model, const PoseSequence& sparse,
                            const AudioClip& audio, const WindowSpec& spec = {});

struct TooShort : std::runtime_error {
    TooShort() : std::runtime_error("stream shorter than one window") {}
};

TrainSample sample_to_train(const Sample& s);

}  // namespace mapnet
