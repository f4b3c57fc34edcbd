#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>

#include "mapnet/lstm.hpp"
#include "mapnet/model.hpp"

using namespace mapnet;
using nn::Mat;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
    nn::Rng rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
    }
    return m;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.h1 = 8;
    cfg.h2 = 6;
    cfg.pose_audio_layers = 1;
    cfg.fusion_layers = 1;
    cfg.heads = 2;
    cfg.ff_dim = 16;
    cfg.tau = 1.0;
    cfg.t_out = 5;
    cfg.decode_hidden = 16;
    cfg.dropout = 0.0;
    return cfg;
}

// Realistic scales: pose in mm around a standing skeleton, audio features
// as produced by the extraction pipeline (log-power magnitudes).
Mat fake_pose(Eigen::Index t, std::uint64_t seed) {
    Mat p = random_mat(t, kPoseDim, seed, 120.0);
    p.array() += 800.0;
    return p;
}

Mat fake_audio(std::uint64_t seed) { return random_mat(150, kAudioDim, seed, 3.0); }

// Max relative gradient error over entries of every parameter tensor,
// analytic vs central finite differences.
double max_grad_rel_error(SequenceModel& model, const Mat& pose, const Mat& audio,
                          const Mat& gt, int max_entries = 12) {
    model.zero_grad();
    model.backward(mpjpe_loss_grad(model.forward(pose, audio), gt));
    auto loss = [&] { return mpjpe_loss(model.forward(pose, audio), gt); };
    const double eps = 1e-5;
    double worst = 0.0;
    for (auto* p : model.parameters()) {
        double num = 0.0, den = 0.0;
        const Eigen::Index n = p->value.size();
        const Eigen::Index step = std::max<Eigen::Index>(1, n / max_entries);
        for (Eigen::Index i = 0; i < n; i += step) {
            const double saved = p->value.data()[i];
            p->value.data()[i] = saved + eps;
            const double up = loss();
            p->value.data()[i] = saved - eps;
            const double down = loss();
            p->value.data()[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double an = p->grad.data()[i];
            num += (fd - an) * (fd - an);
            den += std::max(fd * fd, an * an);
        }
        worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-3));
    }
    return worst;
}

}  // namespace

TEST_CASE("mpjpe on a 3-4-5 displacement") {
    Mat gt = Mat::Zero(1, kPoseDim);
    Mat pred = gt;
    pred(0, 0) += 3.0;  // first joint x
    pred(0, 1) += 4.0;  // first joint y
    CHECK(mpjpe_loss(pred, gt) == doctest::Approx(5.0 / 13.0).epsilon(1e-12));
}

TEST_CASE("mpjpe matches a triple-loop oracle and is translation aware") {
    const Mat gt = fake_pose(7, 100);
    const Mat pred = gt + random_mat(7, kPoseDim, 101, 25.0);
    double acc = 0.0;
    for (Eigen::Index t = 0; t < 7; ++t) {
        for (int j = 0; j < kNumJoints; ++j) {
            double d2 = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double d = pred(t, 3 * j + k) - gt(t, 3 * j + k);
                d2 += d * d;
            }
            acc += std::sqrt(d2);
        }
    }
    CHECK(mpjpe_loss(pred, gt) == doctest::Approx(acc / (7.0 * kNumJoints)).epsilon(1e-12));
    CHECK(mpjpe_loss(gt, gt) == 0.0);

    // A uniform 10mm x-shift on every joint costs exactly 10mm.
    Mat shifted = gt;
    for (int j = 0; j < kNumJoints; ++j) shifted.col(3 * j).array() += 10.0;
    CHECK(mpjpe_loss(shifted, gt) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("mpjpe gradient matches finite differences") {
    const Mat gt = fake_pose(4, 102);
    Mat pred = gt + random_mat(4, kPoseDim, 103, 30.0);
    const Mat g = mpjpe_loss_grad(pred, gt);
    const double eps = 1e-6;
    for (Eigen::Index i = 0; i < pred.size(); i += 5) {
        const double saved = pred.data()[i];
        pred.data()[i] = saved + eps;
        const double up = mpjpe_loss(pred, gt);
        pred.data()[i] = saved - eps;
        const double down = mpjpe_loss(pred, gt);
        pred.data()[i] = saved;
        CHECK(std::abs((up - down) / (2.0 * eps) - g.data()[i]) < 1e-7);
    }
    // Zero subgradient where prediction equals ground truth.
    CHECK(mpjpe_loss_grad(gt, gt).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward shape contract across temporal compression") {
    for (double tau : {1.0, 0.5, 0.33}) {
        ModelConfig cfg = tiny_config();
        cfg.t_out = 150;
        cfg.tau = tau;
        MapNet model(cfg, 7);
        const Mat pose = fake_pose(cfg.t_in(), 200);
        const Mat out = model.forward(pose, fake_audio(201));
        CHECK(out.rows() == 150);
        CHECK(out.cols() == kPoseDim);
        CHECK(out.allFinite());
    }
    // t_in derivation: round(150 * tau)
    ModelConfig cfg = tiny_config();
    cfg.t_out = 150;
    cfg.tau = 0.33;
    CHECK(cfg.t_in() == 50);
    cfg.tau = 0.5;
    CHECK(cfg.t_in() == 75);
}

TEST_CASE("wrong input shapes are rejected") {
    MapNet model(tiny_config(), 8);
    CHECK_THROWS_AS(model.forward(fake_pose(4, 300), fake_audio(301)), ShapeMismatch);
    CHECK_THROWS_AS(model.forward(fake_pose(5, 302), random_mat(149, kAudioDim, 303)),
                    ShapeMismatch);
}

TEST_CASE("tiny mapnet end-to-end gradients") {
    MapNet model(tiny_config(), 11);
    const double worst = max_grad_rel_error(model, fake_pose(5, 400), fake_audio(401),
                                            fake_pose(5, 402));
    CHECK(worst < 1e-3);
}

TEST_CASE("pose-only transformer end-to-end gradients") {
    ModelConfig cfg = tiny_config();
    cfg.use_audio = false;
    MapNet model(cfg, 12);
    const double worst = max_grad_rel_error(model, fake_pose(5, 403), fake_audio(404),
                                            fake_pose(5, 405));
    CHECK(worst < 1e-3);
}

TEST_CASE("mapnet without time rebalancing still checks out") {
    ModelConfig cfg = tiny_config();
    cfg.use_rebalance = false;
    MapNet model(cfg, 13);
    const double worst = max_grad_rel_error(model, fake_pose(5, 406), fake_audio(407),
                                            fake_pose(5, 408));
    CHECK(worst < 1e-3);
}

TEST_CASE("lstm baseline end-to-end gradients") {
    ModelConfig cfg = tiny_config();
    for (bool use_audio : {false, true}) {
        cfg.use_audio = use_audio;
        LstmBaseline model(cfg, use_audio, /*hidden=*/8, /*layers=*/2, 14);
        const double worst = max_grad_rel_error(model, fake_pose(5, 409), fake_audio(410),
                                                fake_pose(5, 411));
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("pose-only variant has fewer parameters than the audio-aware one") {
    ModelConfig cfg = tiny_config();
    MapNet full(cfg, 15);
    cfg.use_audio = false;
    MapNet pot(cfg, 15);
    CHECK(pot.parameter_count() < full.parameter_count());
    CHECK(pot.kind() == "pot");
    CHECK(full.kind() == "mapnet");
}

TEST_CASE("fusion strategy presets") {
    ModelConfig cfg;
    cfg.apply_strategy(FusionStrategy::Early);
    CHECK(cfg.pose_audio_layers == 2);
    CHECK(cfg.fusion_layers == 12);
    cfg.apply_strategy(FusionStrategy::Balanced);
    CHECK(cfg.pose_audio_layers == 7);
    CHECK(cfg.fusion_layers == 7);
    cfg.apply_strategy(FusionStrategy::Late);
    CHECK(cfg.pose_audio_layers == 12);
    CHECK(cfg.fusion_layers == 2);
}

TEST_CASE("config validation") {
    ModelConfig cfg = tiny_config();
    cfg.heads = 3;  // does not divide h1 = 8
    CHECK_THROWS(cfg.validate());
    cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("same seed gives identical models and forwards") {
    MapNet a(tiny_config(), 21);
    MapNet b(tiny_config(), 21);
    const Mat pose = fake_pose(5, 500);
    const Mat audio = fake_audio(501);
    CHECK(a.forward(pose, audio) == b.forward(pose, audio));
    MapNet c(tiny_config(), 22);
    CHECK(a.forward(pose, audio) != c.forward(pose, audio));
}

TEST_CASE("checkpoint round trip reproduces the forward pass bit-exactly") {
    const auto path = std::filesystem::temp_directory_path() / "mapnet_ckpt_test.bin";
    ModelConfig cfg = tiny_config();
    cfg.tau = 0.5;
    cfg.t_out = 6;

    MapNet model(cfg, 30);
    model.quantize_weights();
    const Mat pose = fake_pose(cfg.t_in(), 600);
    const Mat audio = fake_audio(601);
    const Mat before = model.forward(pose, audio);

    std::vector<EpochStats> hist(2);
    hist[1].epoch = 1;
    hist[1].train_mpjpe = 42.5;
    make_checkpoint(model, hist, 30).save(path);

    const Checkpoint loaded = Checkpoint::load(path);
    CHECK(loaded.kind == "mapnet");
    CHECK(loaded.seed == 30);
    CHECK(loaded.config.tau == 0.5);
    CHECK(loaded.history.size() == 2);
    CHECK(loaded.history[1].train_mpjpe == doctest::Approx(42.5));

    auto restored = model_from_checkpoint(loaded);
    CHECK(restored->forward(pose, audio) == before);
    std::filesystem::remove(path);
}

TEST_CASE("lstm checkpoint round trip") {
    const auto path = std::filesystem::temp_directory_path() / "mapnet_lstm_ckpt.bin";
    ModelConfig cfg = tiny_config();
    cfg.use_audio = true;
    LstmBaseline model(cfg, true, 8, 2, 31);
    model.quantize_weights();
    const Mat pose = fake_pose(5, 700);
    const Mat audio = fake_audio(701);
    const Mat before = model.forward(pose, audio);

    make_checkpoint(model, {}, 31).save(path);
    const Checkpoint loaded = Checkpoint::load(path);
    CHECK(loaded.kind == "lstm_pa");
    CHECK(loaded.lstm_hidden == 8);
    CHECK(loaded.lstm_layers == 2);
    auto restored = model_from_checkpoint(loaded);
    CHECK(restored->forward(pose, audio) == before);
    std::filesystem::remove(path);
}

TEST_CASE("training with zero learning rate leaves the loss flat") {
    MapNet model(tiny_config(), 40);
    std::vector<TrainSample> set;
    for (int i = 0; i < 3; ++i) {
        set.push_back({fake_pose(5, 800 + i), fake_audio(810 + i), fake_pose(5, 820 + i)});
    }
    TrainConfig tc;
    tc.batch_size = 3;
    tc.epochs = 4;
    tc.adam.lr = 0.0;
    const auto hist = train(model, set, set, tc);
    REQUIRE(hist.size() == 4);
    for (const auto& e : hist) {
        CHECK(e.train_mpjpe == doctest::Approx(hist[0].train_mpjpe).epsilon(1e-12));
    }
}

TEST_CASE("training is deterministic for a fixed seed and reduces the loss") {
    std::vector<TrainSample> set;
    for (int i = 0; i < 4; ++i) {
        set.push_back({fake_pose(5, 900 + i), fake_audio(910 + i), fake_pose(5, 920 + i)});
    }
    TrainConfig tc;
    tc.batch_size = 2;
    tc.epochs = 30;
    tc.adam.lr = 1e-3;
    tc.seed = 5;

    MapNet a(tiny_config(), 41);
    const auto ha = train(a, set, set, tc);
    MapNet b(tiny_config(), 41);
    const auto hb = train(b, set, set, tc);
    REQUIRE(ha.size() == hb.size());
    for (std::size_t i = 0; i < ha.size(); ++i) {
        CHECK(ha[i].train_mpjpe == hb[i].train_mpjpe);
        CHECK(ha[i].valid_mpjpe == hb[i].valid_mpjpe);
    }
    CHECK(ha.back().train_mpjpe < 0.75 * ha.front().train_mpjpe);
}

TEST_CASE("max_train_samples caps the set") {
    MapNet model(tiny_config(), 42);
    std::vector<TrainSample> set;
    for (int i = 0; i < 6; ++i) {
        set.push_back({fake_pose(5, 930 + i), fake_audio(940 + i), fake_pose(5, 950 + i)});
    }
    TrainConfig tc;
    tc.batch_size = 2;
    tc.epochs = 1;
    tc.max_train_samples = 2;
    CHECK_NOTHROW(train(model, set, set, tc));
}

namespace {

// A model that ignores its input, for exercising the stitching logic.
class ConstantModel : public SequenceModel {
public:
    explicit ConstantModel(const ModelConfig& cfg, double value) : cfg_(cfg) {
        out_ = Mat::Constant(cfg.t_out, kPoseDim, value);
    }
    Mat forward(const Mat&, const Mat&, bool) override { return out_; }
    void backward(const Mat&) override {}
    std::vector<nn::Param*> parameters() override { return {}; }
    const ModelConfig& config() const override { return cfg_; }
    std::string kind() const override { return "mapnet"; }

private:
    ModelConfig cfg_;
    Mat out_;
};

}  // namespace

TEST_CASE("stitched inference averages overlapping windows") {
    ModelConfig cfg;  // defaults: tau = 1, t_out = 150
    cfg.tau = 0.5;
    ConstantModel model(cfg, 123.0);

    PoseSequence sparse;
    sparse.fps = 50.0 * cfg.tau;
    sparse.frames.assign(static_cast<std::size_t>(5.0 * sparse.fps), Skeleton13{});
    AudioClip audio;
    audio.sample_rate_hz = 44100;
    audio.samples.assign(5 * 44100, 0.0);

    const PoseSequence out = infer_stitched(model, sparse, audio);
    CHECK(out.fps == 50.0);
    // Windows at 0, 1 and 2 s cover [0, 5) s at 50 fps.
    CHECK(out.frames.size() == 250);
    const PoseFeature flat = flatten_pose(out);
    CHECK((flat.array() == 123.0).all());

    AudioClip short_audio;
    short_audio.samples.assign(2 * 44100, 0.0);
    PoseSequence short_pose;
    short_pose.fps = 25.0;
    short_pose.frames.assign(50, Skeleton13{});
    CHECK_THROWS_AS(infer_stitched(model, short_pose, short_audio), TooShort);
}

TEST_CASE("sample_to_train flattens a pipeline sample") {
    Sample s;
    Skeleton13 threes, sevens;
    for (auto& j : threes.joints) j.setConstant(3.0);
    for (auto& j : sevens.joints) j.setConstant(7.0);
    s.sparse_pose.fps = 25.0;
    s.sparse_pose.frames.assign(75, threes);
    s.target_pose.fps = 50.0;
    s.target_pose.frames.assign(150, sevens);
    s.audio = Mat::Constant(kAudioSteps, kAudioDim, 0.5);
    const TrainSample t = sample_to_train(s);
    CHECK(t.pose_feat.rows() == 75);
    CHECK(t.pose_feat.cols() == kPoseDim);
    CHECK(t.pose_feat(10, 10) == 3.0);
    CHECK(t.target.rows() == 150);
    CHECK(t.target(0, 0) == 7.0);
    CHECK(t.audio_feat == s.audio);
}
