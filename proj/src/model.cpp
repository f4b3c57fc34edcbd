#include "mapnet/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "mapnet/lstm.hpp"

namespace mapnet {

using nn::Mat;

void ModelConfig::apply_strategy(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::Early:
            pose_audio_layers = 2;
            fusion_layers = 12;
            break;
        case FusionStrategy::Balanced:
            pose_audio_layers = 7;
            fusion_layers = 7;
            break;
        case FusionStrategy::Late:
            pose_audio_layers = 12;
            fusion_layers = 2;
            break;
    }
}

void ModelConfig::validate() const {
    if (h1 % heads != 0) throw std::invalid_argument("h1 must be divisible by heads");
    if (h1 < 1 || h2 < 1 || t_out < 1) throw std::invalid_argument("bad model dims");
    if (pose_audio_layers < 0 || fusion_layers < 0) {
        throw std::invalid_argument("negative layer count");
    }
    stride_for_tau(tau);  // throws UnsupportedTau
}

double mpjpe_loss(const Mat& pred, const Mat& gt) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || pred.cols() != kPoseDim) {
        throw BadShape("mpjpe_loss: shape mismatch");
    }
    double acc = 0.0;
    for (Eigen::Index t = 0; t < pred.rows(); ++t) {
        for (int j = 0; j < kNumJoints; ++j) {
            const double dx = pred(t, 3 * j) - gt(t, 3 * j);
            const double dy = pred(t, 3 * j + 1) - gt(t, 3 * j + 1);
            const double dz = pred(t, 3 * j + 2) - gt(t, 3 * j + 2);
            acc += std::sqrt(dx * dx + dy * dy + dz * dz);
        }
    }
    return acc / (static_cast<double>(pred.rows()) * kNumJoints);
}

Mat mpjpe_loss_grad(const Mat& pred, const Mat& gt) {
    if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
        throw BadShape("mpjpe_loss_grad: shape mismatch");
    }
    Mat grad = Mat::Zero(pred.rows(), pred.cols());
    const double scale = 1.0 / (static_cast<double>(pred.rows()) * kNumJoints);
    for (Eigen::Index t = 0; t < pred.rows(); ++t) {
        for (int j = 0; j < kNumJoints; ++j) {
            const double dx = pred(t, 3 * j) - gt(t, 3 * j);
            const double dy = pred(t, 3 * j + 1) - gt(t, 3 * j + 1);
            const double dz = pred(t, 3 * j + 2) - gt(t, 3 * j + 2);
            const double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
            if (norm == 0.0) continue;  // subgradient 0 at the kink
            grad(t, 3 * j) = scale * dx / norm;
            grad(t, 3 * j + 1) = scale * dy / norm;
            grad(t, 3 * j + 2) = scale * dz / norm;
        }
    }
    return grad;
}

void SequenceModel::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

std::size_t SequenceModel::parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
    return n;
}

void SequenceModel::quantize_weights() {
    for (auto* p : parameters()) {
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            p->value.data()[i] = static_cast<double>(static_cast<float>(p->value.data()[i]));
        }
    }
}

// ---- MapNet ----

MapNet::MapNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    cfg_.validate();
    const int t_in = cfg_.t_in();
    embed_pose_ = nn::Dense("embed_pose", kPoseDim, cfg_.h1, rng_);
    pose_enc_ = nn::TransformerEncoder("pose_enc", cfg_.pose_audio_layers, cfg_.h1,
                                       cfg_.heads, cfg_.ff_dim, cfg_.dropout, true, rng_);
    int fusion_rows;
    if (cfg_.use_rebalance) {
        rebalance_pose_ = nn::TimeRebalance("rebalance_pose", t_in, cfg_.h2, rng_);
        fusion_rows = cfg_.h2;
    } else {
        fusion_rows = t_in;
    }
    if (cfg_.use_audio) {
        embed_audio_ = nn::Dense("embed_audio", kAudioDim, cfg_.h1, rng_);
        audio_enc_ = nn::TransformerEncoder("audio_enc", cfg_.pose_audio_layers, cfg_.h1,
                                            cfg_.heads, cfg_.ff_dim, cfg_.dropout, true,
                                            rng_);
        if (cfg_.use_rebalance) {
            rebalance_audio_ =
                nn::TimeRebalance("rebalance_audio", kAudioSteps, cfg_.h2, rng_);
            fusion_rows += cfg_.h2;
        } else {
            fusion_rows += kAudioSteps;
        }
    }
    fusion_enc_ = nn::TransformerEncoder("fusion_enc", cfg_.fusion_layers, cfg_.h1,
                                         cfg_.heads, cfg_.ff_dim, cfg_.dropout,
                                         /*use_pe=*/false, rng_);
    combined_rows_ = fusion_rows;
    fc1_ = nn::Dense("fc1", fusion_rows * cfg_.h1, cfg_.decode_hidden, rng_);
    fc2_ = nn::Dense("fc2", cfg_.decode_hidden, cfg_.decode_hidden, rng_);
    fc3_ = nn::Dense("fc3", cfg_.decode_hidden, cfg_.t_out * kPoseDim, rng_);
}

Mat MapNet::forward(const Mat& pose_feat, const Mat& audio_feat, bool train) {
    if (pose_feat.cols() != kPoseDim) throw ShapeMismatch("pose feature must have 39 columns");
    if (pose_feat.rows() != cfg_.t_in()) {
        throw ShapeMismatch("pose feature rows " + std::to_string(pose_feat.rows()) +
                            " != configured T_in " + std::to_string(cfg_.t_in()));
    }
    Mat pose_emb = pose_enc_.forward(
        embed_pose_.forward(pose_feat * kPoseScale), train, rng_);
    if (cfg_.use_rebalance) pose_emb = rebalance_pose_.forward(pose_emb);

    Mat combined;
    if (cfg_.use_audio) {
        if (audio_feat.rows() != kAudioSteps || audio_feat.cols() != kAudioDim) {
            throw ShapeMismatch("audio feature must be 150 x 35");
        }
        Mat audio_emb = audio_enc_.forward(
            embed_audio_.forward(audio_feat * kAudioScale), train, rng_);
        if (cfg_.use_rebalance) audio_emb = rebalance_audio_.forward(audio_emb);
        combined.resize(pose_emb.rows() + audio_emb.rows(), cfg_.h1);
        combined << pose_emb, audio_emb;  // pose rows first
    } else {
        combined = std::move(pose_emb);
    }

    const Mat fused = fusion_enc_.forward(combined, train, rng_);
    const Mat flat = nn::flatten_rows(fused);
    relu1_in_ = fc1_.forward(flat);
    relu2_in_ = fc2_.forward(relu1_in_.cwiseMax(0.0));
    const Mat out = fc3_.forward(relu2_in_.cwiseMax(0.0));
    return nn::unflatten_rows(out, cfg_.t_out, kPoseDim) / kPoseScale;
}

void MapNet::backward(const Mat& dout) {
    const Mat dflat_out = nn::flatten_rows(dout) / kPoseScale;
    const Mat drelu2 = fc3_.backward(dflat_out)
                           .cwiseProduct((relu2_in_.array() > 0.0).cast<double>().matrix());
    const Mat drelu1 = fc2_.backward(drelu2)
                           .cwiseProduct((relu1_in_.array() > 0.0).cast<double>().matrix());
    const Mat dflat = fc1_.backward(drelu1);
    const Mat dfused = nn::unflatten_rows(dflat, combined_rows_, cfg_.h1);
    const Mat dcombined = fusion_enc_.backward(dfused);

    const Eigen::Index pose_rows = cfg_.use_rebalance ? cfg_.h2 : cfg_.t_in();
    Mat dpose_emb = dcombined.topRows(pose_rows);
    if (cfg_.use_audio) {
        Mat daudio_emb = dcombined.bottomRows(dcombined.rows() - pose_rows);
        if (cfg_.use_rebalance) daudio_emb = rebalance_audio_.backward(daudio_emb);
        embed_audio_.backward(audio_enc_.backward(daudio_emb));
    }
    if (cfg_.use_rebalance) dpose_emb = rebalance_pose_.backward(dpose_emb);
    embed_pose_.backward(pose_enc_.backward(dpose_emb));
}

std::vector<nn::Param*> MapNet::parameters() {
    std::vector<nn::Param*> out;
    embed_pose_.params(out);
    pose_enc_.params(out);
    if (cfg_.use_rebalance) rebalance_pose_.params(out);
    if (cfg_.use_audio) {
        embed_audio_.params(out);
        audio_enc_.params(out);
        if (cfg_.use_rebalance) rebalance_audio_.params(out);
    }
    fusion_enc_.params(out);
    fc1_.params(out);
    fc2_.params(out);
    fc3_.params(out);
    return out;
}

// ---- checkpoint ----

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"h1", c.h1},
            {"h2", c.h2},
            {"pose_audio_layers", c.pose_audio_layers},
            {"fusion_layers", c.fusion_layers},
            {"heads", c.heads},
            {"ff_dim", c.ff_dim},
            {"tau", c.tau},
            {"t_out", c.t_out},
            {"decode_hidden", c.decode_hidden},
            {"dropout", c.dropout},
            {"use_audio", c.use_audio},
            {"use_rebalance", c.use_rebalance}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.h1 = j.at("h1").get<int>();
    c.h2 = j.at("h2").get<int>();
    c.pose_audio_layers = j.at("pose_audio_layers").get<int>();
    c.fusion_layers = j.at("fusion_layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ff_dim = j.at("ff_dim").get<int>();
    c.tau = j.at("tau").get<double>();
    c.t_out = j.at("t_out").get<int>();
    c.decode_hidden = j.at("decode_hidden").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.use_audio = j.at("use_audio").get<bool>();
    c.use_rebalance = j.at("use_rebalance").get<bool>();
    return c;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["config"] = config_to_json(config);
    header["kind"] = kind;
    header["lstm_hidden"] = lstm_hidden;
    header["lstm_layers"] = lstm_layers;
    header["seed"] = seed;
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& e : history) {
        hist.push_back({{"epoch", e.epoch},
                        {"train_mpjpe", e.train_mpjpe},
                        {"valid_mpjpe", e.valid_mpjpe},
                        {"wall_s", e.wall_s}});
    }
    header["history"] = std::move(hist);
    nlohmann::json index = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, m] : arrays) {
        index.push_back({{"name", name},
                         {"rows", m.rows()},
                         {"cols", m.cols()},
                         {"offset", offset}});
        offset += static_cast<std::uint64_t>(m.size()) * 4;
    }
    header["arrays"] = std::move(index);

    const std::string header_str = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path.string());
    os.write("MAPNCKPT", 8);
    const std::uint64_t hlen = header_str.size();
    os.write(reinterpret_cast<const char*>(&hlen), 8);
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, m] : arrays) {
        // Row-major float32 payload.
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                const float v = static_cast<float>(m(r, c));
                os.write(reinterpret_cast<const char*>(&v), 4);
            }
        }
    }
    if (!os) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "MAPNCKPT", 8) != 0) {
        throw IoError("not a checkpoint file: " + path.string());
    }
    std::uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), 8);
    std::string header_str(hlen, '\0');
    is.read(header_str.data(), static_cast<std::streamsize>(hlen));
    const nlohmann::json header = nlohmann::json::parse(header_str);

    Checkpoint ckpt;
    ckpt.config = config_from_json(header.at("config"));
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.lstm_hidden = header.at("lstm_hidden").get<int>();
    ckpt.lstm_layers = header.at("lstm_layers").get<int>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    for (const auto& e : header.at("history")) {
        EpochStats s;
        s.epoch = e.at("epoch").get<int>();
        s.train_mpjpe = e.at("train_mpjpe").get<double>();
        s.valid_mpjpe = e.at("valid_mpjpe").get<double>();
        s.wall_s = e.at("wall_s").get<double>();
        ckpt.history.push_back(s);
    }
    for (const auto& a : header.at("arrays")) {
        Mat m(a.at("rows").get<Eigen::Index>(), a.at("cols").get<Eigen::Index>());
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                float v = 0.0f;
                is.read(reinterpret_cast<char*>(&v), 4);
                m(r, c) = static_cast<double>(v);
            }
        }
        ckpt.arrays.emplace_back(a.at("name").get<std::string>(), std::move(m));
    }
    if (!is) throw IoError("truncated checkpoint: " + path.string());
    return ckpt;
}

Checkpoint make_checkpoint(SequenceModel& model, const std::vector<EpochStats>& history,
                           std::uint64_t seed) {
    Checkpoint ckpt;
    ckpt.config = model.config();
    ckpt.kind = model.kind();
    ckpt.history = history;
    // Wall-clock timings would break byte-identical reruns; they stay on stderr.
    for (auto& e : ckpt.history) e.wall_s = 0.0;
    ckpt.seed = seed;
    if (auto* lstm = dynamic_cast<LstmBaseline*>(&model)) {
        ckpt.lstm_hidden = lstm->hidden_size();
        ckpt.lstm_layers = lstm->layer_count();
    }
    for (auto* p : model.parameters()) ckpt.arrays.emplace_back(p->name, p->value);
    return ckpt;
}

void restore_weights(SequenceModel& model, const Checkpoint& ckpt) {
    auto params = model.parameters();
    if (params.size() != ckpt.arrays.size()) {
        throw IoError("checkpoint parameter count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, value] = ckpt.arrays[i];
        if (params[i]->name != name || params[i]->value.rows() != value.rows() ||
            params[i]->value.cols() != value.cols()) {
            throw IoError("checkpoint array mismatch at " + name);
        }
        params[i]->value = value;
    }
}

std::unique_ptr<SequenceModel> model_from_checkpoint(const Checkpoint& ckpt,
                                                     std::uint64_t seed) {
    std::unique_ptr<SequenceModel> model;
    if (ckpt.kind == "mapnet" || ckpt.kind == "pot") {
        model = std::make_unique<MapNet>(ckpt.config, seed);
    } else if (ckpt.kind == "lstm_po" || ckpt.kind == "lstm_pa") {
        model = std::make_unique<LstmBaseline>(ckpt.config, ckpt.kind == "lstm_pa",
                                               ckpt.lstm_hidden, ckpt.lstm_layers, seed);
    } else {
        throw IoError("unknown checkpoint kind: " + ckpt.kind);
    }
    restore_weights(*model, ckpt);
    return model;
}

// ---- training ----

namespace {

double evaluate_split(SequenceModel& model, const std::vector<TrainSample>& set) {
    if (set.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& s : set) {
        acc += mpjpe_loss(model.forward(s.pose_feat, s.audio_feat, false), s.target);
    }
    return acc / static_cast<double>(set.size());
}

}  // namespace

std::vector<EpochStats> train(SequenceModel& model, const std::vector<TrainSample>& train_set,
                              const std::vector<TrainSample>& valid_set,
                              const TrainConfig& cfg) {
    if (train_set.empty()) throw std::invalid_argument("empty training set");
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    if (cfg.max_train_samples > 0 &&
        order.size() > static_cast<std::size_t>(cfg.max_train_samples)) {
        nn::Rng sub_rng(cfg.seed ^ 0xa5a5a5a5ULL);
        std::shuffle(order.begin(), order.end(), sub_rng);
        order.resize(static_cast<std::size_t>(cfg.max_train_samples));
    }

    nn::Rng rng(cfg.seed);
    nn::Adam adam(cfg.adam);
    auto params = model.parameters();
    std::vector<EpochStats> history;
    double best_valid = std::numeric_limits<double>::infinity();
    int since_best = 0;
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double train_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            model.zero_grad();
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const TrainSample& s = train_set[order[i]];
                const Mat pred = model.forward(s.pose_feat, s.audio_feat, true);
                const double loss = mpjpe_loss(pred, s.target);
                if (!std::isfinite(loss)) {
                    throw NonFiniteLoss("non-finite loss at epoch " +
                                        std::to_string(epoch) + ", sample " +
                                        std::to_string(order[i]));
                }
                batch_loss += loss;
                model.backward(mpjpe_loss_grad(pred, s.target));
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (auto* p : params) p->grad *= inv;
            adam.step(params);
            train_loss += batch_loss;
            seen += end - start;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_mpjpe = train_loss / static_cast<double>(seen);
        stats.valid_mpjpe = evaluate_split(model, valid_set);
        stats.wall_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.push_back(stats);
        if (cfg.verbose) {
            std::fprintf(stderr, "epoch %d train %.3f valid %.3f (%.1fs)\n", epoch,
                         stats.train_mpjpe, stats.valid_mpjpe, stats.wall_s);
        }
        if (cfg.target_train_mpjpe > 0.0 && stats.train_mpjpe < cfg.target_train_mpjpe) {
            break;
        }
        if (cfg.patience > 0 && !valid_set.empty()) {
            if (stats.valid_mpjpe < best_valid - 1e-9) {
                best_valid = stats.valid_mpjpe;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    }
    model.quantize_weights();
    return history;
}

PoseSequence infer_stitched(SequenceModel& model, const PoseSequence& sparse,
                            const AudioClip& audio, const WindowSpec& spec) {
    const double duration = std::min(sparse.duration_s(), audio.duration_s());
    if (duration + 1e-9 < spec.window_s) throw TooShort();
    const ModelConfig& cfg = model.config();
    const double out_fps = 50.0;
    const auto out_frames =
        static_cast<std::size_t>(std::lround(duration * out_fps));
    Mat acc = Mat::Zero(static_cast<Eigen::Index>(out_frames), kPoseDim);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out_frames));

    for (int wi = 0;; ++wi) {
        const double start = wi * spec.hop_s;
        if (start + spec.window_s > duration + 1e-9) break;
        const auto pf0 = static_cast<std::size_t>(std::lround(start * sparse.fps));
        const auto pn = static_cast<std::size_t>(std::lround(spec.window_s * sparse.fps));
        PoseSequence window;
        window.fps = sparse.fps;
        window.frames.assign(sparse.frames.begin() + static_cast<long>(pf0),
                             sparse.frames.begin() + static_cast<long>(pf0 + pn));
        AudioClip aw;
        aw.sample_rate_hz = audio.sample_rate_hz;
        const auto as0 = static_cast<std::size_t>(std::lround(start * audio.sample_rate_hz));
        const auto an =
            static_cast<std::size_t>(std::lround(spec.window_s * audio.sample_rate_hz));
        aw.samples.assign(audio.samples.begin() + static_cast<long>(as0),
                          audio.samples.begin() + static_cast<long>(as0 + an));
        const Mat audio_feat =
            cfg.use_audio ? extract_audio_features(aw) : Mat::Zero(kAudioSteps, kAudioDim);
        const Mat pred = model.forward(flatten_pose(window), audio_feat, false);
        const auto of0 = static_cast<Eigen::Index>(std::lround(start * out_fps));
        for (Eigen::Index k = 0; k < pred.rows(); ++k) {
            if (of0 + k >= acc.rows()) break;
            acc.row(of0 + k) += pred.row(k);
            count(of0 + k) += 1.0;
        }
    }
    for (Eigen::Index r = 0; r < acc.rows(); ++r) {
        if (count(r) > 0) acc.row(r) /= count(r);
    }
    return unflatten_pose(acc, out_fps);
}

TrainSample sample_to_train(const Sample& s) {
    TrainSample t;
    t.pose_feat = flatten_pose(s.sparse_pose);
    t.audio_feat = s.audio;
    t.target = flatten_pose(s.target_pose);
    return t;
}

}  // namespace mapnet
