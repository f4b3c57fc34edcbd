#include "mapnet/lstm.hpp"

#include <cmath>

namespace mapnet {

namespace nn {

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

LstmLayer::LstmLayer(const std::string& name, int input, int hidden, Rng& rng)
    : hidden_(hidden) {
    w.name = name + ".w";
    w.value = glorot(input, 4 * hidden, rng);
    w.zero_grad();
    u.name = name + ".u";
    u.value = glorot(hidden, 4 * hidden, rng);
    u.zero_grad();
    b.name = name + ".b";
    b.value = Mat::Zero(1, 4 * hidden);
    // Forget-gate bias starts at 1.
    b.value.middleCols(hidden_, hidden_).setOnes();
    b.zero_grad();
}

Mat LstmLayer::forward(const Mat& x) {
    const Eigen::Index t_len = x.rows();
    const int h = hidden_;
    x_ = x;
    h_.setZero(t_len, h);
    c_.setZero(t_len, h);
    gates_.resize(t_len, 4 * h);
    Eigen::RowVectorXd h_prev = Eigen::RowVectorXd::Zero(h);
    Eigen::RowVectorXd c_prev = Eigen::RowVectorXd::Zero(h);
    for (Eigen::Index t = 0; t < t_len; ++t) {
        Eigen::RowVectorXd z = x.row(t) * w.value + h_prev * u.value + b.value.row(0);
        for (int j = 0; j < h; ++j) {
            const double ig = sigmoid(z(j));
            const double fg = sigmoid(z(h + j));
            const double gg = std::tanh(z(2 * h + j));
            const double og = sigmoid(z(3 * h + j));
            const double c = fg * c_prev(j) + ig * gg;
            gates_(t, j) = ig;
            gates_(t, h + j) = fg;
            gates_(t, 2 * h + j) = gg;
            gates_(t, 3 * h + j) = og;
            c_(t, j) = c;
            h_(t, j) = og * std::tanh(c);
        }
        h_prev = h_.row(t);
        c_prev = c_.row(t);
    }
    return h_;
}

Mat LstmLayer::backward(const Mat& dh_out) {
    const Eigen::Index t_len = x_.rows();
    const int h = hidden_;
    Mat dx(t_len, x_.cols());
    Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(h);
    Eigen::RowVectorXd dc_next = Eigen::RowVectorXd::Zero(h);
    for (Eigen::Index t = t_len - 1; t >= 0; --t) {
        Eigen::RowVectorXd dh = dh_out.row(t) + dh_next;
        Eigen::RowVectorXd dz(4 * h);
        for (int j = 0; j < h; ++j) {
            const double ig = gates_(t, j);
            const double fg = gates_(t, h + j);
            const double gg = gates_(t, 2 * h + j);
            const double og = gates_(t, 3 * h + j);
            const double tc = std::tanh(c_(t, j));
            const double c_prev = (t > 0) ? c_(t - 1, j) : 0.0;
            const double dc = dh(j) * og * (1.0 - tc * tc) + dc_next(j);
            dz(j) = dc * gg * ig * (1.0 - ig);
            dz(h + j) = dc * c_prev * fg * (1.0 - fg);
            dz(2 * h + j) = dc * ig * (1.0 - gg * gg);
            dz(3 * h + j) = dh(j) * tc * og * (1.0 - og);
            dc_next(j) = dc * fg;
        }
        w.grad.noalias() += x_.row(t).transpose() * dz;
        if (t > 0) u.grad.noalias() += h_.row(t - 1).transpose() * dz;
        b.grad.row(0) += dz;
        dx.row(t) = dz * w.value.transpose();
        dh_next = dz * u.value.transpose();
    }
    return dx;
}

void LstmLayer::params(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&u);
    out.push_back(&b);
}

}  // namespace nn

nn::Mat resample_rows(const nn::Mat& x, Eigen::Index rows_out) {
    if (x.rows() == rows_out) return x;
    nn::Mat out(rows_out, x.cols());
    for (Eigen::Index r = 0; r < rows_out; ++r) {
        const double src = (rows_out > 1)
                               ? static_cast<double>(r) * (x.rows() - 1) /
                                     static_cast<double>(rows_out - 1)
                               : 0.0;
        const auto lo = static_cast<Eigen::Index>(src);
        const Eigen::Index hi = std::min(lo + 1, x.rows() - 1);
        const double frac = src - static_cast<double>(lo);
        out.row(r) = (1.0 - frac) * x.row(lo) + frac * x.row(hi);
    }
    return out;
}

LstmBaseline::LstmBaseline(const ModelConfig& cfg, bool use_audio, int hidden, int layers,
                           std::uint64_t seed)
    : cfg_(cfg), hidden_(hidden) {
    cfg_.use_audio = use_audio;
    cfg_.use_rebalance = false;
    nn::Rng rng(seed);
    const int step_dim = kPoseDim + (use_audio ? kAudioDim : 0);
    layers_.reserve(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) {
        layers_.emplace_back("lstm" + std::to_string(l), l == 0 ? step_dim : hidden,
                             hidden, rng);
    }
    fc1_ = nn::Dense("fc1", cfg_.t_in() * hidden, cfg_.decode_hidden, rng);
    fc2_ = nn::Dense("fc2", cfg_.decode_hidden, cfg_.decode_hidden, rng);
    fc3_ = nn::Dense("fc3", cfg_.decode_hidden, cfg_.t_out * kPoseDim, rng);
}

nn::Mat LstmBaseline::forward(const nn::Mat& pose_feat, const nn::Mat& audio_feat, bool) {
    if (pose_feat.rows() != cfg_.t_in() || pose_feat.cols() != kPoseDim) {
        throw ShapeMismatch("lstm: pose feature must be T_in x 39");
    }
    nn::Mat x;
    if (cfg_.use_audio) {
        x.resize(pose_feat.rows(), kPoseDim + kAudioDim);
        x.leftCols(kPoseDim) = pose_feat * kPoseScale;
        x.rightCols(kAudioDim) = resample_rows(audio_feat, pose_feat.rows()) * kAudioScale;
    } else {
        x = pose_feat * kPoseScale;
    }
    for (auto& layer : layers_) x = layer.forward(x);
    relu1_in_ = fc1_.forward(nn::flatten_rows(x));
    relu2_in_ = fc2_.forward(relu1_in_.cwiseMax(0.0));
    const nn::Mat out = fc3_.forward(relu2_in_.cwiseMax(0.0));
    return nn::unflatten_rows(out, cfg_.t_out, kPoseDim) / kPoseScale;
}

void LstmBaseline::backward(const nn::Mat& dout) {
    const nn::Mat dflat_out = nn::flatten_rows(dout) / kPoseScale;
    const nn::Mat drelu2 = fc3_.backward(dflat_out)
                               .cwiseProduct((relu2_in_.array() > 0.0).cast<double>().matrix());
    const nn::Mat drelu1 = fc2_.backward(drelu2)
                               .cwiseProduct((relu1_in_.array() > 0.0).cast<double>().matrix());
    nn::Mat dx = nn::unflatten_rows(fc1_.backward(drelu1), cfg_.t_in(), hidden_);
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) dx = it->backward(dx);
}

std::vector<nn::Param*> LstmBaseline::parameters() {
    std::vector<nn::Param*> out;
    for (auto& layer : layers_) layer.params(out);
    fc1_.params(out);
    fc2_.params(out);
    fc3_.params(out);
    return out;
}

}  // namespace mapnet
