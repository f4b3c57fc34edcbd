#include "mapnet/nn.hpp"

#include <cmath>

namespace mapnet::nn {

Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    }
    return m;
}

Mat positional_encoding(Eigen::Index t, Eigen::Index dim) {
    Mat pe(t, dim);
    for (Eigen::Index pos = 0; pos < t; ++pos) {
        for (Eigen::Index d = 0; d < dim; ++d) {
            const double exponent = static_cast<double>(2 * (d / 2)) / static_cast<double>(dim);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
            pe(pos, d) = (d % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

// ---- Dense ----

Dense::Dense(const std::string& name, int in, int out, Rng& rng) {
    w.name = name + ".w";
    w.value = glorot(in, out, rng);
    w.zero_grad();
    b.name = name + ".b";
    b.value = Mat::Zero(1, out);
    b.zero_grad();
}

Mat Dense::forward(const Mat& x) {
    x_ = x;
    return (x * w.value).rowwise() + b.value.row(0);
}

Mat Dense::backward(const Mat& dy) {
    w.grad.noalias() += x_.transpose() * dy;
    b.grad.row(0) += dy.colwise().sum();
    return dy * w.value.transpose();
}

void Dense::params(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
}

// ---- LayerNorm ----

LayerNorm::LayerNorm(const std::string& name, int dim) {
    gamma.name = name + ".gamma";
    gamma.value = Mat::Ones(1, dim);
    gamma.zero_grad();
    beta.name = name + ".beta";
    beta.value = Mat::Zero(1, dim);
    beta.zero_grad();
}

Mat LayerNorm::forward(const Mat& x) {
    const Eigen::Index n = x.cols();
    x_hat_.resize(x.rows(), n);
    inv_std_.resize(x.rows());
    Mat y(x.rows(), n);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        const double inv = 1.0 / std::sqrt(var + kEps);
        inv_std_(r) = inv;
        x_hat_.row(r) = (x.row(r).array() - mean) * inv;
        y.row(r) = x_hat_.row(r).cwiseProduct(gamma.value.row(0)) + beta.value.row(0);
    }
    return y;
}

Mat LayerNorm::backward(const Mat& dy) {
    const Eigen::Index n = dy.cols();
    Mat dx(dy.rows(), n);
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        gamma.grad.row(0) += dy.row(r).cwiseProduct(x_hat_.row(r));
        beta.grad.row(0) += dy.row(r);
        const Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(gamma.value.row(0));
        const double mean_dxhat = dxhat.mean();
        const double mean_dxhat_xhat = dxhat.cwiseProduct(x_hat_.row(r)).mean();
        dx.row(r) = (dxhat.array() - mean_dxhat - x_hat_.row(r).array() * mean_dxhat_xhat) *
                    inv_std_(r);
    }
    return dx;
}

void LayerNorm::params(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

// ---- Dropout ----

Mat Dropout::forward(const Mat& x, bool train, Rng& rng) {
    active_ = train && rate_ > 0.0;
    if (!active_) return x;
    std::bernoulli_distribution keep(1.0 - rate_);
    mask_.resize(x.rows(), x.cols());
    const double scale = 1.0 / (1.0 - rate_);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            mask_(i, j) = keep(rng) ? scale : 0.0;
        }
    }
    return x.cwiseProduct(mask_);
}

Mat Dropout::backward(const Mat& dy) {
    if (!active_) return dy;
    return dy.cwiseProduct(mask_);
}

// ---- MultiHeadAttention ----

MultiHeadAttention::MultiHeadAttention(const std::string& name, int dim, int heads,
                                       Rng& rng)
    : heads_(heads),
      wq_(name + ".wq", dim, dim, rng),
      wk_(name + ".wk", dim, dim, rng),
      wv_(name + ".wv", dim, dim, rng),
      wo_(name + ".wo", dim, dim, rng) {
    if (dim % heads != 0) {
        throw std::invalid_argument("attention dim must be divisible by head count");
    }
}

Mat MultiHeadAttention::forward(const Mat& x) {
    const Eigen::Index t = x.rows();
    const Eigen::Index dim = x.cols();
    const Eigen::Index dh = dim / heads_;
    q_ = wq_.forward(x);
    k_ = wk_.forward(x);
    v_ = wv_.forward(x);
    attn_.assign(static_cast<std::size_t>(heads_), Mat());
    concat_.resize(t, dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < heads_; ++h) {
        const auto qh = q_.middleCols(h * dh, dh);
        const auto kh = k_.middleCols(h * dh, dh);
        const auto vh = v_.middleCols(h * dh, dh);
        Mat scores = qh * kh.transpose() * scale;
        // Row-wise stable softmax.
        for (Eigen::Index r = 0; r < t; ++r) {
            const double mx = scores.row(r).maxCoeff();
            scores.row(r) = (scores.row(r).array() - mx).exp();
            scores.row(r) /= scores.row(r).sum();
        }
        attn_[static_cast<std::size_t>(h)] = scores;
        concat_.middleCols(h * dh, dh).noalias() = scores * vh;
    }
    return wo_.forward(concat_);
}

Mat MultiHeadAttention::backward(const Mat& dy) {
    const Eigen::Index dim = dy.cols();
    const Eigen::Index dh = dim / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Mat dconcat = wo_.backward(dy);
    Mat dq(q_.rows(), dim), dk(k_.rows(), dim), dv(v_.rows(), dim);
    for (int h = 0; h < heads_; ++h) {
        const auto a = attn_[static_cast<std::size_t>(h)];
        const auto vh = v_.middleCols(h * dh, dh);
        const auto qh = q_.middleCols(h * dh, dh);
        const auto kh = k_.middleCols(h * dh, dh);
        const auto doh = dconcat.middleCols(h * dh, dh);
        dv.middleCols(h * dh, dh).noalias() = a.transpose() * doh;
        Mat da = doh * vh.transpose();
        // Softmax backward per row: ds = a .* (da - rowdot(da, a)).
        Mat ds(a.rows(), a.cols());
        for (Eigen::Index r = 0; r < a.rows(); ++r) {
            const double dot = da.row(r).dot(a.row(r));
            ds.row(r) = a.row(r).cwiseProduct((da.row(r).array() - dot).matrix());
        }
        ds *= scale;
        dq.middleCols(h * dh, dh).noalias() = ds * kh;
        dk.middleCols(h * dh, dh).noalias() = ds.transpose() * qh;
    }
    Mat dx = wq_.backward(dq);
    dx += wk_.backward(dk);
    dx += wv_.backward(dv);
    return dx;
}

void MultiHeadAttention::params(std::vector<Param*>& out) {
    wq_.params(out);
    wk_.params(out);
    wv_.params(out);
    wo_.params(out);
}

// ---- EncoderLayer ----

EncoderLayer::EncoderLayer(const std::string& name, int dim, int heads, int ff_dim,
                           double dropout, Rng& rng)
    : mha(name + ".mha", dim, heads, rng),
      ff1_(name + ".ff1", dim, ff_dim, rng),
      ff2_(name + ".ff2", ff_dim, dim, rng),
      ln1_(name + ".ln1", dim),
      ln2_(name + ".ln2", dim),
      drop1_(dropout),
      drop2_(dropout) {}

Mat EncoderLayer::forward(const Mat& x, bool train, Rng& rng) {
    const Mat y1 = ln1_.forward(x + drop1_.forward(mha.forward(x), train, rng));
    relu_in_ = ff1_.forward(y1);
    const Mat ff = ff2_.forward(relu_in_.cwiseMax(0.0));
    return ln2_.forward(y1 + drop2_.forward(ff, train, rng));
}

Mat EncoderLayer::backward(const Mat& dy) {
    const Mat dsum2 = ln2_.backward(dy);
    const Mat dff = ff2_.backward(drop2_.backward(dsum2));
    const Mat drelu =
        dff.cwiseProduct((relu_in_.array() > 0.0).cast<double>().matrix());
    Mat dy1 = dsum2 + ff1_.backward(drelu);
    const Mat dsum1 = ln1_.backward(dy1);
    return dsum1 + mha.backward(drop1_.backward(dsum1));
}

void EncoderLayer::params(std::vector<Param*>& out) {
    mha.params(out);
    ff1_.params(out);
    ff2_.params(out);
    ln1_.params(out);
    ln2_.params(out);
}

// ---- TransformerEncoder ----

TransformerEncoder::TransformerEncoder(const std::string& name, int n_layers, int dim,
                                       int heads, int ff_dim, double dropout, bool use_pe,
                                       Rng& rng)
    : use_pe_(use_pe) {
    layers.reserve(static_cast<std::size_t>(n_layers));
    for (int i = 0; i < n_layers; ++i) {
        layers.emplace_back(name + ".layer" + std::to_string(i), dim, heads, ff_dim,
                            dropout, rng);
    }
}

Mat TransformerEncoder::forward(const Mat& x, bool train, Rng& rng) {
    Mat h = x;
    if (use_pe_) h += positional_encoding(x.rows(), x.cols());
    for (auto& layer : layers) h = layer.forward(h, train, rng);
    return h;
}

Mat TransformerEncoder::backward(const Mat& dy) {
    Mat d = dy;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) d = it->backward(d);
    return d;  // d(PE)/dx = identity
}

void TransformerEncoder::params(std::vector<Param*>& out) {
    for (auto& layer : layers) layer.params(out);
}

// ---- TimeRebalance ----

TimeRebalance::TimeRebalance(const std::string& name, int t_in, int h2, Rng& rng) {
    a.name = name + ".a";
    a.value = glorot(h2, t_in, rng);
    a.zero_grad();
    b.name = name + ".b";
    b.value = Mat::Zero(h2, 1);
    b.zero_grad();
}

Mat TimeRebalance::forward(const Mat& x) {
    if (x.rows() != a.value.cols()) {
        throw std::invalid_argument("rebalance: unconfigured input length " +
                                    std::to_string(x.rows()));
    }
    x_ = x;
    return (a.value * x).colwise() + b.value.col(0);
}

Mat TimeRebalance::backward(const Mat& dy) {
    a.grad.noalias() += dy * x_.transpose();
    b.grad.col(0) += dy.rowwise().sum();
    return a.value.transpose() * dy;
}

void TimeRebalance::params(std::vector<Param*>& out) {
    out.push_back(&a);
    out.push_back(&b);
}

// ---- Adam ----

void Adam::step(const std::vector<Param*>& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = Mat::Zero(params[i]->value.rows(), params[i]->value.cols());
            v_[i] = Mat::Zero(params[i]->value.rows(), params[i]->value.cols());
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
        const Mat m_hat = m_[i] / bc1;
        const Mat v_hat = v_[i] / bc2;
        p.value -=
            cfg_.lr * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + cfg_.eps).matrix());
    }
}

// ---- flatten ----

Mat flatten_rows(const Mat& x) {
    Mat v(1, x.rows() * x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) v(0, r * x.cols() + c) = x(r, c);
    }
    return v;
}

Mat unflatten_rows(const Mat& v, Eigen::Index rows, Eigen::Index cols) {
    Mat x(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) x(r, c) = v(0, r * cols + c);
    }
    return x;
}

}  // namespace mapnet::nn
