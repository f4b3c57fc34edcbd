#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mapnet::nn {

using Mat = Eigen::MatrixXd;

struct Param {
    std::string name;
    Mat value;
    Mat grad;

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using Rng = std::mt19937_64;

// Xavier-uniform init.
Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// Sinusoidal positional encoding, T x dim.
Mat positional_encoding(Eigen::Index t, Eigen::Index dim);

// Row-wise affine map, Y = X W + b.
class Dense {
public:
    Dense() = default;
    Dense(const std::string& name, int in, int out, Rng& rng);

    Mat forward(const Mat& x);
    Mat backward(const Mat& dy);
    void params(std::vector<Param*>& out);

    Param w, b;

private:
    Mat x_;
};

class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(const std::string& name, int dim);

    Mat forward(const Mat& x);
    Mat backward(const Mat& dy);
    void params(std::vector<Param*>& out);

    Param gamma, beta;

private:
    Mat x_hat_;
    Eigen::VectorXd inv_std_;
    static constexpr double kEps = 1e-5;
};

// Inverted dropout; identity when rate == 0 or in eval mode.
class Dropout {
public:
    explicit Dropout(double rate = 0.0) : rate_(rate) {}

    Mat forward(const Mat& x, bool train, Rng& rng);
    Mat backward(const Mat& dy);

private:
    double rate_;
    Mat mask_;
    bool active_ = false;
};

class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(const std::string& name, int dim, int heads, Rng& rng);

    Mat forward(const Mat& x);
    Mat backward(const Mat& dy);
    void params(std::vector<Param*>& out);

    // Per-head attention rows from the last forward (head-major, rows sum to 1).
    const std::vector<Mat>& last_attention() const { return attn_; }

private:
    int heads_ = 1;
    Dense wq_, wk_, wv_, wo_;
    Mat q_, k_, v_;
    std::vector<Mat> attn_;
    Mat concat_;
};

// One post-norm encoder block: x -> LN(x + Drop(MHA(x))) -> LN(. + Drop(FF(.))).
class EncoderLayer {
public:
    EncoderLayer() = default;
    EncoderLayer(const std::string& name, int dim, int heads, int ff_dim, double dropout,
                 Rng& rng);

    Mat forward(const Mat& x, bool train, Rng& rng);
    Mat backward(const Mat& dy);
    void params(std::vector<Param*>& out);

    MultiHeadAttention mha;

private:
    Dense ff1_, ff2_;
    LayerNorm ln1_, ln2_;
    Dropout drop1_, drop2_;
    Mat relu_in_;
};

// Stack of encoder layers with optional sinusoidal positional encoding.
class TransformerEncoder {
public:
    TransformerEncoder() = default;
    TransformerEncoder(const std::string& name, int n_layers, int dim, int heads,
                       int ff_dim, double dropout, bool use_pe, Rng& rng);

    Mat forward(const Mat& x, bool train, Rng& rng);
    Mat backward(const Mat& dy);
    void params(std::vector<Param*>& out);

    bool uses_positional_encoding() const { return use_pe_; }
    std::vector<EncoderLayer> layers;

private:
    bool use_pe_ = true;
};

// Learned affine map along the time axis: X (T x H) -> A X + b 1^T (H2 x H).
class TimeRebalance {
public:
    TimeRebalance() = default;
    TimeRebalance(const std::string& name, int t_in, int h2, Rng& rng);

    Mat forward(const Mat& x);
    Mat backward(const Mat& dy);
    void params(std::vector<Param*>& out);

    int input_length() const { return static_cast<int>(a.value.cols()); }

    Param a, b;

private:
    Mat x_;
};

class Adam {
public:
    struct Config {
        double lr = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam() = default;
    explicit Adam(Config cfg) : cfg_(cfg) {}

    void step(const std::vector<Param*>& params);

private:
    Config cfg_{};
    std::vector<Mat> m_, v_;
    long t_ = 0;
};

// Flatten row-major to a 1 x (rows*cols) row vector, and back.
Mat flatten_rows(const Mat& x);
Mat unflatten_rows(const Mat& v, Eigen::Index rows, Eigen::Index cols);

}  // namespace mapnet::nn
