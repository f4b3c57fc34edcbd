#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "mapnet/lstm.hpp"
#include "mapnet/nn.hpp"

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

// Central finite differences vs analytic gradients, per parameter tensor.
// loss() must run forward and return the scalar; analytic grads must already
// be accumulated (forward+backward once) before calling.
void check_param_grads(const std::vector<nn::Param*>& params,
                       const std::function<double()>& loss, double tol = 1e-5,
                       int max_entries = 20) {
    const double eps = 1e-5;
    for (auto* p : params) {
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
        // Floor guards tensors whose true gradient is exactly zero (e.g. the
        // key-projection bias, which softmax shift-invariance cancels out).
        const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-3);
        INFO("param ", p->name);
        CHECK(rel < tol);
    }
}

}  // namespace

TEST_CASE("positional encoding closed form") {
    const Mat pe = nn::positional_encoding(10, 160);
    CHECK(pe(0, 0) == 0.0);   // sin(0)
    CHECK(pe(0, 1) == 1.0);   // cos(0)
    CHECK(pe.maxCoeff() <= 1.0);
    CHECK(pe.minCoeff() >= -1.0);
    // Direct formula at (t=7, d=3): cos(7 / 10000^(2/160)).
    const double expected = std::cos(7.0 / std::pow(10000.0, 2.0 / 160.0));
    CHECK(pe(7, 3) == doctest::Approx(expected).epsilon(1e-12));
    const double expected_even = std::sin(7.0 / std::pow(10000.0, 4.0 / 160.0));
    CHECK(pe(7, 4) == doctest::Approx(expected_even).epsilon(1e-12));
}

TEST_CASE("dense gradients") {
    nn::Rng rng(1);
    nn::Dense dense("d", 7, 5, rng);
    const Mat x = random_mat(4, 7, 2);
    const Mat r = random_mat(4, 5, 3);
    auto loss = [&] { return dense.forward(x).cwiseProduct(r).sum(); };
    loss();
    dense.backward(r);
    std::vector<nn::Param*> params;
    dense.params(params);
    check_param_grads(params, loss);
}

TEST_CASE("dense zero weights and linearity") {
    nn::Rng rng(4);
    nn::Dense dense("d", 39, 160, rng);
    dense.b.value.setZero();
    const Mat x = random_mat(150, 39, 5);
    const Mat y1 = dense.forward(x);
    CHECK(y1.rows() == 150);
    CHECK(y1.cols() == 160);
    const Mat y2 = dense.forward(3.0 * x);
    CHECK((y2 - 3.0 * y1).cwiseAbs().maxCoeff() < 1e-9);
    dense.w.value.setZero();
    CHECK(dense.forward(x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("layer norm gradients") {
    nn::LayerNorm ln("ln", 6);
    ln.gamma.value = random_mat(1, 6, 6, 0.5).array() + 1.0;
    ln.beta.value = random_mat(1, 6, 7, 0.5);
    const Mat x = random_mat(5, 6, 8);
    const Mat r = random_mat(5, 6, 9);
    auto loss = [&] { return ln.forward(x).cwiseProduct(r).sum(); };
    loss();
    ln.backward(r);
    std::vector<nn::Param*> params;
    ln.params(params);
    check_param_grads(params, loss);
}

TEST_CASE("layer norm input gradient") {
    nn::LayerNorm ln("ln", 6);
    Mat x = random_mat(3, 6, 10);
    const Mat r = random_mat(3, 6, 11);
    ln.forward(x);
    const Mat dx = ln.backward(r);
    const double eps = 1e-6;
    for (Eigen::Index i = 0; i < x.size(); i += 3) {
        const double saved = x.data()[i];
        x.data()[i] = saved + eps;
        const double up = ln.forward(x).cwiseProduct(r).sum();
        x.data()[i] = saved - eps;
        const double down = ln.forward(x).cwiseProduct(r).sum();
        x.data()[i] = saved;
        const double fd = (up - down) / (2.0 * eps);
        CHECK(std::abs(fd - dx.data()[i]) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("attention rows sum to one") {
    nn::Rng rng(12);
    nn::MultiHeadAttention mha("mha", 8, 2, rng);
    mha.forward(random_mat(9, 8, 13));
    for (const auto& a : mha.last_attention()) {
        REQUIRE(a.rows() == 9);
        for (Eigen::Index r = 0; r < a.rows(); ++r) {
            CHECK(a.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("multi-head attention gradients") {
    nn::Rng rng(14);
    nn::MultiHeadAttention mha("mha", 8, 2, rng);
    const Mat x = random_mat(5, 8, 15);
    const Mat r = random_mat(5, 8, 16);
    auto loss = [&] { return mha.forward(x).cwiseProduct(r).sum(); };
    loss();
    mha.backward(r);
    std::vector<nn::Param*> params;
    mha.params(params);
    check_param_grads(params, loss);
}

TEST_CASE("encoder layer gradients and shape preservation") {
    nn::Rng rng(17);
    nn::EncoderLayer layer("enc", 8, 2, 16, 0.0, rng);
    const Mat x = random_mat(4, 8, 18);
    const Mat r = random_mat(4, 8, 19);
    nn::Rng fwd_rng(0);
    auto loss = [&] {
        nn::Rng rr(0);
        return layer.forward(x, false, rr).cwiseProduct(r).sum();
    };
    const Mat y = layer.forward(x, false, fwd_rng);
    CHECK(y.rows() == x.rows());
    CHECK(y.cols() == x.cols());
    layer.backward(r);
    std::vector<nn::Param*> params;
    layer.params(params);
    check_param_grads(params, loss, 1e-4);
}

TEST_CASE("two-layer encoder input gradient vs finite differences") {
    nn::Rng rng(20);
    nn::TransformerEncoder enc("enc", 2, 8, 2, 16, 0.0, true, rng);
    Mat x = random_mat(4, 8, 21);
    const Mat r = random_mat(4, 8, 22);
    nn::Rng rr(0);
    enc.forward(x, false, rr);
    const Mat dx = enc.backward(r);
    const double eps = 1e-5;
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double saved = x.data()[i];
        nn::Rng r1(0), r2(0);
        x.data()[i] = saved + eps;
        const double up = enc.forward(x, false, r1).cwiseProduct(r).sum();
        x.data()[i] = saved - eps;
        const double down = enc.forward(x, false, r2).cwiseProduct(r).sum();
        x.data()[i] = saved;
        const double fd = (up - down) / (2.0 * eps);
        num += (fd - dx.data()[i]) * (fd - dx.data()[i]);
        den += std::max(fd * fd, dx.data()[i] * dx.data()[i]);
    }
    CHECK(std::sqrt(num) / std::sqrt(den) < 1e-4);
}

TEST_CASE("transformer without positional encoding is row-permutation equivariant") {
    nn::Rng rng(23);
    nn::TransformerEncoder enc("enc", 2, 8, 2, 16, 0.0, /*use_pe=*/false, rng);
    const Mat x = random_mat(6, 8, 24);
    std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    Mat xp(6, 8);
    for (int i = 0; i < 6; ++i) xp.row(i) = x.row(perm[i]);
    nn::Rng r1(0), r2(0);
    const Mat y = enc.forward(x, false, r1);
    const Mat yp = enc.forward(xp, false, r2);
    for (int i = 0; i < 6; ++i) {
        CHECK((yp.row(i) - y.row(perm[i])).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("transformer with positional encoding is order sensitive") {
    nn::Rng rng(25);
    nn::TransformerEncoder enc("enc", 1, 8, 2, 16, 0.0, /*use_pe=*/true, rng);
    const Mat x = random_mat(6, 8, 26);
    Mat xr = x.colwise().reverse();
    nn::Rng r1(0), r2(0);
    const Mat y = enc.forward(x, false, r1);
    const Mat yr = enc.forward(xr, false, r2);
    // Reversing rows must not simply reverse the output rows.
    CHECK((yr.colwise().reverse() - y).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("time rebalance identity init and gradients") {
    nn::Rng rng(27);
    nn::TimeRebalance reb("reb", 5, 6, rng);
    const Mat x = random_mat(5, 4, 28);
    CHECK(reb.forward(x).rows() == 6);
    CHECK_THROWS(reb.forward(random_mat(7, 4, 29)));

    // Identity-initialized square map reproduces the input.
    nn::TimeRebalance ident("id", 150, 150, rng);
    ident.a.value = Mat::Identity(150, 150);
    ident.b.value.setZero();
    const Mat big = random_mat(150, 8, 30);
    CHECK((ident.forward(big) - big).cwiseAbs().maxCoeff() == 0.0);

    const Mat r = random_mat(6, 4, 31);
    auto loss = [&] { return reb.forward(x).cwiseProduct(r).sum(); };
    loss();
    reb.backward(r);
    std::vector<nn::Param*> params;
    reb.params(params);
    check_param_grads(params, loss);
}

TEST_CASE("lstm layer gradients") {
    nn::Rng rng(32);
    nn::LstmLayer lstm("lstm", 5, 4, rng);
    const Mat x = random_mat(6, 5, 33);
    const Mat r = random_mat(6, 4, 34);
    auto loss = [&] { return lstm.forward(x).cwiseProduct(r).sum(); };
    loss();
    lstm.backward(r);
    std::vector<nn::Param*> params;
    lstm.params(params);
    check_param_grads(params, loss, 1e-5);
}

TEST_CASE("dropout scales and masks") {
    nn::Dropout drop(0.5);
    nn::Rng rng(35);
    const Mat x = Mat::Ones(50, 50);
    const Mat y = drop.forward(x, true, rng);
    int zeros = 0, twos = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y.data()[i] == 0.0) ++zeros;
        if (y.data()[i] == 2.0) ++twos;
    }
    CHECK(zeros + twos == 2500);
    CHECK(zeros > 1000);
    CHECK(twos > 1000);
    nn::Rng rng2(36);
    CHECK(drop.forward(x, false, rng2) == x);
}

TEST_CASE("adam decreases a quadratic and lr=0 is a no-op") {
    nn::Param p;
    p.name = "p";
    p.value = random_mat(3, 3, 37);
    p.zero_grad();
    const Mat start = p.value;

    nn::Adam frozen({.lr = 0.0});
    p.grad = p.value;
    frozen.step({&p});
    CHECK(p.value == start);

    nn::Adam adam({.lr = 0.05});
    for (int i = 0; i < 200; ++i) {
        p.grad = p.value;  // gradient of 0.5||p||^2
        adam.step({&p});
    }
    CHECK(p.value.norm() < start.norm() * 0.2);
}

TEST_CASE("flatten_rows round trip and ordering") {
    const Mat x = random_mat(4, 3, 38);
    const Mat v = nn::flatten_rows(x);
    CHECK(v.rows() == 1);
    CHECK(v.cols() == 12);
    CHECK(v(0, 5) == x(1, 2));  // row-major
    CHECK(nn::unflatten_rows(v, 4, 3) == x);
}

TEST_CASE("resample_rows endpoints and identity") {
    const Mat x = random_mat(150, 4, 39);
    CHECK(resample_rows(x, 150) == x);
    const Mat y = resample_rows(x, 50);
    CHECK(y.rows() == 50);
    CHECK(y.row(0) == x.row(0));
    CHECK(y.row(49) == x.row(149));
}
