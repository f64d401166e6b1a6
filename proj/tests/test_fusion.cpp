#include "doctest.h"
#include "oracles.hpp"

#include "motionkit/fusion.hpp"

#include <random>
#include <sstream>

using namespace motionkit;
using namespace motionkit::fusion;

namespace {

Eigen::MatrixXd features(int n, int d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd m(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) m(i, j) = g(rng);
    }
    return m;
}

// ---- straight-line transcription, row by row ----

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double mx = m.row(i).maxCoeff();
        double s = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j) s += std::exp(m(i, j) - mx);
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = std::exp(m(i, j) - mx) / s;
    }
    return m;
}

Eigen::MatrixXd attend(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
                       const AttentionWeights& w) {
    const Eigen::MatrixXd qq = q * w.wq;
    const Eigen::MatrixXd kk = k * w.wk;
    const Eigen::MatrixXd vv = v * w.wv;
    const Eigen::MatrixXd p = softmax_rows(qq * kk.transpose() / std::sqrt(static_cast<double>(q.cols())));
    return p * vv * w.wo;
}

Eigen::MatrixXd norm_rows(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& g, const Eigen::RowVectorXd& b) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mean = x.row(i).mean();
        const double var = (x.row(i).array() - mean).square().mean();
        out.row(i) = ((x.row(i).array() - mean) / std::sqrt(var + kNormEps)).matrix().cwiseProduct(g) + b;
    }
    return out;
}

Eigen::MatrixXd encode(const Eigen::MatrixXd& x, const EncoderWeights& w) {
    const Eigen::MatrixXd n1 = norm_rows(x, w.norm1_gain, w.norm1_bias);
    const Eigen::MatrixXd y = x + attend(n1, n1, n1, w.attn);
    Eigen::MatrixXd h = norm_rows(y, w.norm2_gain, w.norm2_bias) * w.ffn_w1;
    h.rowwise() += w.ffn_b1;
    h = h.unaryExpr([](double a) { return 0.5 * a * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (a + 0.044715 * a * a * a))); });
    Eigen::MatrixXd f = h * w.ffn_w2;
    f.rowwise() += w.ffn_b2;
    return y + f;
}

Eigen::MatrixXd mmca_oracle(const Eigen::MatrixXd& f3d, const Eigen::MatrixXd& f2d, const MMCAWeights& w) {
    const Eigen::MatrixXd e3 = encode(f3d, w.enc_3d);
    const Eigen::MatrixXd e2 = encode(f2d, w.enc_2d);
    const Eigen::MatrixXd l1 = attend(e3, e2, e2, w.cross1);
    const Eigen::MatrixXd l2 = attend(e3, l1, e2, w.cross2);
    return f3d + l2;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("attention special cases") {
    const auto q = features(5, 4, 1);
    const auto v1 = features(1, 4, 2);
    const auto k1 = features(1, 4, 3);
    const Eigen::MatrixXd one = scaled_dot_attention<double>(q, k1, v1);
    for (int i = 0; i < 5; ++i) CHECK((one.row(i) - v1.row(0)).norm() < 1e-15);

    const auto k = features(6, 4, 4);
    const auto v = features(6, 4, 5);
    const Eigen::MatrixXd zero = scaled_dot_attention<double>(Eigen::MatrixXd::Zero(3, 4), k, v);
    for (int i = 0; i < 3; ++i) CHECK((zero.row(i) - v.colwise().mean()).norm() < 1e-14);

    const auto q3 = features(3, 4, 6);
    const auto k3 = features(3, 4, 7);
    const auto v3 = features(3, 4, 8);
    const Eigen::MatrixXd direct = softmax_rows(q3 * k3.transpose() / 2.0) * v3;
    CHECK((scaled_dot_attention<double>(q3, k3, v3) - direct).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(scaled_dot_attention<double>(q3, features(3, 5, 1), v3), ValidationError);
    CHECK_THROWS_AS(scaled_dot_attention<double>(q3, k3, features(2, 4, 1)), ValidationError);
}

TEST_CASE("softmax rows sum to one") {
    const auto w = init_tumm_weights(8, 3);
    int calls = 0;
    double worst = 0.0;
    const AttentionObserver obs = [&](const Eigen::MatrixXd& p) {
        ++calls;
        for (Eigen::Index i = 0; i < p.rows(); ++i) worst = std::max(worst, std::abs(p.row(i).sum() - 1.0));
        CHECK(p.minCoeff() >= 0.0);
    };
    tumm_forward<double>(features(5, 8, 1), features(5, 8, 2), features(5, 8, 3), w, &obs);
    CHECK(calls == 12);
    CHECK(worst < 1e-9);
}

TEST_CASE("encoder block") {
    auto w = init_weights(6, 1);
    const auto x = features(4, 6, 9);
    const Eigen::MatrixXd y = encoder_block<double>(x, w.enc_3d);
    CHECK(y.rows() == 4);
    CHECK(y.cols() == 6);
    CHECK((y - encode(x, w.enc_3d)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(encoder_block<double>(x, w.enc_3d) == y);
    zero_residual_outputs(w);
    CHECK(encoder_block<double>(x, w.enc_3d) == x);
    CHECK_THROWS_AS(encoder_block<double>(features(4, 5, 1), w.enc_3d), ValidationError);
}

TEST_CASE("MMCA matches the step-by-step transcription") {
    const auto w = init_weights(8, 17);
    const auto a = features(4, 8, 1);
    const auto b = features(4, 8, 2);
    CHECK((mmca_forward<double>(a, b, w) - mmca_oracle(a, b, w)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(mmca_forward<double>(a, features(3, 8, 1), w), ValidationError);
    CHECK_THROWS_AS(mmca_forward<double>(features(4, 6, 1), features(4, 6, 2), w), ValidationError);
}

TEST_CASE("MMCA residual identity") {
    auto w = init_weights(8, 2);
    w.cross2.wo.setZero();
    const auto a = features(4, 8, 3);
    CHECK(mmca_forward<double>(a, features(4, 8, 4), w) == a);
}

TEST_CASE("MMCA gradient agrees with dual numbers") {
    const auto w = init_weights(8, 5);
    CHECK(oracle::mmca_gradient_check(w, features(4, 8, 6), features(4, 8, 7)) < 1e-4);
}

TEST_CASE("TUMM composition") {
    const auto w = init_tumm_weights(16, 9);
    const auto l = features(6, 16, 1);
    const auto r = features(6, 16, 2);
    const auto e = features(6, 16, 3);
    const Eigen::MatrixXd out = tumm_forward<double>(l, r, e, w);
    CHECK(out.rows() == 6);
    CHECK(out.cols() == 16);
    const Eigen::MatrixXd composed = mmca_oracle(mmca_oracle(l, r, w.rgb), mmca_oracle(l, e, w.event), w.fuse);
    CHECK((out - composed).cwiseAbs().maxCoeff() < 1e-11);

    auto z = w;
    zero_residual_outputs(z.rgb);
    zero_residual_outputs(z.event);
    zero_residual_outputs(z.fuse);
    CHECK(tumm_forward<double>(l, r, e, z) == l);
}

TEST_CASE("frame permutation equivariance") {
    const auto w = init_tumm_weights(8, 4);
    const auto l = features(5, 8, 1);
    const auto r = features(5, 8, 2);
    const auto e = features(5, 8, 3);
    Eigen::PermutationMatrix<Eigen::Dynamic> p(5);
    p.indices() << 3, 0, 4, 1, 2;
    const Eigen::MatrixXd a = p * tumm_forward<double>(l, r, e, w);
    const Eigen::MatrixXd b = tumm_forward<double>(Eigen::MatrixXd(p * l), Eigen::MatrixXd(p * r), Eigen::MatrixXd(p * e), w);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("weight initialization") {
    const auto a = init_weights(8, 1);
    const auto b = init_weights(8, 1);
    const auto c = init_weights(8, 2);
    CHECK(a.enc_3d.attn.wq == b.enc_3d.attn.wq);
    CHECK(a.cross2.wo == b.cross2.wo);
    CHECK(a.enc_3d.attn.wq != c.enc_3d.attn.wq);
    CHECK(a.enc_3d.norm1_gain == Eigen::RowVectorXd::Ones(8));
    CHECK_THROWS_AS(init_weights(0, 1), ValidationError);

    const auto t = init_tumm_weights(8, 1);
    CHECK(t.rgb.enc_3d.attn.wq != t.event.enc_3d.attn.wq);
}

TEST_CASE("weight draw statistics") {
    const int d = 250;
    const auto w = init_weights(d, 123);
    std::vector<double> all;
    auto take = [&](const Eigen::MatrixXd& m) { all.insert(all.end(), m.data(), m.data() + m.size()); };
    for (const auto* e : {&w.enc_3d, &w.enc_2d}) {
        take(e->attn.wq);
        take(e->attn.wk);
        take(e->attn.wv);
        take(e->attn.wo);
        take(e->ffn_w1);
        take(e->ffn_w2);
    }
    for (const auto* a : {&w.cross1, &w.cross2}) {
        take(a->wq);
        take(a->wk);
        take(a->wv);
        take(a->wo);
    }
    REQUIRE(all.size() >= 1000000);
    const double n = static_cast<double>(all.size());
    double mean = 0.0;
    for (double x : all) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : all) var += (x - mean) * (x - mean);
    var /= n - 1.0;
    const double target = 1.0 / d;
    CHECK(std::abs(mean) < 3.0 * std::sqrt(target / n));
    CHECK(std::abs(var - target) < 3.0 * target * std::sqrt(2.0 / n));
}

TEST_CASE("weights container round trip") {
    const auto t = init_tumm_weights(4, 8);
    std::stringstream s;
    write_weights(s, {t.rgb, t.event, t.fuse});
    const auto back = read_weights(s);
    REQUIRE(back.size() == 3);
    CHECK(back[1].enc_2d.ffn_w1 == t.event.enc_2d.ffn_w1);
    CHECK(back[2].cross1.wv == t.fuse.cross1.wv);

    std::stringstream bad("XXXX");
    CHECK_THROWS_AS(read_weights(bad), ValidationError);
    std::stringstream full;
    write_weights(full, {t.rgb});
    const std::string bytes = full.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_weights(cut), ValidationError);
}

}  // TEST_SUITE
