#pragma once

// Multimodal cross-attention (MMCA) and its two-step composition (TUMM).
// Forward pass only. Sequences are N x d row matrices (one row per frame).
// Single head, pre-norm encoder blocks, 4x GELU feed-forward, no positional
// encoding, so every op is equivariant to permuting frames.

#include "motionkit/types.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <type_traits>
#include <vector>

namespace motionkit::fusion {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using FeatureSequence = Mat<double>;

struct AttentionWeights {
    Eigen::MatrixXd wq, wk, wv, wo;  // d x d, applied on the right (x * W)
};

struct EncoderWeights {
    AttentionWeights attn;
    Eigen::RowVectorXd norm1_gain, norm1_bias;
    Eigen::RowVectorXd norm2_gain, norm2_bias;
    Eigen::MatrixXd ffn_w1;  // d x 4d
    Eigen::RowVectorXd ffn_b1;
    Eigen::MatrixXd ffn_w2;  // 4d x d
    Eigen::RowVectorXd ffn_b2;
};

struct MMCAWeights {
    int d = 0;
    EncoderWeights enc_3d;
    EncoderWeights enc_2d;
    AttentionWeights cross1;  // queries: 3D branch, keys/values: 2D branch
    AttentionWeights cross2;  // queries: 3D branch, keys: cross1 output, values: 2D branch

    void validate() const;
};

/// Units of the two-step fusion: (LiDAR, RGB), (LiDAR, event), then (first, second).
struct TummWeights {
    MMCAWeights rgb;
    MMCAWeights event;
    MMCAWeights fuse;
};

inline constexpr double kNormEps = 1e-5;

/// Called with each attention probability matrix (rows are softmax outputs).
using AttentionObserver = std::function<void(const Eigen::MatrixXd&)>;

/// Normal(0, 1) entries scaled by 1/sqrt(d) for every projection and
/// feed-forward matrix; unit norm gains and zero biases. Deterministic per seed.
MMCAWeights init_weights(int d, std::uint64_t seed);
TummWeights init_tumm_weights(int d, std::uint64_t seed);

/// Zero every output projection that feeds a residual (encoder W_o and
/// second FFN layer, cross-attention W_o), making each op an identity on its query input.
void zero_residual_outputs(MMCAWeights& w);

// Flat binary container: "MMCW", u32 version, u32 d, u32 unit count, then per
// unit the float64 tensors in declaration order, row-major, little-endian.
void write_weights(std::ostream& out, const std::vector<MMCAWeights>& units);
std::vector<MMCAWeights> read_weights(std::istream& in);

namespace detail {

template <class S>
Mat<S> cast(const Eigen::MatrixXd& m) {
    return m.unaryExpr([](double x) { return S(x); });
}

template <class S>
void observe(const Mat<S>& p, const AttentionObserver* obs) {
    if constexpr (std::is_same_v<S, double>) {
        if (obs && *obs) (*obs)(p);
    }
}

}  // namespace detail

/// softmax(q k^T / sqrt(d)) v with a row-wise, max-shifted softmax.
template <class S>
Mat<S> scaled_dot_attention(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v, const AttentionObserver* obs = nullptr) {
    using std::exp;
    using std::sqrt;
    if (q.cols() != k.cols() || k.rows() != v.rows() || q.cols() < 1 || k.rows() < 1) {
        throw ValidationError("attention operands have inconsistent shapes");
    }
    const S scale = S(1.0 / std::sqrt(static_cast<double>(q.cols())));
    Mat<S> logits = (q * k.transpose()) * scale;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        S mx = logits(i, 0);
        for (Eigen::Index j = 1; j < logits.cols(); ++j) {
            if (logits(i, j) > mx) mx = logits(i, j);
        }
        S sum = S(0.0);
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            logits(i, j) = exp(logits(i, j) - mx);
            sum += logits(i, j);
        }
        for (Eigen::Index j = 0; j < logits.cols(); ++j) logits(i, j) /= sum;
    }
    detail::observe(logits, obs);
    return logits * v;
}

template <class S>
Mat<S> attention_layer(const Mat<S>& xq, const Mat<S>& xk, const Mat<S>& xv, const AttentionWeights& w,
                       const AttentionObserver* obs = nullptr) {
    using detail::cast;
    const Mat<S> q = xq * cast<S>(w.wq);
    const Mat<S> k = xk * cast<S>(w.wk);
    const Mat<S> v = xv * cast<S>(w.wv);
    return scaled_dot_attention<S>(q, k, v, obs) * cast<S>(w.wo);
}

template <class S>
Mat<S> layer_norm(const Mat<S>& x, const Eigen::RowVectorXd& gain, const Eigen::RowVectorXd& bias) {
    using std::sqrt;
    const auto d = x.cols();
    Mat<S> out(x.rows(), d);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        S mean = S(0.0);
        for (Eigen::Index j = 0; j < d; ++j) mean += x(i, j);
        mean /= S(static_cast<double>(d));
        S var = S(0.0);
        for (Eigen::Index j = 0; j < d; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
        var /= S(static_cast<double>(d));
        const S inv = S(1.0) / sqrt(var + S(kNormEps));
        for (Eigen::Index j = 0; j < d; ++j) out(i, j) = (x(i, j) - mean) * inv * S(gain(j)) + S(bias(j));
    }
    return out;
}

/// tanh approximation of GELU.
template <class S>
S gelu(const S& x) {
    using std::tanh;
    const double c = std::sqrt(2.0 / 3.14159265358979323846);
    return S(0.5) * x * (S(1.0) + tanh(S(c) * (x + S(0.044715) * x * x * x)));
}

template <class S>
Mat<S> encoder_block(const Mat<S>& x, const EncoderWeights& w, const AttentionObserver* obs = nullptr) {
    using detail::cast;
    const auto d = x.cols();
    if (w.attn.wq.rows() != d || w.ffn_w1.rows() != d) throw ValidationError("encoder weights do not match feature width");
    const Mat<S> n1 = layer_norm<S>(x, w.norm1_gain, w.norm1_bias);
    const Mat<S> y = x + attention_layer<S>(n1, n1, n1, w.attn, obs);
    const Mat<S> n2 = layer_norm<S>(y, w.norm2_gain, w.norm2_bias);
    Mat<S> h = n2 * cast<S>(w.ffn_w1);
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        for (Eigen::Index j = 0; j < h.cols(); ++j) h(i, j) = gelu<S>(h(i, j) + S(w.ffn_b1(j)));
    }
    Mat<S> f = h * cast<S>(w.ffn_w2);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
        for (Eigen::Index j = 0; j < f.cols(); ++j) f(i, j) += S(w.ffn_b2(j));
    }
    return y + f;
}

template <class S>
Mat<S> mmca_forward(const Mat<S>& f3d, const Mat<S>& f2d, const MMCAWeights& w, const AttentionObserver* obs = nullptr) {
    if (f3d.rows() != f2d.rows() || f3d.cols() != f2d.cols()) {
        throw ValidationError("MMCA branches differ in frame count or width");
    }
    if (f3d.rows() < 1 || f3d.cols() != w.d) throw ValidationError("feature width does not match MMCA weights");
    const Mat<S> e3 = encoder_block<S>(f3d, w.enc_3d, obs);
    const Mat<S> e2 = encoder_block<S>(f2d, w.enc_2d, obs);
    const Mat<S> l1 = attention_layer<S>(e3, e2, e2, w.cross1, obs);
    const Mat<S> l2 = attention_layer<S>(e3, l1, e2, w.cross2, obs);
    return f3d + l2;
}

template <class S>
Mat<S> tumm_forward(const Mat<S>& lidar, const Mat<S>& rgb, const Mat<S>& event, const TummWeights& w,
                    const AttentionObserver* obs = nullptr) {
    const Mat<S> a = mmca_forward<S>(lidar, rgb, w.rgb, obs);
    const Mat<S> b = mmca_forward<S>(lidar, event, w.event, obs);
    return mmca_forward<S>(a, b, w.fuse, obs);
}

}  // namespace motionkit::fusion
