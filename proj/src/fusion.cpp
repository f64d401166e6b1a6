#include "motionkit/fusion.hpp"

#include <fmt/format.h>

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>

namespace motionkit::fusion {

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'M', 'C', 'W'};
constexpr std::uint32_t kVersion = 1;

class NormalDraw {
public:
    NormalDraw(std::uint64_t seed, double scale) : rng_(seed), scale_(scale) {}
    Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        // Row-major fill order so the stream layout matches the file layout.
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale_ * dist_(rng_);
        }
        return m;
    }

private:
    std::mt19937_64 rng_;
    std::normal_distribution<double> dist_;
    double scale_;
};

AttentionWeights draw_attention(NormalDraw& r, int d) {
    return {r.matrix(d, d), r.matrix(d, d), r.matrix(d, d), r.matrix(d, d)};
}

EncoderWeights draw_encoder(NormalDraw& r, int d) {
    EncoderWeights e;
    e.attn = draw_attention(r, d);
    e.norm1_gain = Eigen::RowVectorXd::Ones(d);
    e.norm1_bias = Eigen::RowVectorXd::Zero(d);
    e.norm2_gain = Eigen::RowVectorXd::Ones(d);
    e.norm2_bias = Eigen::RowVectorXd::Zero(d);
    e.ffn_w1 = r.matrix(d, 4 * d);
    e.ffn_b1 = Eigen::RowVectorXd::Zero(4 * d);
    e.ffn_w2 = r.matrix(4 * d, d);
    e.ffn_b2 = Eigen::RowVectorXd::Zero(d);
    return e;
}

// Every tensor of a unit in container order.
template <class W, class F>
void for_each_tensor(W& w, F&& f) {
    auto attn = [&](auto& a) {
        f(a.wq);
        f(a.wk);
        f(a.wv);
        f(a.wo);
    };
    auto enc = [&](auto& e) {
        attn(e.attn);
        f(e.norm1_gain);
        f(e.norm1_bias);
        f(e.norm2_gain);
        f(e.norm2_bias);
        f(e.ffn_w1);
        f(e.ffn_b1);
        f(e.ffn_w2);
        f(e.ffn_b2);
    };
    enc(w.enc_3d);
    enc(w.enc_2d);
    attn(w.cross1);
    attn(w.cross2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw ValidationError("weights file truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& out, double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu);
    out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw ValidationError("weights file truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

// Shape template for reading: a zero unit of width d.
MMCAWeights shaped_unit(int d) {
    MMCAWeights w;
    w.d = d;
    auto attn = [&](AttentionWeights& a) {
        a.wq = a.wk = a.wv = a.wo = Eigen::MatrixXd::Zero(d, d);
    };
    auto enc = [&](EncoderWeights& e) {
        attn(e.attn);
        e.norm1_gain = e.norm1_bias = e.norm2_gain = e.norm2_bias = Eigen::RowVectorXd::Zero(d);
        e.ffn_w1 = Eigen::MatrixXd::Zero(d, 4 * d);
        e.ffn_b1 = Eigen::RowVectorXd::Zero(4 * d);
        e.ffn_w2 = Eigen::MatrixXd::Zero(4 * d, d);
        e.ffn_b2 = Eigen::RowVectorXd::Zero(d);
    };
    enc(w.enc_3d);
    enc(w.enc_2d);
    attn(w.cross1);
    attn(w.cross2);
    return w;
}

}  // namespace

void MMCAWeights::validate() const {
    if (d < 1) throw ValidationError("MMCA width must be at least 1");
    const MMCAWeights ref = shaped_unit(d);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
    for_each_tensor(ref, [&](const auto& t) { shapes.emplace_back(t.rows(), t.cols()); });
    size_t k = 0;
    for_each_tensor(*this, [&](const auto& t) {
        if (t.rows() != shapes[k].first || t.cols() != shapes[k].second) {
            throw ValidationError(fmt::format("MMCA tensor {} has shape {}x{}, expected {}x{}", k, t.rows(), t.cols(),
                                              shapes[k].first, shapes[k].second));
        }
        if (!t.allFinite()) throw ValidationError(fmt::format("MMCA tensor {} is not finite", k));
        ++k;
    });
}

MMCAWeights init_weights(int d, std::uint64_t seed) {
    if (d < 1) throw ValidationError("MMCA width must be at least 1");
    NormalDraw r(seed, 1.0 / std::sqrt(static_cast<double>(d)));
    MMCAWeights w;
    w.d = d;
    w.enc_3d = draw_encoder(r, d);
    w.enc_2d = draw_encoder(r, d);
    w.cross1 = draw_attention(r, d);
    w.cross2 = draw_attention(r, d);
    return w;
}

TummWeights init_tumm_weights(int d, std::uint64_t seed) {
    // Independent streams per unit, derived from the one seed.
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    std::array<std::uint64_t, 3> sub{};
    std::array<std::uint32_t, 6> raw{};
    seq.generate(raw.begin(), raw.end());
    for (size_t i = 0; i < 3; ++i) sub[i] = (static_cast<std::uint64_t>(raw[2 * i]) << 32) | raw[2 * i + 1];
    return {init_weights(d, sub[0]), init_weights(d, sub[1]), init_weights(d, sub[2])};
}

void zero_residual_outputs(MMCAWeights& w) {
    for (EncoderWeights* e : {&w.enc_3d, &w.enc_2d}) {
        e->attn.wo.setZero();
        e->ffn_w2.setZero();
        e->ffn_b2.setZero();
    }
    w.cross1.wo.setZero();
    w.cross2.wo.setZero();
}

void write_weights(std::ostream& out, const std::vector<MMCAWeights>& units) {
    if (units.empty()) throw ValidationError("no weight units to write");
    const int d = units.front().d;
    for (const auto& u : units) {
        u.validate();
        if (u.d != d) throw ValidationError("weight units differ in width");
    }
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(d));
    put_u32(out, static_cast<std::uint32_t>(units.size()));
    for (const auto& u : units) {
        for_each_tensor(u, [&](const auto& t) {
            for (Eigen::Index i = 0; i < t.rows(); ++i) {
                for (Eigen::Index j = 0; j < t.cols(); ++j) put_f64(out, t(i, j));
            }
        });
    }
    if (!out) throw Error("failed writing weights");
}

std::vector<MMCAWeights> read_weights(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw ValidationError("not an MMCA weights file");
    const std::uint32_t version = get_u32(in);
    if (version != kVersion) throw ValidationError(fmt::format("unsupported weights version {}", version));
    const std::uint32_t d = get_u32(in);
    const std::uint32_t count = get_u32(in);
    if (d < 1 || d > 4096) throw ValidationError(fmt::format("weights width {} out of range", d));
    if (count < 1 || count > 16) throw ValidationError(fmt::format("weights unit count {} out of range", count));
    std::vector<MMCAWeights> units;
    for (std::uint32_t u = 0; u < count; ++u) {
        MMCAWeights w = shaped_unit(static_cast<int>(d));
        for_each_tensor(w, [&](auto& t) {
            for (Eigen::Index i = 0; i < t.rows(); ++i) {
                for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = get_f64(in);
            }
        });
        w.validate();
        units.push_back(std::move(w));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("trailing bytes after weights");
    return units;
}

}  // namespace motionkit::fusion
