#pragma once

#include "rfm/core.hpp"

#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace rfm {

struct NetConfig {
    int input_dim = 2;
    int hidden_width = 512;
    int num_layers = 6;
    int time_embed_dim = 512;
    int num_classes = 0;  ///< 0 disables class conditioning
    std::uint64_t seed = 0;

    void validate() const
    {
        if (input_dim <= 0 || hidden_width <= 0 || num_layers < 1 || time_embed_dim <= 0) {
            throw ConfigError("net: dimensions must be positive and num_layers >= 1");
        }
        if (time_embed_dim % 2 != 0) throw ConfigError("net: time_embed_dim must be even");
        if (num_classes < 0) throw ConfigError("net: num_classes must be nonnegative");
    }

    bool operator==(const NetConfig&) const = default;
};

/// Sinusoidal embedding: first half sin(t w_i), second half cos(t w_i),
/// w_i = 10000^(-2i/dim).
inline Vec time_embedding(double t, int dim)
{
    if (dim <= 0 || dim % 2 != 0) throw InvalidArgument("time_embedding: dim must be positive and even");
    const int half = dim / 2;
    Vec e(dim);
    for (int i = 0; i < half; ++i) {
        const double w = std::pow(10000.0, -2.0 * i / dim);
        e(i) = std::sin(t * w);
        e(half + i) = std::cos(t * w);
    }
    return e;
}

namespace detail {

inline constexpr double kInvSqrt2 = 0.7071067811865476;

inline double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z * kInvSqrt2)); }

inline double gelu_grad(double z)
{
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return 0.5 * (1.0 + std::erf(z * kInvSqrt2)) + z * inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

}  // namespace detail

/// Offsets of each tensor inside the flat parameter vector.
///
/// Order: input lift (W, b); per block (W1, b1, time proj, [class proj], W2, b2);
/// output (W, b); [class table]. Matrices are column-major. The class table has
/// num_classes + 1 columns, the last being the empty token.
struct NetLayout {
    struct Block {
        std::size_t w1, b1, wt, wc, w2, b2;
    };
    std::size_t in_w = 0, in_b = 0;
    std::vector<Block> blocks;
    std::size_t out_w = 0, out_b = 0;
    std::size_t table = 0;
    std::size_t total = 0;

    explicit NetLayout(const NetConfig& c)
    {
        c.validate();
        const std::size_t d = static_cast<std::size_t>(c.input_dim);
        const std::size_t w = static_cast<std::size_t>(c.hidden_width);
        const std::size_t e = static_cast<std::size_t>(c.time_embed_dim);
        const bool cond = c.num_classes > 0;
        std::size_t off = 0;
        auto take = [&off](std::size_t n) {
            const std::size_t at = off;
            off += n;
            return at;
        };
        in_w = take(w * d);
        in_b = take(w);
        for (int l = 0; l < c.num_layers; ++l) {
            Block b{};
            b.w1 = take(w * w);
            b.b1 = take(w);
            b.wt = take(w * e);
            b.wc = cond ? take(w * e) : off;
            b.w2 = take(w * w);
            b.b2 = take(w);
            blocks.push_back(b);
        }
        out_w = take(d * w);
        out_b = take(d);
        table = cond ? take(e * static_cast<std::size_t>(c.num_classes + 1)) : off;
        total = off;
    }
};

/// Closed-form parameter count, independent of NetLayout.
inline std::size_t param_count(const NetConfig& c)
{
    c.validate();
    const std::size_t d = static_cast<std::size_t>(c.input_dim);
    const std::size_t w = static_cast<std::size_t>(c.hidden_width);
    const std::size_t e = static_cast<std::size_t>(c.time_embed_dim);
    const std::size_t l = static_cast<std::size_t>(c.num_layers);
    const std::size_t k = static_cast<std::size_t>(c.num_classes);
    const std::size_t per_block = 2 * w * w + 2 * w + w * e + (k > 0 ? w * e : 0);
    return (w * d + w) + l * per_block + (d * w + d) + (k > 0 ? e * (k + 1) : 0);
}

/// Residual MLP velocity model v(x, t[, c]).
///
///   h_0     = W_in x + b_in
///   z_l     = W1_l h_l + b1_l + T_l emb(t) [+ C_l table(c)]
///   h_{l+1} = h_l + W2_l gelu(z_l) + b2_l
///   v       = W_out h_L + b_out
///
/// Batched entry points take points as columns.
class VelocityNet {
public:
    /// Randomly initialised from config.seed: weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0.
    explicit VelocityNet(NetConfig config) : config_(config), layout_(config_)
    {
        params_ = Vec::Zero(static_cast<Eigen::Index>(layout_.total));
        Rng rng = stream_rng(config_.seed, 0x6e6574ULL);
        const int d = config_.input_dim;
        const int w = config_.hidden_width;
        const int e = config_.time_embed_dim;
        init_uniform(layout_.in_w, static_cast<std::size_t>(w) * d, d, rng);
        for (const NetLayout::Block& b : layout_.blocks) {
            init_uniform(b.w1, static_cast<std::size_t>(w) * w, w, rng);
            init_uniform(b.wt, static_cast<std::size_t>(w) * e, e, rng);
            if (conditional()) init_uniform(b.wc, static_cast<std::size_t>(w) * e, e, rng);
            init_uniform(b.w2, static_cast<std::size_t>(w) * w, w, rng);
        }
        init_uniform(layout_.out_w, static_cast<std::size_t>(d) * w, w, rng);
        if (conditional()) {
            init_uniform(layout_.table, static_cast<std::size_t>(e) * (config_.num_classes + 1), 1, rng);
        }
    }

    VelocityNet(NetConfig config, Vec params) : config_(config), layout_(config_), params_(std::move(params))
    {
        if (static_cast<std::size_t>(params_.size()) != layout_.total) {
            throw InvalidArgument("VelocityNet: parameter vector length does not match config");
        }
    }

    const NetConfig& config() const { return config_; }
    const NetLayout& layout() const { return layout_; }
    const Vec& params() const { return params_; }
    Vec& params() { return params_; }
    std::size_t num_params() const { return layout_.total; }
    int dim() const { return config_.input_dim; }
    bool conditional() const { return config_.num_classes > 0; }
    int empty_token() const { return config_.num_classes; }

    /// Class column used for an optional label: absent selects the empty token.
    int class_slot(std::optional<int> c) const
    {
        if (!conditional()) {
            if (c) throw InvalidArgument("VelocityNet: class index given to an unconditional net");
            return 0;
        }
        if (!c) return empty_token();
        if (*c < 0 || *c > empty_token()) throw InvalidArgument("VelocityNet: class index out of range");
        return *c;
    }

    Vec forward(const Point& x, double t, std::optional<int> c = std::nullopt) const
    {
        require_dim(x.size(), dim(), "forward");
        const int slot = class_slot(c);
        return forward_batch(Mat(x), Vec::Constant(1, t), std::span<const int>(&slot, 1)).col(0);
    }

    /// Accumulates d(upstream . forward)/d(params) into grad.
    void backward(const Point& x, double t, std::optional<int> c, const Vec& upstream, Vec& grad) const
    {
        require_dim(x.size(), dim(), "backward");
        const int slot = class_slot(c);
        backward_batch(Mat(x), Vec::Constant(1, t), std::span<const int>(&slot, 1), Mat(upstream), grad);
    }

    /// Per-column times and class slots (slots already resolved; empty span = unconditional).
    Mat forward_batch(const Mat& x, const Vec& t, std::span<const int> slots) const
    {
        Tape tape;
        run(x, t, slots, tape, false);
        return tape.out;
    }

    /// Shared time and class for every column; the time/class projection is computed once.
    Mat forward_shared(const Mat& x, double t, std::optional<int> c = std::nullopt) const
    {
        require_dim(x.rows(), dim(), "forward_shared");
        if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("forward: t outside [0, 1]");
        const int slot = class_slot(c);
        const auto& cfg = config_;
        const Eigen::Index n = x.cols();
        const Vec emb = time_embedding(t, cfg.time_embed_dim);
        Mat h = (map(layout_.in_w, cfg.hidden_width, cfg.input_dim) * x).colwise() +
                vmap(layout_.in_b, cfg.hidden_width);
        Mat z(cfg.hidden_width, n);
        for (const NetLayout::Block& b : layout_.blocks) {
            Vec inject = vmap(b.b1, cfg.hidden_width) + map(b.wt, cfg.hidden_width, cfg.time_embed_dim) * emb;
            if (conditional()) inject += map(b.wc, cfg.hidden_width, cfg.time_embed_dim) * table_col(slot);
            z.noalias() = map(b.w1, cfg.hidden_width, cfg.hidden_width) * h;
            z.colwise() += inject;
            z = z.unaryExpr(&detail::gelu);
            h.noalias() += map(b.w2, cfg.hidden_width, cfg.hidden_width) * z;
            h.colwise() += vmap(b.b2, cfg.hidden_width);
        }
        Mat out = map(layout_.out_w, cfg.input_dim, cfg.hidden_width) * h;
        out.colwise() += vmap(layout_.out_b, cfg.input_dim);
        return out;
    }

    /// Accumulates sum_j upstream.col(j) . forward(x.col(j)) gradients into grad.
    void backward_batch(const Mat& x, const Vec& t, std::span<const int> slots, const Mat& upstream,
                        Vec& grad) const
    {
        if (static_cast<std::size_t>(grad.size()) != layout_.total) {
            throw InvalidArgument("backward: gradient buffer layout mismatch");
        }
        require_dim(upstream.rows(), dim(), "backward upstream");
        require_dim(upstream.cols(), x.cols(), "backward upstream columns");
        Tape tape;
        run(x, t, slots, tape, true);

        const auto& cfg = config_;
        const int w = cfg.hidden_width;
        const int e = cfg.time_embed_dim;
        const int d = cfg.input_dim;

        gmap(grad, layout_.out_w, d, w).noalias() += upstream * tape.h.back().transpose();
        gvmap(grad, layout_.out_b, d) += upstream.rowwise().sum();
        Mat dh = map(layout_.out_w, d, w).transpose() * upstream;
        Mat dz(w, x.cols());
        for (std::size_t l = layout_.blocks.size(); l-- > 0;) {
            const NetLayout::Block& b = layout_.blocks[l];
            gmap(grad, b.w2, w, w).noalias() += dh * tape.a[l].transpose();
            gvmap(grad, b.b2, w) += dh.rowwise().sum();
            dz.noalias() = map(b.w2, w, w).transpose() * dh;
            dz.array() *= tape.z[l].unaryExpr(&detail::gelu_grad).array();
            gmap(grad, b.w1, w, w).noalias() += dz * tape.h[l].transpose();
            gvmap(grad, b.b1, w) += dz.rowwise().sum();
            gmap(grad, b.wt, w, e).noalias() += dz * tape.emb.transpose();
            if (conditional()) {
                gmap(grad, b.wc, w, e).noalias() += dz * tape.cls.transpose();
                const Mat dcls = map(b.wc, w, e).transpose() * dz;
                for (Eigen::Index j = 0; j < x.cols(); ++j) {
                    gmap(grad, layout_.table, e, cfg.num_classes + 1).col(slots[static_cast<std::size_t>(j)]) +=
                        dcls.col(j);
                }
            }
            dh.noalias() += map(b.w1, w, w).transpose() * dz;
        }
        gmap(grad, layout_.in_w, w, d).noalias() += dh * x.transpose();
        gvmap(grad, layout_.in_b, w) += dh.rowwise().sum();
    }

private:
    struct Tape {
        Mat emb;             // e x n
        Mat cls;             // e x n (conditional only)
        std::vector<Mat> h;  // L + 1 residual states
        std::vector<Mat> z;  // L pre-activations
        std::vector<Mat> a;  // L activations
        Mat out;
    };

    using CMap = Eigen::Map<const Mat>;
    using CVMap = Eigen::Map<const Vec>;

    CMap map(std::size_t off, int rows, int cols) const { return CMap(params_.data() + off, rows, cols); }
    CVMap vmap(std::size_t off, int n) const { return CVMap(params_.data() + off, n); }
    static Eigen::Map<Mat> gmap(Vec& g, std::size_t off, int rows, int cols)
    {
        return Eigen::Map<Mat>(g.data() + off, rows, cols);
    }
    static Eigen::Map<Vec> gvmap(Vec& g, std::size_t off, int n) { return Eigen::Map<Vec>(g.data() + off, n); }

    Eigen::Map<const Vec> table_col(int slot) const
    {
        const std::size_t e = static_cast<std::size_t>(config_.time_embed_dim);
        return Eigen::Map<const Vec>(params_.data() + layout_.table + e * static_cast<std::size_t>(slot),
                                     config_.time_embed_dim);
    }

    void init_uniform(std::size_t off, std::size_t n, int fan_in, Rng& rng)
    {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t i = 0; i < n; ++i) params_(static_cast<Eigen::Index>(off + i)) = u(rng);
    }

    void run(const Mat& x, const Vec& t, std::span<const int> slots, Tape& tape, bool keep) const
    {
        const auto& cfg = config_;
        const Eigen::Index n = x.cols();
        require_dim(x.rows(), dim(), "forward");
        require_dim(t.size(), n, "forward times");
        if (conditional()) {
            if (static_cast<Eigen::Index>(slots.size()) != n) {
                throw InvalidArgument("forward: one class slot per column is required");
            }
        }
        tape.emb.resize(cfg.time_embed_dim, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!(t(j) >= 0.0 && t(j) <= 1.0)) throw InvalidArgument("forward: t outside [0, 1]");
            tape.emb.col(j) = time_embedding(t(j), cfg.time_embed_dim);
        }
        if (conditional()) {
            tape.cls.resize(cfg.time_embed_dim, n);
            for (Eigen::Index j = 0; j < n; ++j) {
                const int s = slots[static_cast<std::size_t>(j)];
                if (s < 0 || s > empty_token()) throw InvalidArgument("forward: class index out of range");
                tape.cls.col(j) = table_col(s);
            }
        }

        const int w = cfg.hidden_width;
        const int e = cfg.time_embed_dim;
        Mat h = (map(layout_.in_w, w, cfg.input_dim) * x).colwise() + vmap(layout_.in_b, w);
        Mat z(w, n);
        if (keep) {
            tape.h.clear();
            tape.z.clear();
            tape.a.clear();
        }
        for (const NetLayout::Block& b : layout_.blocks) {
            z.noalias() = map(b.w1, w, w) * h;
            z.noalias() += map(b.wt, w, e) * tape.emb;
            if (conditional()) z.noalias() += map(b.wc, w, e) * tape.cls;
            z.colwise() += vmap(b.b1, w);
            Mat a = z.unaryExpr(&detail::gelu);
            if (keep) {
                tape.h.push_back(h);
                tape.z.push_back(z);
            }
            h.noalias() += map(b.w2, w, w) * a;
            h.colwise() += vmap(b.b2, w);
            if (keep) tape.a.push_back(std::move(a));
        }
        if (keep) tape.h.push_back(h);
        tape.out = map(layout_.out_w, cfg.input_dim, w) * h;
        tape.out.colwise() += vmap(layout_.out_b, cfg.input_dim);
    }

    NetConfig config_;
    NetLayout layout_;
    Vec params_;
};

}  // namespace rfm
