#pragma once

#include "rfm/core.hpp"
#include "rfm/flows.hpp"
#include "rfm/net.hpp"
#include "rfm/parallel.hpp"

#include <functional>
#include <sstream>
#include <vector>

namespace rfm {

struct TrainConfig {
    int batch_size = 512;
    long total_iters = 200'000;
    double lr_init = 3e-4;
    double lr_decay = 0.75;
    long decay_every = 10'000;
    long warmup_iters = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double uncond_drop_prob = 0.1;
    double divergence_limit = 1e6;
    long checkpoint_every = 0;  ///< 0 writes only the final checkpoint
    unsigned threads = 0;       ///< 0 = all hardware threads
    std::uint64_t seed = 0;

    void validate() const
    {
        if (batch_size <= 0) throw ConfigError("train: batch_size must be positive");
        if (total_iters < 0) throw ConfigError("train: total_iters must be nonnegative");
        if (!(lr_init > 0.0) || !(lr_decay > 0.0) || decay_every <= 0) {
            throw ConfigError("train: learning-rate schedule parameters must be positive");
        }
        if (warmup_iters < 0 || checkpoint_every < 0) throw ConfigError("train: negative interval");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
            throw ConfigError("train: invalid Adam hyperparameters");
        }
        if (!(uncond_drop_prob >= 0.0 && uncond_drop_prob <= 1.0)) {
            throw ConfigError("train: uncond_drop_prob must lie in [0, 1]");
        }
    }
};

/// Staircase decay: lr_init * lr_decay^floor(iter / decay_every), with optional linear warm-up.
inline double lr_at(long iter, const TrainConfig& cfg)
{
    double lr = cfg.lr_init * std::pow(cfg.lr_decay, static_cast<double>(iter / cfg.decay_every));
    if (cfg.warmup_iters > 0 && iter < cfg.warmup_iters) {
        lr *= static_cast<double>(iter + 1) / static_cast<double>(cfg.warmup_iters);
    }
    return lr;
}

struct AdamState {
    Vec m;
    Vec v;
    long step = 0;

    explicit AdamState(Eigen::Index n) : m(Vec::Zero(n)), v(Vec::Zero(n)) {}
};

inline void adam_step(Vec& params, const Vec& grads, AdamState& state, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8)
{
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw InvalidArgument("adam_step: layout mismatch");
    }
    ++state.step;
    state.m = beta1 * state.m + (1.0 - beta1) * grads;
    state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseProduct(grads);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

/// The regression problem drawn for one batch; kept so the loss can be recomputed independently.
struct BatchRecord {
    Mat xt;                  ///< d x B path points
    Vec t;                   ///< B times
    Mat target;              ///< d x B conditional velocities
    std::vector<int> slots;  ///< class slots (empty for unconditional nets)
};

struct BatchLoss {
    double loss = 0.0;
    Vec grad;
    BatchRecord batch;
};

struct BatchOptions {
    double uncond_drop_prob = 0.1;
    unsigned threads = 1;
    int chunk = 64;
};

/// Draws the batch from `rng`, in element order: t ~ U[0,1], x0 ~ prior,
/// (x1, label) ~ data, then the label-drop coin for conditional nets.
inline BatchRecord draw_crfm_batch(const VelocityNet& net, const ConditionalFlow& flow, const Prior& prior,
                                   const DataDistribution& data, int batch, Rng& rng, double uncond_drop_prob)
{
    const int d = net.dim();
    require_dim(flow.domain().dim(), d, "crfm batch: flow domain");
    require_dim(prior.dim(), d, "crfm batch: prior");
    require_dim(data.dim(), d, "crfm batch: data");
    if (net.conditional() && data.num_labels() == 0) {
        throw ConfigError("crfm batch: conditional net needs labeled data");
    }
    if (net.conditional() && data.num_labels() > net.config().num_classes) {
        throw ConfigError("crfm batch: data has more labels than the net has classes");
    }
    BatchRecord rec{Mat(d, batch), Vec(batch), Mat(d, batch), {}};
    if (net.conditional()) rec.slots.resize(static_cast<std::size_t>(batch));
    for (int j = 0; j < batch; ++j) {
        const double t = uniform01(rng);
        const Point x0 = prior.sample(rng);
        const LabeledPoint x1 = data.sample(rng);
        rec.t(j) = t;
        rec.xt.col(j) = flow.flow_at(x0, x1.x, t);
        rec.target.col(j) = flow.target_velocity(x0, x1.x, t);
        if (net.conditional()) {
            const bool drop = uniform01(rng) < uncond_drop_prob;
            rec.slots[static_cast<std::size_t>(j)] = drop ? net.empty_token() : *x1.label;
        }
    }
    return rec;
}

/// Mean over the batch of |v(x_t, t) - u|^2 and its exact parameter gradient.
inline BatchLoss crfm_loss_on(const VelocityNet& net, BatchRecord batch, unsigned threads = 1, int chunk = 64)
{
    const Eigen::Index n = batch.t.size();
    const std::size_t n_chunks = static_cast<std::size_t>((n + chunk - 1) / chunk);
    std::vector<double> partial_loss(n_chunks, 0.0);
    std::vector<Vec> partial_grad(n_chunks);
    parallel_for(n_chunks, threads, [&](std::size_t c) {
        const Eigen::Index lo = static_cast<Eigen::Index>(c) * chunk;
        const Eigen::Index m = std::min<Eigen::Index>(chunk, n - lo);
        const Mat x = batch.xt.middleCols(lo, m);
        const Vec t = batch.t.segment(lo, m);
        std::span<const int> slots;
        if (!batch.slots.empty()) slots = std::span<const int>(batch.slots).subspan(static_cast<std::size_t>(lo),
                                                                                    static_cast<std::size_t>(m));
        const Mat residual = net.forward_batch(x, t, slots) - batch.target.middleCols(lo, m);
        partial_loss[c] = residual.squaredNorm();
        partial_grad[c] = Vec::Zero(static_cast<Eigen::Index>(net.num_params()));
        net.backward_batch(x, t, slots, (2.0 / static_cast<double>(n)) * residual, partial_grad[c]);
    });
    BatchLoss out;
    out.grad = Vec::Zero(static_cast<Eigen::Index>(net.num_params()));
    double total = 0.0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        total += partial_loss[c];
        out.grad += partial_grad[c];
    }
    out.loss = total / static_cast<double>(n);
    out.batch = std::move(batch);
    return out;
}

inline BatchLoss crfm_batch_loss(const VelocityNet& net, const ConditionalFlow& flow, const Prior& prior,
                                 const DataDistribution& data, int batch, Rng& rng,
                                 const BatchOptions& opts = {})
{
    if (batch <= 0) throw InvalidArgument("crfm_batch_loss: batch must be positive");
    return crfm_loss_on(net, draw_crfm_batch(net, flow, prior, data, batch, rng, opts.uncond_drop_prob),
                        opts.threads, opts.chunk);
}

struct LossRecord {
    long iter = 0;
    double loss = 0.0;
    double lr = 0.0;
};

class DivergenceError : public NumericalError {
public:
    DivergenceError(long iter, double loss)
        : NumericalError(describe(iter, loss)), iter_(iter), loss_(loss)
    {
    }
    long iter() const { return iter_; }
    double loss() const { return loss_; }

private:
    static std::string describe(long iter, double loss)
    {
        std::ostringstream os;
        os << "training diverged at iteration " << iter << " (loss " << loss << ")";
        return os.str();
    }
    long iter_;
    double loss_;
};

struct TrainCallbacks {
    /// Called every checkpoint_every iterations with the number of completed iterations.
    std::function<void(long, const VelocityNet&)> on_checkpoint;
    std::function<void(const LossRecord&)> on_iter;
};

/// Adam on the batch objective. Iteration i draws its batch from stream (seed, i),
/// so the trajectory does not depend on the thread count.
inline std::vector<LossRecord> train(const TrainConfig& cfg, VelocityNet& net, const ConditionalFlow& flow,
                                     const Prior& prior, const DataDistribution& data,
                                     const TrainCallbacks& callbacks = {})
{
    cfg.validate();
    AdamState adam(static_cast<Eigen::Index>(net.num_params()));
    std::vector<LossRecord> trace;
    trace.reserve(static_cast<std::size_t>(cfg.total_iters));
    const BatchOptions opts{cfg.uncond_drop_prob, cfg.threads, 64};
    for (long iter = 0; iter < cfg.total_iters; ++iter) {
        Rng rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(iter));
        BatchLoss step = crfm_batch_loss(net, flow, prior, data, cfg.batch_size, rng, opts);
        if (!std::isfinite(step.loss) || step.loss > cfg.divergence_limit || !step.grad.allFinite()) {
            throw DivergenceError(iter, step.loss);
        }
        const double lr = lr_at(iter, cfg);
        adam_step(net.params(), step.grad, adam, lr, cfg.beta1, cfg.beta2, cfg.eps);
        trace.push_back({iter, step.loss, lr});
        if (callbacks.on_iter) callbacks.on_iter(trace.back());
        if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 && callbacks.on_checkpoint) {
            callbacks.on_checkpoint(iter + 1, net);
        }
    }
    return trace;
}

}  // namespace rfm
