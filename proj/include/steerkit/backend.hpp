#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>

#include <Eigen/Dense>

#include "steerkit/common.hpp"

namespace steerkit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Intervention on the residual stream: `fn` is applied in place to the d x T
// matrix of residuals emitted by block `layer` (one column per position,
// column 0 is the BOS slot), before downstream blocks consume it.
struct ResidualHook {
    int layer = 0;
    std::function<void(MatrixXd&)> fn;
};

// One full forward pass. `resid` holds the (possibly hooked) residual stream
// at the requested layer; `logits` column p scores the token following input
// position p, so column 0 predicts the first prompt token (after BOS) and the
// last column predicts the continuation of the whole sequence.
struct ForwardResult {
    MatrixXd resid;   // d x (n+1)
    MatrixXd logits;  // V x (n+1)
};

// Read-only view of a relaxed forward pass that loss functions are written
// against. `resid[l]` is the residual stream after block l; `embed` is the
// stream before block 0.
struct TraceView {
    const MatrixXd* embed = nullptr;
    const std::vector<MatrixXd>* resid = nullptr;
    const MatrixXd* logits = nullptr;
};

// Gradient seeds produced by a loss function: dLoss w.r.t. the surfaces it
// read. Key -1 seeds the embedding output; keys 0..L-1 seed residuals.
struct LossSeeds {
    MatrixXd d_logits;  // empty when unused
    std::map<int, MatrixXd> d_resid;
};

// Scalar loss over a relaxed forward trace. `eval` returns the loss value;
// when `seeds` is non-null it must also fill the analytic gradients. The
// finite-difference oracle only ever calls the value path, which keeps the
// two routes independent.
class RelaxedLoss {
  public:
    virtual ~RelaxedLoss() = default;
    virtual double eval(const TraceView& trace, LossSeeds* seeds) const = 0;
};

class ModelBackend {
  public:
    virtual ~ModelBackend() = default;

    virtual int vocab_size() const = 0;
    virtual int d_model() const = 0;
    virtual int num_layers() const = 0;
    virtual int context_length() const = 0;
    virtual TokenId bos_token() const = 0;

    // Forward on BOS + tokens. Throws LayerOutOfRange / EmptySequence /
    // ContextOverflow on contract violations.
    virtual ForwardResult forward(const TokenSequence& tokens, int resid_layer,
                                  const ResidualHook* hook = nullptr) const = 0;

    // d loss / d one-hot(tokens), an n x V matrix evaluated at the hard
    // one-hot point. Backends without gradient support may throw.
    virtual MatrixXd onehot_gradient(const TokenSequence& tokens, const RelaxedLoss& loss) const {
        (void)tokens;
        (void)loss;
        throw Error("onehot_gradient: not supported by this backend");
    }

    // --- derived queries -----------------------------------------------

    void check_tokens(const TokenSequence& tokens) const {
        if (tokens.empty()) throw EmptySequence();
        const int v = vocab_size();
        for (TokenId t : tokens)
            if (t < 0 || t >= v)
                throw Error("token id out of range: " + std::to_string(t));
        if (static_cast<int>(tokens.size()) + 1 > context_length())
            throw ContextOverflow(std::to_string(tokens.size() + 1) + " positions > context " +
                                  std::to_string(context_length()));
    }

    // Pooled residual activation e(t) at `layer`. BOS is excluded from the
    // mean pool; last_token is the final prompt position.
    VectorXd activation(const TokenSequence& tokens, int layer, Pooling pooling,
                        const ResidualHook* hook = nullptr) const {
        ForwardResult fr = forward(tokens, layer, hook);
        return pool(fr.resid, pooling);
    }

    static VectorXd pool(const MatrixXd& resid, Pooling pooling) {
        const Eigen::Index cols = resid.cols();
        if (pooling == Pooling::last_token) return resid.col(cols - 1);
        return resid.rightCols(cols - 1).rowwise().mean();
    }

    // Per-token self cross-entropies: entry i = -log p(t_{i+1} | BOS, t_1..t_i).
    VectorXd token_cross_entropies(const TokenSequence& tokens,
                                   const ResidualHook* hook = nullptr) const {
        ForwardResult fr = forward(tokens, 0, hook);
        return cross_entropies_from_logits(fr.logits, tokens);
    }

    static VectorXd cross_entropies_from_logits(const MatrixXd& logits,
                                                const TokenSequence& tokens) {
        const int n = static_cast<int>(tokens.size());
        VectorXd ce(n);
        for (int i = 0; i < n; ++i) {
            const auto col = logits.col(i);
            const double m = col.maxCoeff();
            const double lse = std::log((col.array() - m).exp().sum()) + m;
            ce(i) = lse - col(tokens[static_cast<size_t>(i)]);
        }
        return ce;
    }

    // Batched forms; results must match the item-wise queries element-exact.
    std::vector<VectorXd> activation_batch(const std::vector<TokenSequence>& batch, int layer,
                                           Pooling pooling,
                                           const ResidualHook* hook = nullptr) const {
        std::vector<VectorXd> out;
        out.reserve(batch.size());
        for (const auto& t : batch) out.push_back(activation(t, layer, pooling, hook));
        return out;
    }
    std::vector<VectorXd> token_cross_entropies_batch(const std::vector<TokenSequence>& batch,
                                                      const ResidualHook* hook = nullptr) const {
        std::vector<VectorXd> out;
        out.reserve(batch.size());
        for (const auto& t : batch) out.push_back(token_cross_entropies(t, hook));
        return out;
    }
};

// ---------------------------------------------------------------------------
// Loss heads used by the prompt optimizer and gradient tests.
// ---------------------------------------------------------------------------

namespace detail {

inline VectorXd pooled_from_trace(const TraceView& trace, int layer, Pooling pooling) {
    const MatrixXd& resid = trace.resid->at(static_cast<size_t>(layer));
    return ModelBackend::pool(resid, pooling);
}

} // namespace detail

// Persona objective f(t) = -sign * <e(t), v_hat> / ||e(t)||, read from the
// pooled residual at `layer`.
class PersonaCosineLoss : public RelaxedLoss {
  public:
    PersonaCosineLoss(VectorXd unit_direction, double sign, int layer, Pooling pooling)
        : v_(std::move(unit_direction)), sign_(sign), layer_(layer), pooling_(pooling) {}

    double eval(const TraceView& trace, LossSeeds* seeds) const override {
        const VectorXd e = detail::pooled_from_trace(trace, layer_, pooling_);
        const double norm = e.norm();
        if (norm < 1e-12) throw DegenerateActivation();
        const VectorXd ehat = e / norm;
        const double cosim = ehat.dot(v_);
        if (seeds) {
            // d/d e of <e,v>/||e|| = (v - ehat * cos) / ||e||
            VectorXd de = (-sign_) * (v_ - ehat * cosim) / norm;
            const MatrixXd& resid = trace.resid->at(static_cast<size_t>(layer_));
            MatrixXd d = MatrixXd::Zero(resid.rows(), resid.cols());
            if (pooling_ == Pooling::last_token) {
                d.col(d.cols() - 1) = de;
            } else {
                const double inv = 1.0 / static_cast<double>(d.cols() - 1);
                for (Eigen::Index c = 1; c < d.cols(); ++c) d.col(c) = de * inv;
            }
            auto it = seeds->d_resid.find(layer_);
            if (it == seeds->d_resid.end())
                seeds->d_resid.emplace(layer_, std::move(d));
            else
                it->second += d;
        }
        return -sign_ * cosim;
    }

  private:
    VectorXd v_;
    double sign_;
    int layer_;
    Pooling pooling_;
};

// Scaled mean self cross-entropy: scale * (1/n) * sum_i H_i. The token
// targets stay hard; only the input one-hots are relaxed.
class FluencyLoss : public RelaxedLoss {
  public:
    FluencyLoss(TokenSequence tokens, double scale)
        : tokens_(std::move(tokens)), scale_(scale) {}

    double eval(const TraceView& trace, LossSeeds* seeds) const override {
        const MatrixXd& logits = *trace.logits;
        const int n = static_cast<int>(tokens_.size());
        double total = 0.0;
        if (seeds && seeds->d_logits.size() == 0)
            seeds->d_logits = MatrixXd::Zero(logits.rows(), logits.cols());
        const double w = scale_ / static_cast<double>(n);
        for (int i = 0; i < n; ++i) {
            const auto col = logits.col(i);
            const double m = col.maxCoeff();
            VectorXd p = (col.array() - m).exp();
            const double z = p.sum();
            const TokenId target = tokens_[static_cast<size_t>(i)];
            total += std::log(z) + m - col(target);
            if (seeds) {
                p /= z;
                p(target) -= 1.0;
                seeds->d_logits.col(i) += w * p;
            }
        }
        return w * total;
    }

  private:
    TokenSequence tokens_;
    double scale_;
};

// Weighted sum of loss terms sharing one trace.
class CompositeLoss : public RelaxedLoss {
  public:
    void add(std::shared_ptr<const RelaxedLoss> term) { terms_.push_back(std::move(term)); }

    double eval(const TraceView& trace, LossSeeds* seeds) const override {
        double total = 0.0;
        for (const auto& t : terms_) total += t->eval(trace, seeds);
        return total;
    }

  private:
    std::vector<std::shared_ptr<const RelaxedLoss>> terms_;
};

// ---------------------------------------------------------------------------
// Option scoring: log-likelihood of each candidate continuation given a
// context, used for deterministic multiple-choice evaluation.
// ---------------------------------------------------------------------------

inline VectorXd option_logprobs(const ModelBackend& backend, const TokenSequence& context,
                                const std::vector<TokenSequence>& options,
                                const ResidualHook* hook = nullptr) {
    VectorXd scores(static_cast<Eigen::Index>(options.size()));
    bool all_single = true;
    for (const auto& o : options) {
        if (o.empty()) throw Error("option continuation must be nonempty");
        if (o.size() != 1) all_single = false;
    }
    if (all_single) {
        // One forward: compare next-token log-probs at the context boundary.
        ForwardResult fr = backend.forward(context, 0, hook);
        const auto col = fr.logits.col(fr.logits.cols() - 1);
        const double m = col.maxCoeff();
        const double lse = std::log((col.array() - m).exp().sum()) + m;
        for (size_t k = 0; k < options.size(); ++k)
            scores(static_cast<Eigen::Index>(k)) = col(options[k][0]) - lse;
        return scores;
    }
    for (size_t k = 0; k < options.size(); ++k) {
        TokenSequence full = context;
        full.insert(full.end(), options[k].begin(), options[k].end());
        VectorXd ce = backend.token_cross_entropies(full, hook);
        double lp = 0.0;
        for (size_t i = context.size(); i < full.size(); ++i)
            lp -= ce(static_cast<Eigen::Index>(i));
        scores(static_cast<Eigen::Index>(k)) = lp;
    }
    return scores;
}

} // namespace steerkit
