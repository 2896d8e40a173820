#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "steerkit/backend.hpp"
#include "steerkit/io.hpp"

namespace steerkit {

struct TinyTransformerConfig {
    int layers = 4;
    int heads = 4;
    int d_model = 128;
    int vocab_size = 512;  // overwritten by the actual vocabulary when training
    int context_length = 32;
    int train_steps = 1200;
    int batch_size = 16;
    double learning_rate = 3e-3;
    uint64_t seed = 1;

    void validate() const {
        if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
        if (layers < 1 || heads < 1 || d_model < 1) throw ConfigError("bad model dims");
        if (context_length < 2) throw ConfigError("context_length must be >= 2");
    }

    json to_json() const {
        return json{{"layers", layers},
                    {"heads", heads},
                    {"d_model", d_model},
                    {"vocab_size", vocab_size},
                    {"context_length", context_length},
                    {"train_steps", train_steps},
                    {"batch_size", batch_size},
                    {"learning_rate", learning_rate},
                    {"seed", seed}};
    }
    static TinyTransformerConfig from_json(const json& j) {
        TinyTransformerConfig c;
        c.layers = j.at("layers");
        c.heads = j.at("heads");
        c.d_model = j.at("d_model");
        c.vocab_size = j.at("vocab_size");
        c.context_length = j.at("context_length");
        c.train_steps = j.value("train_steps", c.train_steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.seed = j.value("seed", c.seed);
        return c;
    }
};

namespace detail {

constexpr double kRmsEps = 1e-6;

// Column-wise x / sqrt(mean(x^2) + eps). Returns the per-column inverse norms
// needed by the backward pass.
inline VectorXd rmsnorm_cols(const MatrixXd& x, MatrixXd& y) {
    const double invd = 1.0 / static_cast<double>(x.rows());
    VectorXd inv(x.cols());
    y.resize(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double ms = x.col(c).squaredNorm() * invd + kRmsEps;
        inv(c) = 1.0 / std::sqrt(ms);
        y.col(c) = x.col(c) * inv(c);
    }
    return inv;
}

// dx += backward of rmsnorm given upstream dy.
inline void rmsnorm_backward_cols(const MatrixXd& dy, const MatrixXd& x, const VectorXd& inv,
                                  MatrixXd& dx) {
    const double invd = 1.0 / static_cast<double>(x.rows());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double i1 = inv(c);
        const double coeff = dy.col(c).dot(x.col(c)) * i1 * i1 * i1 * invd;
        dx.col(c) += dy.col(c) * i1 - x.col(c) * coeff;
    }
}

} // namespace detail

// Decoder-only transformer: learned token + position embeddings, pre-norm
// blocks (scale-free RMSNorm, causal multi-head attention, ReLU MLP with 4x
// hidden width, no biases), final RMSNorm, untied LM head. Everything runs in
// double precision so the one-hot gradients admit tight finite-difference
// checks.
class TinyTransformer : public ModelBackend {
  public:
    struct Block {
        MatrixXd wq, wk, wv, wo;  // d x d
        MatrixXd w1;              // 4d x d
        MatrixXd w2;              // d x 4d
    };

    TinyTransformerConfig cfg;
    MatrixXd wte;  // d x V, one column per token
    MatrixXd wpe;  // d x context
    std::vector<Block> blocks;
    MatrixXd wlm;  // V x d
    std::vector<std::string> vocab_words;  // optional id -> word table

    TinyTransformer() = default;

    explicit TinyTransformer(const TinyTransformerConfig& config, uint64_t init_seed)
        : cfg(config) {
        cfg.validate();
        auto rng = make_rng(init_seed);
        std::normal_distribution<double> nd(0.0, 0.06);
        auto fill = [&](MatrixXd& m, Eigen::Index r, Eigen::Index c) {
            m.resize(r, c);
            for (Eigen::Index j = 0; j < c; ++j)
                for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd(rng);
        };
        const int d = cfg.d_model;
        fill(wte, d, cfg.vocab_size);
        fill(wpe, d, cfg.context_length);
        blocks.resize(static_cast<size_t>(cfg.layers));
        for (auto& b : blocks) {
            fill(b.wq, d, d);
            fill(b.wk, d, d);
            fill(b.wv, d, d);
            fill(b.wo, d, d);
            fill(b.w1, 4 * d, d);
            fill(b.w2, d, 4 * d);
        }
        fill(wlm, cfg.vocab_size, d);
    }

    int vocab_size() const override { return cfg.vocab_size; }
    int d_model() const override { return cfg.d_model; }
    int num_layers() const override { return cfg.layers; }
    int context_length() const override { return cfg.context_length; }
    TokenId bos_token() const override { return 0; }

    // --- forward ---------------------------------------------------------

    struct Trace {
        MatrixXd embed;                // X0, d x T
        std::vector<MatrixXd> resid;   // after each block, d x T
        MatrixXd final_norm;           // d x T
        VectorXd final_inv;
        MatrixXd logits;               // V x T
        struct BlockCache {
            MatrixXd x_in, n1, q, k, v;          // d x T
            std::vector<MatrixXd> attn;          // per head, T x T row-softmax
            MatrixXd heads_out;                  // d x T
            MatrixXd x_mid, n2, h1;              // h1: 4d x T
            VectorXd inv1, inv2;
        };
        std::vector<BlockCache> cache;
    };

    // Runs on BOS + tokens. When `onehots` is non-null it must be a T x V
    // relaxed input matrix (row 0 the BOS one-hot) and embeddings are formed
    // as wte * onehots^T; otherwise the hard token columns are gathered.
    Trace run(const TokenSequence& tokens, const MatrixXd* onehots,
              const ResidualHook* hook) const {
        check_tokens(tokens);
        const int n = static_cast<int>(tokens.size());
        const int T = n + 1;
        const int d = cfg.d_model;
        const int dh = d / cfg.heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        Trace tr;
        if (onehots) {
            tr.embed.noalias() = wte * onehots->transpose();
        } else {
            tr.embed.resize(d, T);
            tr.embed.col(0) = wte.col(bos_token());
            for (int i = 0; i < n; ++i)
                tr.embed.col(i + 1) = wte.col(tokens[static_cast<size_t>(i)]);
        }
        tr.embed += wpe.leftCols(T);

        MatrixXd x = tr.embed;
        tr.cache.resize(blocks.size());
        tr.resid.reserve(blocks.size());
        for (size_t l = 0; l < blocks.size(); ++l) {
            const Block& b = blocks[l];
            auto& c = tr.cache[l];
            c.x_in = x;
            c.inv1 = detail::rmsnorm_cols(c.x_in, c.n1);
            c.q.noalias() = b.wq * c.n1;
            c.k.noalias() = b.wk * c.n1;
            c.v.noalias() = b.wv * c.n1;
            c.attn.resize(static_cast<size_t>(cfg.heads));
            c.heads_out.resize(d, T);
            for (int h = 0; h < cfg.heads; ++h) {
                auto qh = c.q.middleRows(h * dh, dh);
                auto kh = c.k.middleRows(h * dh, dh);
                auto vh = c.v.middleRows(h * dh, dh);
                MatrixXd& p = c.attn[static_cast<size_t>(h)];
                p.noalias() = qh.transpose() * kh;
                p *= scale;
                // causal row-softmax over keys j <= query i
                for (int i = 0; i < T; ++i) {
                    auto row = p.row(i).head(i + 1);
                    const double m = row.maxCoeff();
                    row = (row.array() - m).exp();
                    row /= row.sum();
                    p.row(i).tail(T - i - 1).setZero();
                }
                c.heads_out.middleRows(h * dh, dh).noalias() = vh * p.transpose();
            }
            c.x_mid = c.x_in;
            c.x_mid.noalias() += b.wo * c.heads_out;
            c.inv2 = detail::rmsnorm_cols(c.x_mid, c.n2);
            c.h1.noalias() = b.w1 * c.n2;
            c.h1 = c.h1.cwiseMax(0.0);
            x = c.x_mid;
            x.noalias() += b.w2 * c.h1;
            if (hook && hook->layer == static_cast<int>(l)) hook->fn(x);
            tr.resid.push_back(x);
        }
        tr.final_inv = detail::rmsnorm_cols(x, tr.final_norm);
        tr.logits.noalias() = wlm * tr.final_norm;
        return tr;
    }

    ForwardResult forward(const TokenSequence& tokens, int resid_layer,
                          const ResidualHook* hook = nullptr) const override {
        if (resid_layer < 0 || resid_layer >= cfg.layers)
            throw LayerOutOfRange(std::to_string(resid_layer) + " not in [0, " +
                                  std::to_string(cfg.layers) + ")");
        Trace tr = run(tokens, nullptr, hook);
        return ForwardResult{std::move(tr.resid[static_cast<size_t>(resid_layer)]),
                             std::move(tr.logits)};
    }

    TraceView view(const Trace& tr) const {
        return TraceView{&tr.embed, &tr.resid, &tr.logits};
    }

    // --- backward to the relaxed one-hot input ----------------------------

    struct ParamGrads {
        MatrixXd wte, wpe, wlm;
        std::vector<TinyTransformer::Block> blocks;
    };

    // Backprop from loss seeds to d loss / d X0. When `pgrads` is non-null,
    // parameter gradients are accumulated as well (training path).
    MatrixXd backward_to_embedding(const Trace& tr, const LossSeeds& seeds,
                                   ParamGrads* pgrads = nullptr) const {
        const int T = static_cast<int>(tr.embed.cols());
        const int d = cfg.d_model;
        const int dh = d / cfg.heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        const int L = cfg.layers;

        MatrixXd dx = MatrixXd::Zero(d, T);
        if (seeds.d_logits.size() > 0) {
            MatrixXd dnf = wlm.transpose() * seeds.d_logits;
            if (pgrads) pgrads->wlm.noalias() += seeds.d_logits * tr.final_norm.transpose();
            detail::rmsnorm_backward_cols(dnf, tr.resid.back(), tr.final_inv, dx);
        }
        for (int l = L - 1; l >= 0; --l) {
            auto itseed = seeds.d_resid.find(l);
            if (itseed != seeds.d_resid.end()) dx += itseed->second;

            const Block& b = blocks[static_cast<size_t>(l)];
            const auto& c = tr.cache[static_cast<size_t>(l)];
            Block* gb = pgrads ? &pgrads->blocks[static_cast<size_t>(l)] : nullptr;

            // MLP
            MatrixXd dh1 = b.w2.transpose() * dx;
            if (gb) gb->w2.noalias() += dx * c.h1.transpose();
            dh1 = (c.h1.array() > 0.0).select(dh1, 0.0);
            MatrixXd dn2 = b.w1.transpose() * dh1;
            if (gb) gb->w1.noalias() += dh1 * c.n2.transpose();
            MatrixXd dx_mid = dx;  // residual branch
            detail::rmsnorm_backward_cols(dn2, c.x_mid, c.inv2, dx_mid);

            // Attention
            MatrixXd dheads = b.wo.transpose() * dx_mid;
            if (gb) gb->wo.noalias() += dx_mid * c.heads_out.transpose();
            MatrixXd dq = MatrixXd::Zero(d, T), dk = MatrixXd::Zero(d, T),
                     dv = MatrixXd::Zero(d, T);
            for (int h = 0; h < cfg.heads; ++h) {
                auto dOh = dheads.middleRows(h * dh, dh);
                const MatrixXd& p = c.attn[static_cast<size_t>(h)];
                auto vh = c.v.middleRows(h * dh, dh);
                auto qh = c.q.middleRows(h * dh, dh);
                auto kh = c.k.middleRows(h * dh, dh);
                dv.middleRows(h * dh, dh).noalias() = dOh * p;
                MatrixXd dp = dOh.transpose() * vh;  // T x T
                MatrixXd ds(T, T);
                for (int i = 0; i < T; ++i) {
                    auto prow = p.row(i).head(i + 1);
                    auto dprow = dp.row(i).head(i + 1);
                    const double dot = dprow.dot(prow);
                    ds.row(i).head(i + 1) =
                        prow.array() * (dprow.array() - dot) * scale;
                    ds.row(i).tail(T - i - 1).setZero();
                }
                dq.middleRows(h * dh, dh).noalias() = kh * ds.transpose();
                dk.middleRows(h * dh, dh).noalias() = qh * ds;
            }
            MatrixXd dn1 = b.wq.transpose() * dq;
            dn1.noalias() += b.wk.transpose() * dk;
            dn1.noalias() += b.wv.transpose() * dv;
            if (gb) {
                gb->wq.noalias() += dq * c.n1.transpose();
                gb->wk.noalias() += dk * c.n1.transpose();
                gb->wv.noalias() += dv * c.n1.transpose();
            }
            dx = dx_mid;  // residual into the block input
            detail::rmsnorm_backward_cols(dn1, c.x_in, c.inv1, dx);
        }
        auto itseed = seeds.d_resid.find(-1);
        if (itseed != seeds.d_resid.end()) dx += itseed->second;
        return dx;  // d loss / d X0
    }

    MatrixXd onehot_gradient(const TokenSequence& tokens,
                             const RelaxedLoss& loss) const override {
        Trace tr = run(tokens, nullptr, nullptr);
        LossSeeds seeds;
        loss.eval(view(tr), &seeds);
        MatrixXd dx0 = backward_to_embedding(tr, seeds);
        // X0 = wte * P^T + wpe  =>  dP = dX0^T * wte; drop the BOS row.
        MatrixXd dp = dx0.transpose() * wte;
        MatrixXd grad = dp.bottomRows(dp.rows() - 1);
        if (!grad.allFinite())
            throw NumericalFailure("non-finite one-hot gradient entries");
        return grad;
    }

    // Relaxed forward for finite-difference probes: `onehots` is (n+1) x V
    // including the BOS row.
    double relaxed_loss_value(const TokenSequence& tokens, const MatrixXd& onehots,
                              const RelaxedLoss& loss) const {
        Trace tr = run(tokens, &onehots, nullptr);
        return loss.eval(view(tr), nullptr);
    }

    MatrixXd hard_onehots(const TokenSequence& tokens) const {
        MatrixXd p = MatrixXd::Zero(static_cast<Eigen::Index>(tokens.size()) + 1, cfg.vocab_size);
        p(0, bos_token()) = 1.0;
        for (size_t i = 0; i < tokens.size(); ++i)
            p(static_cast<Eigen::Index>(i) + 1, tokens[i]) = 1.0;
        return p;
    }

    // --- training ----------------------------------------------------------

    // Mean next-token cross-entropy over a set of sequences.
    double corpus_cross_entropy(const std::vector<TokenSequence>& corpus) const {
        double total = 0.0;
        long count = 0;
        for (const auto& seq : corpus) {
            VectorXd ce = token_cross_entropies(seq);
            total += ce.sum();
            count += ce.size();
        }
        return total / static_cast<double>(std::max<long>(count, 1));
    }

    struct AdamState {
        ParamGrads m, v;
        double b1p = 1.0, b2p = 1.0;
    };

    // Deterministic AdamW-free Adam with linear LR decay. Returns final
    // training loss. Throws Divergence if the loss goes non-finite.
    double train(const std::vector<TokenSequence>& corpus, uint64_t seed,
                 bool verbose = false) {
        if (corpus.empty()) throw Error("training corpus is empty");
        for (const auto& s : corpus)
            if (static_cast<int>(s.size()) + 1 > cfg.context_length)
                throw ContextOverflow("corpus sequence exceeds context length");
        auto rng = make_rng(seed);
        std::uniform_int_distribution<size_t> pick(0, corpus.size() - 1);

        ParamGrads g = zero_grads();
        AdamState adam;
        adam.m = zero_grads();
        adam.v = zero_grads();
        const double beta1 = 0.9, beta2 = 0.95, eps = 1e-9;

        double loss_ema = 0.0;
        std::vector<size_t> batch_idx(static_cast<size_t>(cfg.batch_size));
        for (int step = 0; step < cfg.train_steps; ++step) {
            zero(g);
            long tokens_in_batch = 0;
            for (auto& idx : batch_idx) {
                idx = pick(rng);
                tokens_in_batch += static_cast<long>(corpus[idx].size());
            }
            const double inv_tokens = 1.0 / static_cast<double>(tokens_in_batch);
            double loss = 0.0;
            for (size_t idx : batch_idx) loss += sequence_backward(corpus[idx], inv_tokens, g);
            loss *= inv_tokens;
            if (!std::isfinite(loss))
                throw Divergence("training loss non-finite at step " + std::to_string(step));
            loss_ema = step == 0 ? loss : 0.95 * loss_ema + 0.05 * loss;
            const double lr = cfg.learning_rate *
                              (1.0 - static_cast<double>(step) / cfg.train_steps);
            adam_update(g, adam, lr, beta1, beta2, eps);
            if (verbose && ((step + 1) % 200 == 0 || step == 0))
                std::cerr << "  train step " << step + 1 << "/" << cfg.train_steps
                          << " loss " << loss << " (ema " << loss_ema << ")\n";
        }
        return loss_ema;
    }

    // --- serialization -----------------------------------------------------

    void save(const std::string& json_path, const std::string& blob_path) const {
        json header;
        header["format"] = "steerkit-tiny-transformer-v1";
        header["config"] = cfg.to_json();
        json vocab = json::object();
        for (size_t i = 0; i < vocab_words.size(); ++i)
            vocab[vocab_words[i]] = static_cast<int>(i);
        header["vocab"] = vocab;
        json tensors = json::array();
        auto record = [&tensors](const std::string& name, const MatrixXd& m) {
            tensors.push_back(json{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
        };
        record("wte", wte);
        record("wpe", wpe);
        for (size_t l = 0; l < blocks.size(); ++l) {
            const std::string p = "block" + std::to_string(l) + ".";
            record(p + "wq", blocks[l].wq);
            record(p + "wk", blocks[l].wk);
            record(p + "wv", blocks[l].wv);
            record(p + "wo", blocks[l].wo);
            record(p + "w1", blocks[l].w1);
            record(p + "w2", blocks[l].w2);
        }
        record("wlm", wlm);
        header["tensors"] = tensors;
        write_json_file(json_path, header);

        BlobWriter bw(blob_path);
        bw.write(wte);
        bw.write(wpe);
        for (const auto& b : blocks) {
            bw.write(b.wq);
            bw.write(b.wk);
            bw.write(b.wv);
            bw.write(b.wo);
            bw.write(b.w1);
            bw.write(b.w2);
        }
        bw.write(wlm);
    }

    static TinyTransformer load(const std::string& json_path, const std::string& blob_path) {
        json header = read_json_file(json_path);
        if (header.value("format", "") != "steerkit-tiny-transformer-v1")
            throw ParseFailure(json_path + ": unexpected model format");
        TinyTransformer t;
        t.cfg = TinyTransformerConfig::from_json(header.at("config"));
        t.cfg.validate();
        t.vocab_words.assign(static_cast<size_t>(t.cfg.vocab_size), "");
        for (auto& [word, id] : header.at("vocab").items())
            t.vocab_words[static_cast<size_t>(id.get<int>())] = word;
        const int d = t.cfg.d_model;
        BlobReader br(blob_path);
        t.wte = br.read_matrix(d, t.cfg.vocab_size);
        t.wpe = br.read_matrix(d, t.cfg.context_length);
        t.blocks.resize(static_cast<size_t>(t.cfg.layers));
        for (auto& b : t.blocks) {
            b.wq = br.read_matrix(d, d);
            b.wk = br.read_matrix(d, d);
            b.wv = br.read_matrix(d, d);
            b.wo = br.read_matrix(d, d);
            b.w1 = br.read_matrix(4 * d, d);
            b.w2 = br.read_matrix(d, 4 * d);
        }
        t.wlm = br.read_matrix(t.cfg.vocab_size, d);
        return t;
    }

  private:
    ParamGrads zero_grads() const {
        ParamGrads g;
        g.wte = MatrixXd::Zero(wte.rows(), wte.cols());
        g.wpe = MatrixXd::Zero(wpe.rows(), wpe.cols());
        g.wlm = MatrixXd::Zero(wlm.rows(), wlm.cols());
        g.blocks.resize(blocks.size());
        for (size_t l = 0; l < blocks.size(); ++l) {
            const Block& b = blocks[l];
            g.blocks[l].wq = MatrixXd::Zero(b.wq.rows(), b.wq.cols());
            g.blocks[l].wk = MatrixXd::Zero(b.wk.rows(), b.wk.cols());
            g.blocks[l].wv = MatrixXd::Zero(b.wv.rows(), b.wv.cols());
            g.blocks[l].wo = MatrixXd::Zero(b.wo.rows(), b.wo.cols());
            g.blocks[l].w1 = MatrixXd::Zero(b.w1.rows(), b.w1.cols());
            g.blocks[l].w2 = MatrixXd::Zero(b.w2.rows(), b.w2.cols());
        }
        return g;
    }

    static void zero(ParamGrads& g) {
        g.wte.setZero();
        g.wpe.setZero();
        g.wlm.setZero();
        for (auto& b : g.blocks) {
            b.wq.setZero();
            b.wk.setZero();
            b.wv.setZero();
            b.wo.setZero();
            b.w1.setZero();
            b.w2.setZero();
        }
    }

    // Forward + backward of summed next-token cross-entropy on one sequence,
    // scaled by `weight`; accumulates parameter grads, returns the summed CE.
    double sequence_backward(const TokenSequence& seq, double weight, ParamGrads& g) {
        Trace tr = run(seq, nullptr, nullptr);
        const int n = static_cast<int>(seq.size());
        LossSeeds seeds;
        seeds.d_logits = MatrixXd::Zero(cfg.vocab_size, n + 1);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto col = tr.logits.col(i);
            const double m = col.maxCoeff();
            VectorXd p = (col.array() - m).exp();
            const double z = p.sum();
            p /= z;
            const TokenId target = seq[static_cast<size_t>(i)];
            total += std::log(z) + m - col(target);
            p(target) -= 1.0;
            seeds.d_logits.col(i) = weight * p;
        }
        MatrixXd dx0 = backward_to_embedding(tr, seeds, &g);
        // embedding grads
        g.wte.col(bos_token()) += dx0.col(0);
        for (int i = 0; i < n; ++i) g.wte.col(seq[static_cast<size_t>(i)]) += dx0.col(i + 1);
        g.wpe.leftCols(n + 1) += dx0;
        return total;
    }

    void adam_update(const ParamGrads& g, AdamState& s, double lr, double b1, double b2,
                     double eps) {
        s.b1p *= b1;
        s.b2p *= b2;
        const double c1 = 1.0 / (1.0 - s.b1p);
        const double c2 = 1.0 / (1.0 - s.b2p);
        auto upd = [&](MatrixXd& w, const MatrixXd& gw, MatrixXd& m, MatrixXd& v) {
            m = b1 * m + (1.0 - b1) * gw;
            v = b2 * v + (1.0 - b2) * gw.cwiseProduct(gw);
            w.array() -= lr * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
        };
        upd(wte, g.wte, s.m.wte, s.v.wte);
        upd(wpe, g.wpe, s.m.wpe, s.v.wpe);
        upd(wlm, g.wlm, s.m.wlm, s.v.wlm);
        for (size_t l = 0; l < blocks.size(); ++l) {
            upd(blocks[l].wq, g.blocks[l].wq, s.m.blocks[l].wq, s.v.blocks[l].wq);
            upd(blocks[l].wk, g.blocks[l].wk, s.m.blocks[l].wk, s.v.blocks[l].wk);
            upd(blocks[l].wv, g.blocks[l].wv, s.m.blocks[l].wv, s.v.blocks[l].wv);
            upd(blocks[l].wo, g.blocks[l].wo, s.m.blocks[l].wo, s.v.blocks[l].wo);
            upd(blocks[l].w1, g.blocks[l].w1, s.m.blocks[l].w1, s.v.blocks[l].w1);
            upd(blocks[l].w2, g.blocks[l].w2, s.m.blocks[l].w2, s.v.blocks[l].w2);
        }
    }
};

// Trains a fresh model on the corpus and reports held-out improvement.
// `corpus` is split internally: the last tenth (at least one sequence) is
// held out from training and used for the before/after perplexity check.
inline TinyTransformer train_tiny_transformer(const std::vector<TokenSequence>& corpus,
                                              const TinyTransformerConfig& config,
                                              double* heldout_before = nullptr,
                                              double* heldout_after = nullptr,
                                              bool verbose = false) {
    if (corpus.empty()) throw Error("training corpus is empty");
    TinyTransformer model(config, derive_seed(config.seed, "init"));
    const size_t holdout = std::max<size_t>(1, corpus.size() / 10);
    std::vector<TokenSequence> train_set(corpus.begin(), corpus.end() - static_cast<long>(holdout));
    std::vector<TokenSequence> held(corpus.end() - static_cast<long>(holdout), corpus.end());
    if (train_set.empty()) train_set = corpus;  // tiny corpora train on everything
    const double before = model.corpus_cross_entropy(held);
    model.train(train_set, derive_seed(config.seed, "train"), verbose);
    const double after = model.corpus_cross_entropy(held);
    if (heldout_before) *heldout_before = before;
    if (heldout_after) *heldout_after = after;
    return model;
}

} // namespace steerkit
