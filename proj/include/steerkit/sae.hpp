#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>

#include "steerkit/backend.hpp"
#include "steerkit/datasets.hpp"
#include "steerkit/io.hpp"

namespace steerkit {

// ---------------------------------------------------------------------------
// ReLU sparse autoencoder over residual activations:
//   a(x) = ReLU(W_enc x + b_enc),  xhat = W_dec a + b_dec.
// Decoder columns are kept unit-norm during and after training.
// ---------------------------------------------------------------------------

struct SaeModel {
    MatrixXd w_enc;  // F x d, row i is the encoder direction of latent i
    VectorXd b_enc;  // F
    MatrixXd w_dec;  // d x F
    VectorXd b_dec;  // d
    int layer = 0;
    double threshold = 0.0;  // activity threshold used for L0 counts

    int dim() const { return static_cast<int>(w_enc.cols()); }
    int latents() const { return static_cast<int>(w_enc.rows()); }

    VectorXd encode(const VectorXd& x) const {
        if (x.size() != w_enc.cols())
            throw DimensionMismatch("sae_encode: input dim " + std::to_string(x.size()) +
                                    " != " + std::to_string(w_enc.cols()));
        return ((w_enc * x + b_enc).array().max(0.0)).matrix();
    }
    MatrixXd encode_cols(const MatrixXd& x) const {
        if (x.rows() != w_enc.cols()) throw DimensionMismatch("sae_encode: input dim mismatch");
        return (((w_enc * x).colwise() + b_enc).array().max(0.0)).matrix();
    }
    VectorXd decode(const VectorXd& a) const {
        if (a.size() != w_dec.cols())
            throw DimensionMismatch("sae_decode: latent dim " + std::to_string(a.size()) +
                                    " != " + std::to_string(w_dec.cols()));
        return w_dec * a + b_dec;
    }
    MatrixXd decode_cols(const MatrixXd& a) const {
        if (a.rows() != w_dec.cols()) throw DimensionMismatch("sae_decode: latent dim mismatch");
        return (w_dec * a).colwise() + b_dec;
    }

    void save(const std::string& json_path, const std::string& blob_path) const {
        write_json_file(json_path, json{{"format", "steerkit-sae-v1"},
                                        {"d", dim()},
                                        {"latents", latents()},
                                        {"layer", layer},
                                        {"threshold", threshold}});
        BlobWriter bw(blob_path);
        bw.write(w_enc);
        bw.write(b_enc);
        bw.write(w_dec);
        bw.write(b_dec);
    }
    static SaeModel load(const std::string& json_path, const std::string& blob_path) {
        json h = read_json_file(json_path);
        if (h.value("format", "") != "steerkit-sae-v1")
            throw ParseFailure(json_path + ": unexpected SAE format");
        SaeModel s;
        const int d = h.at("d");
        const int f = h.at("latents");
        s.layer = h.at("layer");
        s.threshold = h.at("threshold");
        BlobReader br(blob_path);
        s.w_enc = br.read_matrix(f, d);
        s.b_enc = br.read_vector(f);
        s.w_dec = br.read_matrix(d, f);
        s.b_dec = br.read_vector(d);
        return s;
    }
};

// Count of latents strictly above the threshold.
inline int l0(const VectorXd& a, double threshold) {
    if (threshold < 0) throw Error("l0: threshold must be >= 0");
    return static_cast<int>((a.array() > threshold).count());
}

inline double mean_l0_cols(const MatrixXd& a, double threshold) {
    double total = 0;
    for (Eigen::Index c = 0; c < a.cols(); ++c)
        total += static_cast<double>((a.col(c).array() > threshold).count());
    return total / static_cast<double>(a.cols());
}

// ---------------------------------------------------------------------------
// Training. L2 reconstruction + L1 sparsity with a slow multiplicative
// controller on the L1 weight that steers the mean L0 toward the target.
// ---------------------------------------------------------------------------

struct SaeTrainConfig {
    int latents = 512;
    double target_l0 = 12.0;
    int steps = 2400;
    int batch = 128;
    double learning_rate = 1.5e-3;
    uint64_t seed = 1;
    int layer = 0;
};

struct SaeTrainResult {
    SaeModel model;
    double mse_init = 0;
    double mse_final = 0;
    double mean_l0 = 0;
};

namespace detail {

inline double sae_mse(const SaeModel& s, const MatrixXd& x) {
    MatrixXd rec = s.decode_cols(s.encode_cols(x));
    return (rec - x).squaredNorm() / static_cast<double>(x.cols());
}

} // namespace detail

// `activations`: d x N matrix of residual vectors (columns).
inline SaeTrainResult train_sae(const MatrixXd& activations, const SaeTrainConfig& cfg) {
    const Eigen::Index d = activations.rows();
    const Eigen::Index n = activations.cols();
    if (n < 1000) throw Error("train_sae: need >= 1000 activation samples, got " +
                              std::to_string(n));
    if (cfg.target_l0 > cfg.latents) throw Error("train_sae: target L0 exceeds latent count");

    auto rng = make_rng(cfg.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    const int f = cfg.latents;

    SaeModel s;
    s.layer = cfg.layer;
    s.w_dec.resize(d, f);
    for (int j = 0; j < f; ++j) {
        for (Eigen::Index i = 0; i < d; ++i) s.w_dec(i, j) = nd(rng);
        s.w_dec.col(j).normalize();
    }
    s.w_enc = s.w_dec.transpose();
    s.b_enc = VectorXd::Zero(f);
    s.b_dec = activations.rowwise().mean();

    SaeTrainResult result;
    result.mse_init = detail::sae_mse(s, activations);

    // Adam state
    MatrixXd m_we = MatrixXd::Zero(f, d), v_we = MatrixXd::Zero(f, d);
    MatrixXd m_wd = MatrixXd::Zero(d, f), v_wd = MatrixXd::Zero(d, f);
    VectorXd m_be = VectorXd::Zero(f), v_be = VectorXd::Zero(f);
    VectorXd m_bd = VectorXd::Zero(d), v_bd = VectorXd::Zero(d);
    double b1p = 1.0, b2p = 1.0;
    const double b1 = 0.9, b2 = 0.98, eps = 1e-9;

    const double data_scale = std::sqrt(activations.squaredNorm() / static_cast<double>(n));
    double l1_weight = 1e-3 * data_scale;
    double l0_ema = static_cast<double>(f);

    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    MatrixXd xb(d, cfg.batch);
    for (int step = 0; step < cfg.steps; ++step) {
        for (int c = 0; c < cfg.batch; ++c) xb.col(c) = activations.col(pick(rng));
        MatrixXd pre = (s.w_enc * xb).colwise() + s.b_enc;
        MatrixXd a = pre.array().max(0.0);
        MatrixXd rec = (s.w_dec * a).colwise() + s.b_dec;
        MatrixXd err = rec - xb;  // d x B

        const double inv_b = 1.0 / cfg.batch;
        const double mse = err.squaredNorm() * inv_b;
        if (!std::isfinite(mse)) throw Divergence("sae training loss non-finite");

        // grads: L = (1/B) sum ||err||^2 + l1 * (1/B) sum |a|
        MatrixXd d_rec = 2.0 * inv_b * err;
        MatrixXd d_a = s.w_dec.transpose() * d_rec;
        d_a.array() += l1_weight * inv_b;          // d|a|/da = 1 on the active set
        d_a = (pre.array() > 0.0).select(d_a, 0.0);
        MatrixXd g_wd = d_rec * a.transpose();
        VectorXd g_bd = d_rec.rowwise().sum();
        MatrixXd g_we = d_a * xb.transpose();
        VectorXd g_be = d_a.rowwise().sum();

        b1p *= b1;
        b2p *= b2;
        const double c1 = 1.0 / (1.0 - b1p), c2 = 1.0 / (1.0 - b2p);
        auto adam = [&](auto& w, const auto& g, auto& m, auto& v) {
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g.cwiseProduct(g);
            w.array() -= cfg.learning_rate * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
        };
        adam(s.w_enc, g_we, m_we, v_we);
        adam(s.b_enc, g_be, m_be, v_be);
        adam(s.w_dec, g_wd, m_wd, v_wd);
        adam(s.b_dec, g_bd, m_bd, v_bd);
        for (int j = 0; j < f; ++j) {
            const double norm = s.w_dec.col(j).norm();
            if (norm > 1e-12) s.w_dec.col(j) /= norm;
        }

        // steer sparsity toward the target
        const double batch_l0 = mean_l0_cols(a, s.threshold);
        l0_ema = 0.97 * l0_ema + 0.03 * batch_l0;
        const double ratio = l0_ema / cfg.target_l0;
        l1_weight *= std::exp(std::clamp(0.02 * (ratio - 1.0), -0.02, 0.02));
        l1_weight = std::clamp(l1_weight, 1e-6 * data_scale, 10.0 * data_scale);
    }

    result.mse_final = detail::sae_mse(s, activations);
    result.mean_l0 = mean_l0_cols(s.encode_cols(activations), s.threshold);
    result.model = std::move(s);
    return result;
}

// Residual vectors from every position of every sequence, capped at
// `max_samples` columns; the standard SAE training diet.
inline MatrixXd collect_residuals(const ModelBackend& backend,
                                  const std::vector<TokenSequence>& corpus, int layer,
                                  int max_samples) {
    std::vector<VectorXd> cols;
    cols.reserve(static_cast<size_t>(max_samples));
    for (const auto& seq : corpus) {
        if (static_cast<int>(cols.size()) >= max_samples) break;
        ForwardResult fr = backend.forward(seq, layer);
        for (Eigen::Index c = 0; c < fr.resid.cols(); ++c) {
            if (static_cast<int>(cols.size()) >= max_samples) break;
            cols.push_back(fr.resid.col(c));
        }
    }
    if (cols.empty()) throw Error("collect_residuals: empty corpus");
    MatrixXd out(cols[0].size(), static_cast<Eigen::Index>(cols.size()));
    for (size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = cols[i];
    return out;
}

// ---------------------------------------------------------------------------
// Residual substitution hooks: replace the stream with its SAE reconstruction,
// optionally clamping one latent first.
// ---------------------------------------------------------------------------

inline ResidualHook sae_substitution_hook(const SaeModel& sae, int clamp_latent = -1,
                                          double clamp_value = 0.0) {
    return ResidualHook{sae.layer, [&sae, clamp_latent, clamp_value](MatrixXd& resid) {
                            MatrixXd a = sae.encode_cols(resid);
                            if (clamp_latent >= 0) a.row(clamp_latent).setConstant(clamp_value);
                            resid = sae.decode_cols(a);
                        }};
}

// ---------------------------------------------------------------------------
// Causal latent ranking by clamping (plus a correlation fallback).
// ---------------------------------------------------------------------------

struct LatentRanking {
    struct Entry {
        int latent = 0;
        double delta = 0.0;  // persona-metric change vs the unclamped pass
    };
    std::vector<Entry> entries;  // all F latents, sorted by |delta| descending
    int k = 0;

    std::vector<int> top_k() const {
        std::vector<int> out;
        out.reserve(static_cast<size_t>(k));
        for (int i = 0; i < k && i < static_cast<int>(entries.size()); ++i)
            out.push_back(entries[static_cast<size_t>(i)].latent);
        return out;
    }

    void save_csv(const std::string& path) const {
        CsvWriter csv(path, {"latent", "delta", "rank"});
        for (size_t i = 0; i < entries.size(); ++i)
            csv.row({std::to_string(entries[i].latent), fmt_double(entries[i].delta),
                     std::to_string(i + 1)});
    }
};

enum class ClampMode { zero, mean_positive_2x };

struct RankConfig {
    int k = 5;
    ClampMode mode = ClampMode::zero;
    int max_items = 24;   // validation items used for the clamping sweep
    Split split = Split::val;
};

namespace detail {

struct RankItemState {
    size_t item_id;
    int baseline_choice;
};

inline int choose_option(const ModelBackend& backend, const TaskItem& item,
                         const ResidualHook* hook) {
    VectorXd lp = option_logprobs(backend, item.context, item.options, hook);
    int best = 0;
    lp.maxCoeff(&best);
    return best;
}

} // namespace detail

// For each latent, rerun the ranking items with that latent clamped at the
// SAE layer (encode -> overwrite -> decode -> substitute) and record the
// persona-metric change versus the unclamped substitution pass. Latents that
// never activate on an item are skipped for that item under clamp-to-zero,
// since the clamp is a no-op there.
inline LatentRanking rank_latents_causal(const SaeModel& sae, const ModelBackend& backend,
                                         const PersonaTask& task, const RankConfig& cfg) {
    const int f = sae.latents();
    if (cfg.k > f) throw Error("rank_latents_causal: K exceeds latent count");
    auto split_ids = task.split_indices(cfg.split);
    if (split_ids.empty()) throw Error("rank_latents_causal: empty split");
    if (static_cast<int>(split_ids.size()) > cfg.max_items)
        split_ids.resize(static_cast<size_t>(cfg.max_items));

    // Baseline pass (substitution, no clamp) + per-item latent activity.
    ResidualHook base_hook = sae_substitution_hook(sae);
    std::vector<detail::RankItemState> items;
    std::vector<std::vector<char>> active(split_ids.size());  // [item][latent]
    std::vector<VectorXd> mean_act(split_ids.size());
    std::vector<EvalRecord> base_records;
    for (size_t ii = 0; ii < split_ids.size(); ++ii) {
        const TaskItem& item = task.items[split_ids[ii]];
        ForwardResult plain = backend.forward(item.context, sae.layer);
        MatrixXd a = sae.encode_cols(plain.resid);
        active[ii].assign(static_cast<size_t>(f), 0);
        for (int j = 0; j < f; ++j)
            if ((a.row(j).array() > sae.threshold).any()) active[ii][static_cast<size_t>(j)] = 1;
        mean_act[ii] = a.rowwise().mean();
        const int choice = detail::choose_option(backend, item, &base_hook);
        items.push_back({split_ids[ii], choice});
        base_records.push_back({split_ids[ii], choice,
                                choice == item.persona_option, 0.0});
    }
    const double base_metric = persona_metric(base_records, task);

    // Mean positive activation per latent, for the non-zero clamp mode.
    VectorXd clamp_values = VectorXd::Zero(f);
    if (cfg.mode == ClampMode::mean_positive_2x) {
        VectorXd sum = VectorXd::Zero(f), cnt = VectorXd::Zero(f);
        for (const auto& ma : mean_act)
            for (int j = 0; j < f; ++j)
                if (ma(j) > 0) {
                    sum(j) += ma(j);
                    cnt(j) += 1;
                }
        for (int j = 0; j < f; ++j) clamp_values(j) = cnt(j) > 0 ? 2.0 * sum(j) / cnt(j) : 0.0;
    }

    LatentRanking ranking;
    ranking.k = cfg.k;
    ranking.entries.resize(static_cast<size_t>(f));
    for (int j = 0; j < f; ++j) {
        const double cv = cfg.mode == ClampMode::zero ? 0.0 : clamp_values(j);
        std::vector<EvalRecord> records;
        records.reserve(items.size());
        bool any_effect_possible = false;
        for (size_t ii = 0; ii < items.size(); ++ii) {
            const TaskItem& item = task.items[items[ii].item_id];
            int choice = items[ii].baseline_choice;
            const bool noop = cfg.mode == ClampMode::zero && !active[ii][static_cast<size_t>(j)];
            if (!noop) {
                any_effect_possible = true;
                ResidualHook hook = sae_substitution_hook(sae, j, cv);
                choice = detail::choose_option(backend, item, &hook);
            }
            records.push_back({items[ii].item_id, choice, choice == item.persona_option, 0.0});
        }
        const double metric = any_effect_possible ? persona_metric(records, task) : base_metric;
        ranking.entries[static_cast<size_t>(j)] = {j, metric - base_metric};
    }

    // total activation mass as the deterministic tie-break
    VectorXd mass = VectorXd::Zero(f);
    for (const auto& ma : mean_act) mass += ma;
    std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                     [&](const LatentRanking::Entry& a, const LatentRanking::Entry& b) {
                         const double da = std::abs(a.delta), db = std::abs(b.delta);
                         if (da != db) return da > db;
                         if (mass(a.latent) != mass(b.latent))
                             return mass(a.latent) > mass(b.latent);
                         return a.latent < b.latent;
                     });
    return ranking;
}

// Fallback ranking by activation difference between contrast sets: latent i
// scored by |mean a_i over D+ - mean a_i over D-| on pooled activations.
inline LatentRanking rank_latents_correlation(const SaeModel& sae, const ModelBackend& backend,
                                              const ContrastDataset& contrast, int k,
                                              Pooling pooling = Pooling::last_token) {
    const int f = sae.latents();
    if (k > f) throw Error("rank_latents_correlation: K exceeds latent count");
    contrast.validate();
    VectorXd pos = VectorXd::Zero(f), neg = VectorXd::Zero(f);
    for (const auto& s : contrast.positives)
        pos += sae.encode(backend.activation(s, sae.layer, pooling));
    pos /= static_cast<double>(contrast.positives.size());
    for (const auto& s : contrast.negatives)
        neg += sae.encode(backend.activation(s, sae.layer, pooling));
    neg /= static_cast<double>(contrast.negatives.size());

    LatentRanking ranking;
    ranking.k = k;
    ranking.entries.resize(static_cast<size_t>(f));
    for (int j = 0; j < f; ++j) ranking.entries[static_cast<size_t>(j)] = {j, pos(j) - neg(j)};
    std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                     [](const LatentRanking::Entry& a, const LatentRanking::Entry& b) {
                         const double da = std::abs(a.delta), db = std::abs(b.delta);
                         if (da != db) return da > db;
                         return a.latent < b.latent;
                     });
    return ranking;
}

// Mean latent activations over a contrast side, on pooled activations; the
// abar terms of the SAE steering vector.
inline VectorXd mean_latent_activations(const SaeModel& sae, const ModelBackend& backend,
                                        const std::vector<TokenSequence>& side,
                                        Pooling pooling = Pooling::last_token) {
    if (side.empty()) throw Error("mean_latent_activations: empty example set");
    VectorXd mean = VectorXd::Zero(sae.latents());
    for (const auto& s : side) mean += sae.encode(backend.activation(s, sae.layer, pooling));
    return mean / static_cast<double>(side.size());
}

} // namespace steerkit
