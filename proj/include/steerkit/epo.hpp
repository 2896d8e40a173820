#pragma once

#include <algorithm>
#include <map>
#include <memory>

#include "steerkit/backend.hpp"
#include "steerkit/io.hpp"
#include "steerkit/steering.hpp"

namespace steerkit {

struct PromptCandidate {
    TokenSequence tokens;
    double f = 0.0;       // persona objective
    double h_mean = 0.0;  // mean self cross-entropy
    double lambda = 0.0;  // fluency weight it was proposed under
    int iteration = 0;

    double loss(double lam) const { return f + lam * h_mean; }
};

struct EpoConfig {
    int population = 20;     // M
    int length = 8;          // n
    int iterations = 300;    // T
    int top_k = 32;          // candidate tokens per position
    int mutations = 16;      // per member per iteration
    int restart_period = 100;
    double lambda_min = 0.01;
    double lambda_max = 10.0;
    std::vector<double> lambda_ladder;  // built from the grid when empty
    uint64_t seed = 1;
    std::vector<TokenId> banned_tokens;  // never sampled into prompts (BOS etc.)

    // One zero-weight slot, then a geometric grid across the rest.
    std::vector<double> make_ladder() const {
        if (!lambda_ladder.empty()) {
            auto l = lambda_ladder;
            if (static_cast<int>(l.size()) != population)
                throw ConfigError("lambda ladder size must equal population");
            if (!std::is_sorted(l.begin(), l.end()))
                throw ConfigError("lambda ladder must be sorted ascending");
            for (double v : l)
                if (v < 0) throw ConfigError("lambda values must be non-negative");
            return l;
        }
        std::vector<double> l;
        l.push_back(0.0);
        if (population > 1) {
            const int rest = population - 1;
            for (int i = 0; i < rest; ++i) {
                const double t = rest == 1 ? 0.0 : static_cast<double>(i) / (rest - 1);
                l.push_back(lambda_min * std::pow(lambda_max / lambda_min, t));
            }
        }
        return l;
    }

    void validate() const {
        if (population < 1) throw ConfigError("population must be >= 1");
        if (length < 1) throw ConfigError("prompt length must be >= 1");
        if (iterations < 0) throw ConfigError("iterations must be >= 0");
        if (top_k < 1) throw ConfigError("top_k must be >= 1");
        if (mutations < 1) throw ConfigError("mutations must be >= 1");
        if (restart_period < 1) throw ConfigError("restart_period must be >= 1");
    }
};

struct ParetoFrontier {
    std::vector<PromptCandidate> members;  // sorted by (f, h_mean, tokens)

    bool contains_dominated_pair() const {
        for (size_t i = 0; i < members.size(); ++i)
            for (size_t j = 0; j < members.size(); ++j) {
                if (i == j) continue;
                const auto& a = members[i];
                const auto& b = members[j];
                if (a.f <= b.f && a.h_mean <= b.h_mean &&
                    (a.f < b.f || a.h_mean < b.h_mean))
                    return true;
            }
        return false;
    }
};

struct TraceRow {
    int iteration = 0;
    double lambda = 0.0;
    double best_loss = 0.0;  // best-so-far L_lambda over every evaluated candidate
    double best_f = 0.0;
    double best_h = 0.0;
};

// Population state right after a selection step; used to check the
// exchange-argument monotonicity of H across the ladder.
struct GenerationSnapshot {
    int iteration = 0;
    std::vector<double> f, h;  // per ladder slot
};

struct EpoResult {
    ParetoFrontier frontier;
    std::vector<double> ladder;
    std::vector<TraceRow> trace;
    std::vector<GenerationSnapshot> generations;

    void save_frontier_jsonl(const std::string& path, const Vocab* vocab) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open for write: " + path);
        for (const auto& c : frontier.members) {
            json j;
            j["tokens"] = c.tokens;
            j["text"] = vocab ? vocab->decode(c.tokens) : "";
            j["f"] = c.f;
            j["H_mean"] = c.h_mean;
            j["lambda"] = c.lambda;
            j["iteration"] = c.iteration;
            out << j.dump() << "\n";
        }
    }

    void save_trace_csv(const std::string& path) const {
        CsvWriter csv(path, {"iteration", "lambda", "best_loss", "best_f", "best_H"});
        for (const auto& r : trace)
            csv.row({std::to_string(r.iteration), fmt_double(r.lambda), fmt_double(r.best_loss),
                     fmt_double(r.best_f), fmt_double(r.best_h)});
    }
};

// --- objectives -----------------------------------------------------------

// f(t) = -sign * <e(t), v_hat> / ||e(t)|| at the vector's layer and pooling.
inline double persona_objective(const TokenSequence& tokens, const SteeringVector& v,
                                const ModelBackend& backend) {
    v.validate();
    VectorXd e = backend.activation(tokens, v.layer, v.pooling);
    const double norm = e.norm();
    if (norm < 1e-12) throw DegenerateActivation();
    return -v.sign * e.dot(v.unit) / norm;
}

// L_lambda(t) = f(t) + (lambda/n) * sum_i H(m(t_<=i), t_{i+1}).
inline double fluent_loss(const TokenSequence& tokens, const SteeringVector& v, double lambda,
                          const ModelBackend& backend) {
    if (lambda < 0) throw ConfigError("lambda must be >= 0");
    ForwardResult fr = backend.forward(tokens, v.layer);
    VectorXd e = ModelBackend::pool(fr.resid, v.pooling);
    const double norm = e.norm();
    if (norm < 1e-12) throw DegenerateActivation();
    const double f = -v.sign * e.dot(v.unit) / norm;
    const VectorXd ce = ModelBackend::cross_entropies_from_logits(fr.logits, tokens);
    return f + lambda * ce.mean();
}

// --- Pareto extraction ------------------------------------------------------

// Non-dominated set under (f, H_mean), both lower-better; deduplicated by
// token sequence; output ordered by (f, H_mean, tokens).
inline ParetoFrontier pareto_extract(std::vector<PromptCandidate> candidates) {
    if (candidates.empty()) throw Error("pareto_extract: empty candidate list");
    std::sort(candidates.begin(), candidates.end(),
              [](const PromptCandidate& a, const PromptCandidate& b) {
                  if (a.f != b.f) return a.f < b.f;
                  if (a.h_mean != b.h_mean) return a.h_mean < b.h_mean;
                  return a.tokens < b.tokens;
              });
    ParetoFrontier out;
    double min_h_prev = std::numeric_limits<double>::infinity();  // over strictly lower f
    size_t i = 0;
    while (i < candidates.size()) {
        size_t j = i;
        while (j < candidates.size() && candidates[j].f == candidates[i].f) ++j;
        const double group_min_h = candidates[i].h_mean;  // sorted within group
        if (group_min_h < min_h_prev) {
            for (size_t k = i; k < j && candidates[k].h_mean == group_min_h; ++k)
                out.members.push_back(candidates[k]);
            min_h_prev = group_min_h;
        }
        i = j;
    }
    // dedupe identical token sequences (identical scores sit adjacent)
    std::vector<PromptCandidate> dedup;
    for (auto& c : out.members) {
        bool dup = false;
        for (const auto& kept : dedup)
            if (kept.tokens == c.tokens) {
                dup = true;
                break;
            }
        if (!dup) dedup.push_back(std::move(c));
    }
    out.members = std::move(dedup);
    return out;
}

// --- Evolutionary Prompt Optimization ----------------------------------------

namespace detail {

struct ScoredPrompt {
    TokenSequence tokens;
    double f = 0.0;
    double h = 0.0;
};

// better-under-lambda comparison with (H, tokens) tie-breaking, applied
// uniformly so best-per-lambda selection is consistent across the ladder
inline bool better_under(double lam, const ScoredPrompt& a, const ScoredPrompt& b) {
    const double la = a.f + lam * a.h;
    const double lb = b.f + lam * b.h;
    if (la != lb) return la < lb;
    if (a.h != b.h) return a.h < b.h;
    return a.tokens < b.tokens;
}

} // namespace detail

// Algorithm: maintain M prompts, one per fluency weight; each iteration score
// every member, rank substitution tokens per position by the one-hot gradient
// (most negative first), mutate one random position per offspring with a
// sampled top-k token, evaluate everything once, and keep the best candidate
// per lambda from the shared pool. Periodic restarts keep one slot and
// reinitialize the rest. Candidates with non-finite objectives are dropped,
// not fatal.
inline EpoResult epo_optimize(const SteeringVector& v, const ModelBackend& backend,
                              const EpoConfig& cfg) {
    cfg.validate();
    v.validate();
    const std::vector<double> ladder = cfg.make_ladder();
    const int m = cfg.population;
    const int n = cfg.length;
    auto rng = make_rng(cfg.seed);

    std::vector<char> banned(static_cast<size_t>(backend.vocab_size()), 0);
    banned[static_cast<size_t>(backend.bos_token())] = 1;
    for (TokenId t : cfg.banned_tokens)
        if (t >= 0 && t < backend.vocab_size()) banned[static_cast<size_t>(t)] = 1;
    std::vector<TokenId> allowed;
    for (TokenId t = 0; t < backend.vocab_size(); ++t)
        if (!banned[static_cast<size_t>(t)]) allowed.push_back(t);
    if (allowed.empty()) throw ConfigError("no tokens available for prompts");
    std::uniform_int_distribution<size_t> pick_tok(0, allowed.size() - 1);
    std::uniform_int_distribution<int> pick_pos(0, n - 1);

    auto random_prompt = [&] {
        TokenSequence t(static_cast<size_t>(n));
        for (auto& x : t) x = allowed[pick_tok(rng)];
        return t;
    };

    // (f, h) evaluation with a run-wide cache; the cache also feeds the final
    // frontier over every candidate ever evaluated.
    struct SeenInfo {
        double f, h, lambda;
        int iteration;
    };
    std::map<TokenSequence, SeenInfo> seen;
    auto evaluate = [&](const TokenSequence& t, double lam, int iter,
                        detail::ScoredPrompt& out) -> bool {
        auto it = seen.find(t);
        if (it != seen.end()) {
            out = {t, it->second.f, it->second.h};
            return true;
        }
        try {
            ForwardResult fr = backend.forward(t, v.layer);
            VectorXd e = ModelBackend::pool(fr.resid, v.pooling);
            const double norm = e.norm();
            if (norm < 1e-12) return false;
            const double f = -v.sign * e.dot(v.unit) / norm;
            const double h = ModelBackend::cross_entropies_from_logits(fr.logits, t).mean();
            if (!std::isfinite(f) || !std::isfinite(h)) return false;
            seen.emplace(t, SeenInfo{f, h, lam, iter});
            out = {t, f, h};
            return true;
        } catch (const Error&) {
            return false;
        }
    };

    // initial population
    std::vector<detail::ScoredPrompt> pop;
    pop.reserve(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        detail::ScoredPrompt s;
        for (int attempt = 0; attempt < 64; ++attempt)
            if (evaluate(random_prompt(), ladder[static_cast<size_t>(i)], 0, s)) break;
        if (s.tokens.empty()) throw Error("epo_optimize: could not evaluate any initial prompt");
        pop.push_back(std::move(s));
    }

    EpoResult result;
    result.ladder = ladder;
    std::vector<detail::ScoredPrompt> best_so_far = pop;
    for (int i = 0; i < m; ++i)
        for (const auto& c : pop)
            if (detail::better_under(ladder[static_cast<size_t>(i)], c,
                                     best_so_far[static_cast<size_t>(i)]))
                best_so_far[static_cast<size_t>(i)] = c;
    auto record_trace = [&](int iter) {
        for (int i = 0; i < m; ++i) {
            const auto& b = best_so_far[static_cast<size_t>(i)];
            const double lam = ladder[static_cast<size_t>(i)];
            result.trace.push_back({iter, lam, b.f + lam * b.h, b.f, b.h});
        }
    };
    record_trace(0);

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        // 1) gradient-guided proposals, drawn in the serialized step
        std::vector<TokenSequence> proposals;
        for (int i = 0; i < m; ++i) {
            const double lam = ladder[static_cast<size_t>(i)];
            const TokenSequence& base = pop[static_cast<size_t>(i)].tokens;
            MatrixXd grad;
            try {
                CompositeLoss loss;
                loss.add(std::make_shared<PersonaCosineLoss>(v.unit, v.sign, v.layer, v.pooling));
                if (lam > 0) loss.add(std::make_shared<FluencyLoss>(base, lam));
                grad = backend.onehot_gradient(base, loss);
            } catch (const Error&) {
                continue;  // aborts this member's step, not the run
            }
            // k most negative entries per position
            std::vector<std::vector<TokenId>> top(static_cast<size_t>(n));
            std::vector<int> order(allowed.size());
            for (int p = 0; p < n; ++p) {
                for (size_t j = 0; j < allowed.size(); ++j) order[j] = static_cast<int>(j);
                const int k = std::min<int>(cfg.top_k, static_cast<int>(allowed.size()));
                std::partial_sort(order.begin(), order.begin() + k, order.end(),
                                  [&](int a, int b) {
                                      const double ga = grad(p, allowed[static_cast<size_t>(a)]);
                                      const double gb = grad(p, allowed[static_cast<size_t>(b)]);
                                      if (ga != gb) return ga < gb;
                                      return a < b;
                                  });
                top[static_cast<size_t>(p)].reserve(static_cast<size_t>(k));
                for (int j = 0; j < k; ++j)
                    top[static_cast<size_t>(p)].push_back(
                        allowed[static_cast<size_t>(order[static_cast<size_t>(j)])]);
            }
            for (int mu = 0; mu < cfg.mutations; ++mu) {
                const int p = pick_pos(rng);
                const auto& cands = top[static_cast<size_t>(p)];
                std::uniform_int_distribution<size_t> pc(0, cands.size() - 1);
                TokenSequence t = base;
                t[static_cast<size_t>(p)] = cands[pc(rng)];
                proposals.push_back(std::move(t));
            }
        }

        // 2) evaluate candidates once; pool = previous population + proposals
        std::vector<detail::ScoredPrompt> pool = pop;
        for (const auto& t : proposals) {
            detail::ScoredPrompt s;
            if (evaluate(t, 0.0, iter, s)) pool.push_back(std::move(s));
        }
        if (pool.empty()) throw Error("epo_optimize: no surviving candidates");

        // 3) best per lambda from the shared pool
        for (int i = 0; i < m; ++i) {
            const double lam = ladder[static_cast<size_t>(i)];
            const detail::ScoredPrompt* best = &pool[0];
            for (const auto& c : pool)
                if (detail::better_under(lam, c, *best)) best = &c;
            pop[static_cast<size_t>(i)] = *best;
            if (detail::better_under(lam, *best, best_so_far[static_cast<size_t>(i)]))
                best_so_far[static_cast<size_t>(i)] = *best;
        }
        GenerationSnapshot snap;
        snap.iteration = iter;
        for (const auto& p : pop) {
            snap.f.push_back(p.f);
            snap.h.push_back(p.h);
        }
        result.generations.push_back(std::move(snap));
        record_trace(iter);

        // 4) periodic restart: keep one slot, reinitialize the rest
        if (cfg.restart_period > 0 && iter % cfg.restart_period == 0 && iter < cfg.iterations) {
            std::uniform_int_distribution<int> pick_slot(0, m - 1);
            const int keep = pick_slot(rng);
            for (int i = 0; i < m; ++i) {
                if (i == keep) continue;
                detail::ScoredPrompt s;
                for (int attempt = 0; attempt < 64; ++attempt)
                    if (evaluate(random_prompt(), ladder[static_cast<size_t>(i)], iter, s)) break;
                if (!s.tokens.empty()) pop[static_cast<size_t>(i)] = std::move(s);
            }
        }
    }

    // frontier over everything ever evaluated
    std::vector<PromptCandidate> all;
    all.reserve(seen.size());
    for (const auto& [tokens, info] : seen)
        all.push_back(PromptCandidate{tokens, info.f, info.h, info.lambda, info.iteration});
    result.frontier = pareto_extract(std::move(all));
    return result;
}

} // namespace steerkit
