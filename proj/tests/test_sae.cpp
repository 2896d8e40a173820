#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "steerkit/sae.hpp"
#include "stubs.hpp"

using namespace steerkit;

namespace {

SaeModel tiny_sae_2d() {
    // two latents over a 2-d space, hand weights
    SaeModel s;
    s.w_enc.resize(2, 2);
    s.w_enc << 1, 1,   // latent 0: w = (1,1)
               0, 1;   // latent 1: w = (0,1)
    s.b_enc = VectorXd::Zero(2);
    s.w_dec = MatrixXd::Identity(2, 2);
    s.b_dec = VectorXd::Zero(2);
    return s;
}

// Sparse dictionary data: x = D s + noise, s sparse non-negative.
MatrixXd dictionary_data(uint64_t seed, int d, int f0, int n, int active) {
    auto rng = make_rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.5, 1.5);
    std::uniform_int_distribution<int> pick(0, f0 - 1);
    MatrixXd dict(d, f0);
    for (int j = 0; j < f0; ++j) {
        for (int i = 0; i < d; ++i) dict(i, j) = nd(rng);
        dict.col(j).normalize();
    }
    MatrixXd x = MatrixXd::Zero(d, n);
    for (int c = 0; c < n; ++c) {
        for (int k = 0; k < active; ++k) x.col(c) += ud(rng) * dict.col(pick(rng));
        for (int i = 0; i < d; ++i) x(i, c) += 0.01 * nd(rng);
    }
    return x;
}

} // namespace

TEST_CASE("sae_encode hand arithmetic") {
    SaeModel s = tiny_sae_2d();
    s.b_enc << -5, 0;
    VectorXd x(2);
    x << 1, 1;
    VectorXd a = s.encode(x);
    REQUIRE(a(0) == 0.0);  // ReLU(1+1-5)

    s.b_enc.setZero();
    x << 1, 2;
    a = s.encode(x);
    REQUIRE(a(0) == 3.0);  // (1,1) . (1,2)
    REQUIRE(a(1) == 2.0);

    REQUIRE(s.encode(VectorXd::Zero(2)).isZero(0.0));
}

TEST_CASE("sae_encode output is non-negative for random inputs") {
    auto rng = make_rng(7);
    std::normal_distribution<double> nd(0.0, 2.0);
    SaeModel s = tiny_sae_2d();
    s.b_enc << -0.3, 0.4;
    for (int trial = 0; trial < 200; ++trial) {
        VectorXd x(2);
        x << nd(rng), nd(rng);
        REQUIRE(s.encode(x).minCoeff() >= 0.0);
    }
}

TEST_CASE("sae_decode basis probes") {
    SaeModel s = tiny_sae_2d();
    s.w_dec << 2, 5,
               3, 7;
    REQUIRE(s.decode(VectorXd::Zero(2)).isZero(0.0));
    VectorXd onehot(2);
    onehot << 0, 1;
    VectorXd out = s.decode(onehot);
    REQUIRE(out(0) == 5.0);
    REQUIRE(out(1) == 7.0);
}

TEST_CASE("sae dimension mismatches are rejected") {
    SaeModel s = tiny_sae_2d();
    REQUIRE_THROWS_AS(s.encode(VectorXd::Zero(3)), DimensionMismatch);
    REQUIRE_THROWS_AS(s.decode(VectorXd::Zero(3)), DimensionMismatch);
}

TEST_CASE("l0 counting") {
    REQUIRE(l0(VectorXd::Zero(6), 0.0) == 0);
    VectorXd a(4);
    a << 0, 0.2, 0, 3.1;
    REQUIRE(l0(a, 0.0) == 2);
    // threshold monotonicity
    auto rng = make_rng(3);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    VectorXd b(64);
    for (int i = 0; i < 64; ++i) b(i) = ud(rng);
    int prev = 64;
    for (double thr : {0.0, 0.1, 0.3, 0.5, 0.9}) {
        const int cur = l0(b, thr);
        REQUIRE(cur <= prev);
        prev = cur;
    }
    // a vector with exactly the paper-scale count of active features
    VectorXd c = VectorXd::Zero(512);
    for (int i = 0; i < 50; ++i) c(i * 10) = 1.0;
    REQUIRE(l0(c, 0.0) == 50);
}

TEST_CASE("sae training is deterministic, halves MSE, and hits the L0 band") {
    MatrixXd x = dictionary_data(11, 16, 24, 1500, 4);
    SaeTrainConfig cfg;
    cfg.latents = 32;
    cfg.target_l0 = 6.0;
    cfg.steps = 900;
    cfg.batch = 64;
    cfg.seed = 21;
    SaeTrainResult a = train_sae(x, cfg);
    SaeTrainResult b = train_sae(x, cfg);
    REQUIRE(a.model.w_enc == b.model.w_enc);
    REQUIRE(a.model.w_dec == b.model.w_dec);
    REQUIRE(a.mse_final <= 0.5 * a.mse_init);
    REQUIRE(a.mean_l0 >= 0.7 * cfg.target_l0);
    REQUIRE(a.mean_l0 <= 1.3 * cfg.target_l0);
    for (int j = 0; j < a.model.latents(); ++j)
        REQUIRE(a.model.w_dec.col(j).norm() == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sae training rejects undersized sample sets") {
    MatrixXd x = dictionary_data(1, 8, 8, 999, 2);
    REQUIRE_THROWS_WITH(train_sae(x, SaeTrainConfig{}),
                        Catch::Matchers::ContainsSubstring("1000"));
}

TEST_CASE("sae save/load round-trips") {
    MatrixXd x = dictionary_data(13, 8, 12, 1200, 3);
    SaeTrainConfig cfg;
    cfg.latents = 16;
    cfg.target_l0 = 4;
    cfg.steps = 200;
    cfg.seed = 2;
    cfg.layer = 3;
    SaeModel s = train_sae(x, cfg).model;
    auto dir = std::filesystem::temp_directory_path() / "steerkit_sae_rt";
    std::filesystem::create_directories(dir);
    s.save((dir / "sae.json").string(), (dir / "sae.bin").string());
    SaeModel r = SaeModel::load((dir / "sae.json").string(), (dir / "sae.bin").string());
    REQUIRE(r.layer == 3);
    REQUIRE(r.latents() == 16);
    REQUIRE((r.w_enc - s.w_enc).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE((r.b_dec - s.b_dec).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("clamping a latent to its current value is a no-op") {
    auto w = testing::make_planted_world(5);
    VectorXd h = w.backend->forward({3}, 0).resid.col(0);
    VectorXd a = w.sae.encode(h);
    const int latent = w.planted_latent;

    MatrixXd col = h;
    ResidualHook base = sae_substitution_hook(w.sae);
    base.fn(col);
    MatrixXd col2 = h;
    ResidualHook clamped = sae_substitution_hook(w.sae, latent, a(latent));
    clamped.fn(col2);
    REQUIRE(col == col2);
}

TEST_CASE("planted latent ranks first under causal clamping") {
    auto w = testing::make_planted_world(17);
    RankConfig cfg;
    cfg.k = 4;
    LatentRanking r = rank_latents_causal(w.sae, *w.backend, w.task, cfg);
    REQUIRE(r.entries.front().latent == w.planted_latent);
    REQUIRE(std::abs(r.entries.front().delta) == 100.0);
    // silent latent has exactly zero effect
    for (const auto& e : r.entries)
        if (e.latent == 0) REQUIRE(e.delta == 0.0);
}

TEST_CASE("causal ranking is a permutation and respects K bounds") {
    auto w = testing::make_planted_world(23);
    RankConfig cfg;
    cfg.k = w.sae.latents();
    LatentRanking r = rank_latents_causal(w.sae, *w.backend, w.task, cfg);
    REQUIRE(static_cast<int>(r.entries.size()) == w.sae.latents());
    std::set<int> seen;
    for (const auto& e : r.entries) REQUIRE(seen.insert(e.latent).second);
    REQUIRE(static_cast<int>(r.top_k().size()) == w.sae.latents());

    cfg.k = w.sae.latents() + 1;
    REQUIRE_THROWS_AS(rank_latents_causal(w.sae, *w.backend, w.task, cfg), Error);
}

TEST_CASE("correlation ranking recovers a planted activation difference") {
    // latent 2 active on positives only
    SaeModel s;
    const int d = 6, f = 8;
    s.w_enc = MatrixXd::Zero(f, d);
    for (int j = 0; j < f; ++j) s.w_enc(j, j % d) = 1.0;
    s.b_enc = VectorXd::Zero(f);
    s.w_dec = s.w_enc.transpose();
    s.b_dec = VectorXd::Zero(d);
    s.layer = 0;

    MatrixXd table = MatrixXd::Zero(d, 4);
    table(2, 1) = 5.0;  // token 1 -> strong coordinate 2 (positives)
    table(3, 2) = 0.5;  // token 2 -> weak coordinate 3 (negatives)
    testing::FixedActivationBackend backend(table);
    ContrastDataset c;
    c.persona = "planted";
    c.positives = {{1}, {1}};
    c.negatives = {{2}, {2}};
    LatentRanking r = rank_latents_correlation(s, backend, c, 3);
    REQUIRE(r.entries.front().latent == 2);
    REQUIRE(r.entries.front().delta == Catch::Approx(5.0));
}
