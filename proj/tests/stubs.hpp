#pragma once

// Test-only backends: fixed activation tables and planted SAE worlds that
// stand in for the trained transformer where a contract needs an exact,
// hand-checkable model.

#include <random>

#include "steerkit/backend.hpp"
#include "steerkit/datasets.hpp"
#include "steerkit/sae.hpp"

namespace steerkit::testing {

enum class StubLogits { uniform, echo };

// Activation of any sequence = column of `table` indexed by the last token;
// logits either all-zero (uniform softmax) or a point mass on the true next
// token.
class FixedActivationBackend : public ModelBackend {
  public:
    FixedActivationBackend(MatrixXd table, StubLogits mode = StubLogits::uniform,
                           int layers = 2)
        : table_(std::move(table)), mode_(mode), layers_(layers) {}

    int vocab_size() const override { return static_cast<int>(table_.cols()); }
    int d_model() const override { return static_cast<int>(table_.rows()); }
    int num_layers() const override { return layers_; }
    int context_length() const override { return 64; }
    TokenId bos_token() const override { return 0; }

    ForwardResult forward(const TokenSequence& tokens, int layer,
                          const ResidualHook* hook) const override {
        check_tokens(tokens);
        if (layer < 0 || layer >= layers_) throw LayerOutOfRange(std::to_string(layer));
        const int t = static_cast<int>(tokens.size()) + 1;
        ForwardResult fr;
        fr.resid.resize(d_model(), t);
        fr.resid.colwise() = table_.col(tokens.back());
        if (hook && hook->layer == layer) hook->fn(fr.resid);
        fr.logits = MatrixXd::Zero(vocab_size(), t);
        if (mode_ == StubLogits::echo)
            for (size_t i = 0; i < tokens.size(); ++i)
                fr.logits(tokens[i], static_cast<Eigen::Index>(i)) = 1e9;
        return fr;
    }

  private:
    MatrixXd table_;
    StubLogits mode_;
    int layers_;
};

// Planted causal world: residuals are sparse combinations of SAE decoder
// columns, and the option readout is wired to one planted latent. Clamping
// that latent (and only that latent) flips every item's choice.
struct PlantedWorld {
    SaeModel sae;
    PersonaTask task;
    int planted_latent = 0;

    class Backend : public ModelBackend {
      public:
        Backend(const PlantedWorld* w, std::vector<VectorXd> item_resid, VectorXd readout,
                std::vector<double> tau)
            : w_(w), item_resid_(std::move(item_resid)), readout_(std::move(readout)),
              tau_(std::move(tau)) {}

        int vocab_size() const override { return 8; }
        int d_model() const override { return static_cast<int>(readout_.size()); }
        int num_layers() const override { return 1; }
        int context_length() const override { return 8; }
        TokenId bos_token() const override { return 0; }

        ForwardResult forward(const TokenSequence& tokens, int,
                              const ResidualHook* hook) const override {
            check_tokens(tokens);
            const size_t item = static_cast<size_t>(tokens[0] - 1) % item_resid_.size();
            const int t = static_cast<int>(tokens.size()) + 1;
            ForwardResult fr;
            fr.resid.resize(d_model(), t);
            fr.resid.colwise() = item_resid_[item];
            if (hook && hook->layer == 0) hook->fn(fr.resid);
            fr.logits = MatrixXd::Zero(vocab_size(), t);
            const double s = readout_.dot(fr.resid.col(t - 1)) - tau_[item];
            fr.logits(1, t - 1) = 50.0 * s;  // option {1} wins iff projection above tau
            return fr;
        }

      private:
        const PlantedWorld* w_;
        std::vector<VectorXd> item_resid_;
        VectorXd readout_;
        std::vector<double> tau_;
    };

    std::unique_ptr<Backend> backend;
};

inline PlantedWorld make_planted_world(uint64_t seed, int d = 16, int f = 24,
                                       int n_items = 12) {
    PlantedWorld w;
    auto rng = make_rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);

    w.sae.layer = 0;
    w.sae.w_dec.resize(d, f);
    for (int j = 0; j < f; ++j) {
        for (int i = 0; i < d; ++i) w.sae.w_dec(i, j) = nd(rng);
        w.sae.w_dec.col(j).normalize();
    }
    w.sae.w_enc = w.sae.w_dec.transpose();
    w.sae.b_enc = VectorXd::Zero(f);
    w.sae.b_dec = VectorXd::Zero(d);

    std::uniform_int_distribution<int> pick_latent(1, f - 1);  // keep latent 0 silent
    w.planted_latent = pick_latent(rng);

    std::vector<VectorXd> resid;
    std::vector<double> tau;
    for (int i = 0; i < n_items; ++i) {
        VectorXd a = VectorXd::Zero(f);
        const double planted = 3.0 + ud(rng);
        a(w.planted_latent) = planted;
        for (int k = 0; k < 5; ++k) {  // background latents, small and positive
            int j = pick_latent(rng);
            if (j == w.planted_latent) continue;
            a(j) = 0.3 * ud(rng);
        }
        resid.push_back(w.sae.w_dec * a);
        tau.push_back(planted - 1.0);

        TaskItem item;
        item.context = {static_cast<TokenId>(i + 1)};
        item.options = {{1}, {2}};
        item.persona_option = 0;
        item.correct_option = 1;
        item.split = Split::val;
        w.task.items.push_back(std::move(item));
    }
    w.task.persona = "planted";
    VectorXd readout = w.sae.w_dec.col(w.planted_latent);
    w.backend = std::make_unique<PlantedWorld::Backend>(&w, std::move(resid),
                                                        std::move(readout), std::move(tau));
    return w;
}

} // namespace steerkit::testing
