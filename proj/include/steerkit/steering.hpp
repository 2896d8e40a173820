#pragma once

#include <string>

#include "steerkit/backend.hpp"
#include "steerkit/datasets.hpp"
#include "steerkit/io.hpp"
#include "steerkit/sae.hpp"

namespace steerkit {

// A persona direction in residual space. `unit` is the normalized direction;
// `raw_norm` preserves the construction magnitude for the dense-injection
// baseline. `sign` is the alignment convention the optimizer steers toward
// (+1 pushes prompt representations toward the persona side, -1 away); it is
// fit on validation, never assumed.
struct SteeringVector {
    std::string persona;
    std::string method;  // "repr" | "sae"
    int layer = 0;
    Pooling pooling = Pooling::last_token;
    double sign = 1.0;
    double raw_norm = 0.0;
    VectorXd unit;

    VectorXd raw() const { return unit * raw_norm; }

    void validate() const {
        if (std::abs(unit.norm() - 1.0) > 1e-9) throw Error("steering vector is not unit-norm");
        if (!(raw_norm > 0)) throw Error("steering vector raw norm must be positive");
        if (sign != 1.0 && sign != -1.0) throw Error("steering vector sign must be +1 or -1");
    }

    void save(const std::string& path) const {
        json j;
        j["persona"] = persona;
        j["method"] = method;
        j["layer"] = layer;
        j["pooling"] = to_string(pooling);
        j["sign"] = sign;
        j["raw_norm"] = raw_norm;
        j["unit_vector"] = std::vector<double>(unit.data(), unit.data() + unit.size());
        write_json_file(path, j);
    }
    static SteeringVector load(const std::string& path) {
        json j = read_json_file(path);
        SteeringVector v;
        v.persona = j.at("persona");
        v.method = j.at("method");
        v.layer = j.at("layer");
        v.pooling = pooling_from_string(j.at("pooling").get<std::string>());
        v.sign = j.at("sign");
        v.raw_norm = j.at("raw_norm");
        auto vals = j.at("unit_vector").get<std::vector<double>>();
        v.unit = Eigen::Map<const VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
        v.validate();
        return v;
    }
};

namespace detail {

inline SteeringVector finish_vector(VectorXd raw, const std::string& method,
                                    const std::string& persona, int layer, Pooling pooling) {
    const double norm = raw.norm();
    if (norm < 1e-9)
        throw ZeroVector("contrast sets are indistinguishable (|v| = " + fmt_double(norm) + ")");
    SteeringVector v;
    v.persona = persona;
    v.method = method;
    v.layer = layer;
    v.pooling = pooling;
    v.raw_norm = norm;
    v.unit = raw / norm;
    return v;
}

} // namespace detail

// Mean difference between pooled activations of persona-exhibiting and
// persona-free examples.
inline SteeringVector repr_steering_vector(const ContrastDataset& contrast,
                                           const ModelBackend& backend, int layer,
                                           Pooling pooling) {
    contrast.validate();
    VectorXd mean_pos = VectorXd::Zero(backend.d_model());
    for (const auto& s : contrast.positives) mean_pos += backend.activation(s, layer, pooling);
    mean_pos /= static_cast<double>(contrast.positives.size());
    VectorXd mean_neg = VectorXd::Zero(backend.d_model());
    for (const auto& s : contrast.negatives) mean_neg += backend.activation(s, layer, pooling);
    mean_neg /= static_cast<double>(contrast.negatives.size());
    return detail::finish_vector(mean_pos - mean_neg, "repr", contrast.persona, layer, pooling);
}

// Sum of encoder directions of the ranked top-K latents, each weighted by the
// latent's mean-activation difference between the contrast sides.
inline SteeringVector sae_steering_vector(const SaeModel& sae, const LatentRanking& ranking,
                                          const ContrastDataset& contrast,
                                          const ModelBackend& backend,
                                          Pooling pooling = Pooling::last_token) {
    contrast.validate();
    if (sae.dim() != backend.d_model())
        throw DimensionMismatch("sae width " + std::to_string(sae.dim()) +
                                " != model width " + std::to_string(backend.d_model()));
    const auto top = ranking.top_k();
    if (top.empty()) throw Error("sae_steering_vector: empty latent selection");
    VectorXd abar_pos = mean_latent_activations(sae, backend, contrast.positives, pooling);
    VectorXd abar_neg = mean_latent_activations(sae, backend, contrast.negatives, pooling);
    VectorXd raw = VectorXd::Zero(sae.dim());
    for (int i : top) raw += sae.w_enc.row(i).transpose() * (abar_pos(i) - abar_neg(i));
    return detail::finish_vector(std::move(raw), "sae", contrast.persona, sae.layer, pooling);
}

// Dense steering baseline: inject alpha * raw v into the residual stream at
// the vector's layer during every forward pass.
inline ResidualHook dense_injection_hook(const SteeringVector& v, double alpha) {
    VectorXd shift = alpha * v.raw();
    return ResidualHook{v.layer, [shift](MatrixXd& resid) { resid.colwise() += shift; }};
}

} // namespace steerkit
