#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace bfl {

// Dense feedforward net: rectified-linear hidden layers, affine output.
// weights[l] has shape (dims[l+1] x dims[l]); forward is W x + b per layer.
struct NetworkParams {
    std::vector<int> layer_dims;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    std::size_t layer_count() const { return weights.size(); }
};

// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
inline NetworkParams init_network(const std::vector<int>& layer_dims,
                                  std::mt19937_64& rng) {
    if (layer_dims.size() < 2)
        throw std::invalid_argument("init_network: need at least 2 layer dims");
    for (int d : layer_dims)
        if (d < 1)
            throw std::invalid_argument("init_network: layer dims must be >= 1");

    NetworkParams p;
    p.layer_dims = layer_dims;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        int fan_in = layer_dims[l], fan_out = layer_dims[l + 1];
        double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> u(-bound, bound);
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = u(rng);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return p;
}

// Post-activation outputs of every layer; acts.back() is the network output.
struct ForwardCache {
    std::vector<Eigen::VectorXd> acts;
};

inline Eigen::VectorXd forward(const NetworkParams& p, const Eigen::VectorXd& x,
                               ForwardCache* cache = nullptr) {
    if (x.size() != p.input_dim())
        throw std::invalid_argument("forward: input length " +
                                    std::to_string(x.size()) + " != " +
                                    std::to_string(p.input_dim()));
    Eigen::VectorXd h = x;
    if (cache) cache->acts.assign(1, h);
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        h = p.weights[l] * h + p.biases[l];
        if (l + 1 < p.layer_count()) h = h.cwiseMax(0.0);
        if (cache) cache->acts.push_back(h);
    }
    return h;
}

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

inline Gradients zero_gradients(const NetworkParams& p) {
    Gradients g;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        g.weights.push_back(Eigen::MatrixXd::Zero(p.weights[l].rows(),
                                                  p.weights[l].cols()));
        g.biases.push_back(Eigen::VectorXd::Zero(p.biases[l].size()));
    }
    return g;
}

// Gradient of 0.5 * (target - Q(x)[action])^2 w.r.t. every parameter.
// Final-layer rows feeding other outputs receive zero gradient.
inline Gradients td_gradient(const NetworkParams& p, const Eigen::VectorXd& x,
                             long action, double target) {
    if (action < 0 || action >= p.output_dim())
        throw std::out_of_range("td_gradient: action index out of range");

    ForwardCache cache;
    Eigen::VectorXd q = forward(p, x, &cache);
    double err = target - q[action];  // dLoss/dq_a = -err

    Gradients g = zero_gradients(p);
    const std::size_t L = p.layer_count();
    // Output layer: only row `action` is active.
    double delta_out = -err;
    g.weights[L - 1].row(action) = delta_out * cache.acts[L - 1].transpose();
    g.biases[L - 1][action] = delta_out;
    Eigen::VectorXd delta =
        delta_out * p.weights[L - 1].row(action).transpose();
    for (std::size_t l = L - 1; l-- > 0;) {
        // delta currently holds dLoss/d(post-activation of layer l).
        Eigen::VectorXd dz =
            (cache.acts[l + 1].array() > 0.0).cast<double>() * delta.array();
        g.weights[l] = dz * cache.acts[l].transpose();
        g.biases[l] = dz;
        if (l > 0) delta = p.weights[l].transpose() * dz;
    }
    return g;
}

// In-place descent step theta <- theta - alpha * grad.
inline void apply_update(NetworkParams& p, const Gradients& g, double alpha) {
    if (g.weights.size() != p.layer_count())
        throw std::invalid_argument("apply_update: layer count mismatch");
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        if (g.weights[l].rows() != p.weights[l].rows() ||
            g.weights[l].cols() != p.weights[l].cols() ||
            g.biases[l].size() != p.biases[l].size())
            throw std::invalid_argument("apply_update: shape mismatch at layer " +
                                        std::to_string(l));
        if (!g.weights[l].allFinite() || !g.biases[l].allFinite())
            throw std::runtime_error("apply_update: non-finite gradient at layer " +
                                     std::to_string(l));
        p.weights[l].noalias() -= alpha * g.weights[l];
        p.biases[l] -= alpha * g.biases[l];
        if (!p.weights[l].allFinite() || !p.biases[l].allFinite())
            throw std::runtime_error(
                "apply_update: non-finite parameter at layer " +
                std::to_string(l));
    }
}

// Checkpoint document: { "layer_dims": [...], "weights": [[[...]]],
// "biases": [[...]] }, matrices row-major. nlohmann serializes doubles with
// shortest round-trip decimals, so the round trip is bit-exact.
inline nlohmann::json to_json(const NetworkParams& p) {
    nlohmann::json doc;
    doc["layer_dims"] = p.layer_dims;
    auto& ws = doc["weights"] = nlohmann::json::array();
    for (const auto& w : p.weights) {
        nlohmann::json mat = nlohmann::json::array();
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < w.cols(); ++c) row.push_back(w(r, c));
            mat.push_back(std::move(row));
        }
        ws.push_back(std::move(mat));
    }
    auto& bs = doc["biases"] = nlohmann::json::array();
    for (const auto& b : p.biases) {
        nlohmann::json vec = nlohmann::json::array();
        for (Eigen::Index i = 0; i < b.size(); ++i) vec.push_back(b[i]);
        bs.push_back(std::move(vec));
    }
    return doc;
}

inline NetworkParams network_from_json(const nlohmann::json& doc) {
    if (!doc.contains("layer_dims") || !doc.contains("weights") ||
        !doc.contains("biases"))
        throw std::invalid_argument("checkpoint: missing layer_dims/weights/biases");
    NetworkParams p;
    p.layer_dims = doc.at("layer_dims").get<std::vector<int>>();
    if (p.layer_dims.size() < 2)
        throw std::invalid_argument("checkpoint: need at least 2 layer dims");
    const auto& ws = doc.at("weights");
    const auto& bs = doc.at("biases");
    if (ws.size() != p.layer_dims.size() - 1 || bs.size() != ws.size())
        throw std::invalid_argument("checkpoint: layer count mismatch");
    for (std::size_t l = 0; l + 1 < p.layer_dims.size(); ++l) {
        int rows = p.layer_dims[l + 1], cols = p.layer_dims[l];
        const auto& mat = ws.at(l);
        if (static_cast<int>(mat.size()) != rows)
            throw std::invalid_argument("checkpoint: weight row count mismatch at layer " +
                                        std::to_string(l));
        Eigen::MatrixXd w(rows, cols);
        for (int r = 0; r < rows; ++r) {
            const auto& row = mat.at(r);
            if (static_cast<int>(row.size()) != cols)
                throw std::invalid_argument(
                    "checkpoint: weight column count mismatch at layer " +
                    std::to_string(l));
            for (int c = 0; c < cols; ++c) w(r, c) = row.at(c).get<double>();
        }
        const auto& vec = bs.at(l);
        if (static_cast<int>(vec.size()) != rows)
            throw std::invalid_argument("checkpoint: bias length mismatch at layer " +
                                        std::to_string(l));
        Eigen::VectorXd b(rows);
        for (int r = 0; r < rows; ++r) b[r] = vec.at(r).get<double>();
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    return p;
}

}  // namespace bfl
