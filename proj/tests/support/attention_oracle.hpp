#pragma once

// Straight-line transcription of the dual-attention equations for one
// example, written with plain loops directly against the parameter tensors.
// Used to cross-check the graph implementation.

#include <cmath>
#include <vector>

#include "esnli/tensor.hpp"

namespace oracles {

struct AttentionSideParams {
    const esnli::Tensor* w1;  // enc_dim × proj_dim
    const esnli::Tensor* b1;  // 1 × proj_dim
    const esnli::Tensor* wc;  // query_dim × proj_dim
    const esnli::Tensor* bc;  // 1 × proj_dim
    const esnli::Tensor* w2;  // enc_dim × value_dim
    const esnli::Tensor* b2;  // 1 × value_dim
};

struct AttentionSideResult {
    std::vector<double> weights;  // one per valid timestep
    std::vector<double> summary;  // value_dim
};

inline std::vector<double> tanh_affine(const std::vector<double>& x, const esnli::Tensor& w,
                                       const esnli::Tensor& b) {
    std::vector<double> out(w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j) {
        double s = b.at(j);
        for (std::size_t i = 0; i < w.rows(); ++i) s += x[i] * w(i, j);
        out[j] = std::tanh(s);
    }
    return out;
}

// states: one row (enc_dim) per timestep, only the first `valid` are real.
inline AttentionSideResult attention_side_reference(const std::vector<std::vector<double>>& states,
                                                    std::size_t valid, const std::vector<double>& query,
                                                    const AttentionSideParams& p) {
    std::vector<std::vector<double>> proj1, proj2;
    for (const auto& s : states) {
        proj1.push_back(tanh_affine(s, *p.w1, *p.b1));
        proj2.push_back(tanh_affine(s, *p.w2, *p.b2));
    }
    std::vector<double> ctx = tanh_affine(query, *p.wc, *p.bc);

    std::vector<double> scores(valid);
    for (std::size_t t = 0; t < valid; ++t) {
        double dot = 0;
        for (std::size_t j = 0; j < ctx.size(); ++j) dot += ctx[j] * proj1[t][j];
        scores[t] = dot;
    }

    double m = scores[0];
    for (double s : scores) m = std::max(m, s);
    double z = 0;
    std::vector<double> weights(valid);
    for (std::size_t t = 0; t < valid; ++t) z += (weights[t] = std::exp(scores[t] - m));
    for (double& w : weights) w /= z;

    std::vector<double> summary(p.w2->cols(), 0.0);
    for (std::size_t t = 0; t < valid; ++t)
        for (std::size_t k = 0; k < summary.size(); ++k) summary[k] += weights[t] * proj2[t][k];
    return {weights, summary};
}

}  // namespace oracles
