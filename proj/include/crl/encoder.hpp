// Trainable relation encoder: a linear map over concatenated entity
// features followed by a two-layer projection head whose output is
// L2-normalized. Gradients are hand-derived; finite_diff_check verifies
// them against central differences.
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crl/linalg.hpp"
#include "crl/rng.hpp"

namespace crl {

struct EncoderConfig {
    std::size_t d_h = 16;  // hidden width; input features have length 2*d_h
    std::size_t d_z = 8;   // embedding width
};

struct EncoderParams {
    std::size_t d_h = 0;
    std::size_t d_z = 0;
    Mat w;        // d_h x 2*d_h
    Vec b;        // d_h
    Mat proj_w1;  // d_h x d_h
    Vec proj_b1;  // d_h
    Mat proj_w2;  // d_z x d_h
    Vec proj_b2;  // d_z

    std::size_t feature_dim() const { return 2 * d_h; }
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
EncoderParams init_params(const EncoderConfig& cfg, Rng& rng);

struct Embedding {
    Vec hidden;  // h, length d_h
    Vec raw;     // pre-normalization projection output, length d_z
    Vec unit;    // raw / ||raw||, length d_z
};

// Gradients, one array per parameter array with identical shapes.
struct GradientSet {
    Mat w;
    Vec b;
    Mat proj_w1;
    Vec proj_b1;
    Mat proj_w2;
    Vec proj_b2;

    bool all_finite() const;
};

GradientSet zero_gradients(const EncoderParams& params);

// h = W x + b. Throws std::invalid_argument on dimension mismatch.
Vec encode(std::span<const double> features, const EncoderParams& params);

// Projection head + normalization. Throws std::invalid_argument if the raw
// projection is exactly the zero vector (normalization undefined).
Embedding project(const Vec& hidden, const EncoderParams& params);

// encode + project in one call.
Embedding embed(std::span<const double> features, const EncoderParams& params);

// Per-example upstream gradients; either vector may be empty (treated as
// zero). `unit` has length d_z, `hidden` length d_h.
struct UpstreamGrad {
    Vec unit;
    Vec hidden;
};

// Accumulates d(loss)/d(params) over the batch by chaining through the
// normalization, the projection head, and the linear map. Recomputes the
// forward pass internally, so params must match the ones used to produce
// the upstream gradients.
GradientSet backward(const std::vector<std::span<const double>>& batch_features,
                     const EncoderParams& params,
                     const std::vector<UpstreamGrad>& upstream);

struct SgdState {
    GradientSet velocity;
};

SgdState make_sgd_state(const EncoderParams& params);

// velocity <- momentum*velocity + grads; params <- params - lr*velocity.
// Throws std::invalid_argument on lr <= 0 or momentum outside [0,1);
// throws std::runtime_error (step aborted, params untouched) on non-finite
// gradient entries.
void apply_update(EncoderParams& params, const GradientSet& grads, double lr, double momentum,
                  SgdState& state);

// Max over parameters of |analytic - central difference| / max(|analytic|,
// |central|, 1e-8). Throws std::runtime_error if the loss is non-finite at
// any perturbed point.
double finite_diff_check(const std::function<double(const EncoderParams&)>& loss_fn,
                         const EncoderParams& params, const GradientSet& analytic, double eps);

}  // namespace crl
