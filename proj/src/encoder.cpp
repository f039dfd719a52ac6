#include "crl/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace crl {

namespace {

void fill_uniform(std::span<double> out, double bound, Rng& rng) {
    for (double& v : out) v = rng.uniform(-bound, bound);
}

struct ParamView {
    double* data;
    std::size_t size;
};

std::vector<ParamView> views(EncoderParams& p) {
    return {{p.w.data.data(), p.w.data.size()},
            {p.b.data(), p.b.size()},
            {p.proj_w1.data.data(), p.proj_w1.data.size()},
            {p.proj_b1.data(), p.proj_b1.size()},
            {p.proj_w2.data.data(), p.proj_w2.data.size()},
            {p.proj_b2.data(), p.proj_b2.size()}};
}

struct ConstParamView {
    const double* data;
    std::size_t size;
};

std::vector<ConstParamView> views(const GradientSet& g) {
    return {{g.w.data.data(), g.w.data.size()},
            {g.b.data(), g.b.size()},
            {g.proj_w1.data.data(), g.proj_w1.data.size()},
            {g.proj_b1.data(), g.proj_b1.size()},
            {g.proj_w2.data.data(), g.proj_w2.data.size()},
            {g.proj_b2.data(), g.proj_b2.size()}};
}

std::vector<ParamView> views(GradientSet& g) {
    return {{g.w.data.data(), g.w.data.size()},
            {g.b.data(), g.b.size()},
            {g.proj_w1.data.data(), g.proj_w1.data.size()},
            {g.proj_b1.data(), g.proj_b1.size()},
            {g.proj_w2.data.data(), g.proj_w2.data.size()},
            {g.proj_b2.data(), g.proj_b2.size()}};
}

}  // namespace

EncoderParams init_params(const EncoderConfig& cfg, Rng& rng) {
    if (cfg.d_h == 0 || cfg.d_z == 0)
        throw std::invalid_argument("encoder: d_h and d_z must be positive");
    EncoderParams p;
    p.d_h = cfg.d_h;
    p.d_z = cfg.d_z;
    p.w = Mat(cfg.d_h, 2 * cfg.d_h);
    p.b = Vec(cfg.d_h, 0.0);
    p.proj_w1 = Mat(cfg.d_h, cfg.d_h);
    p.proj_b1 = Vec(cfg.d_h, 0.0);
    p.proj_w2 = Mat(cfg.d_z, cfg.d_h);
    p.proj_b2 = Vec(cfg.d_z, 0.0);

    const double bound_w = 1.0 / std::sqrt(static_cast<double>(2 * cfg.d_h));
    const double bound_p = 1.0 / std::sqrt(static_cast<double>(cfg.d_h));
    fill_uniform(p.w.data, bound_w, rng);
    fill_uniform(p.b, bound_w, rng);
    fill_uniform(p.proj_w1.data, bound_p, rng);
    fill_uniform(p.proj_b1, bound_p, rng);
    fill_uniform(p.proj_w2.data, bound_p, rng);
    fill_uniform(p.proj_b2, bound_p, rng);
    return p;
}

bool GradientSet::all_finite() const {
    for (const auto& v : views(*this))
        for (std::size_t i = 0; i < v.size; ++i)
            if (!std::isfinite(v.data[i])) return false;
    return true;
}

GradientSet zero_gradients(const EncoderParams& params) {
    GradientSet g;
    g.w = Mat(params.w.rows, params.w.cols);
    g.b = Vec(params.b.size(), 0.0);
    g.proj_w1 = Mat(params.proj_w1.rows, params.proj_w1.cols);
    g.proj_b1 = Vec(params.proj_b1.size(), 0.0);
    g.proj_w2 = Mat(params.proj_w2.rows, params.proj_w2.cols);
    g.proj_b2 = Vec(params.proj_b2.size(), 0.0);
    return g;
}

Vec encode(std::span<const double> features, const EncoderParams& params) {
    if (features.size() != params.feature_dim())
        throw std::invalid_argument("encode: feature length " + std::to_string(features.size()) +
                                    " does not match 2*d_h = " +
                                    std::to_string(params.feature_dim()));
    Vec h(params.d_h);
    for (std::size_t r = 0; r < params.d_h; ++r)
        h[r] = dot(params.w.row(r), features) + params.b[r];
    return h;
}

Embedding project(const Vec& hidden, const EncoderParams& params) {
    if (hidden.size() != params.d_h)
        throw std::invalid_argument("project: hidden length does not match d_h");
    Embedding e;
    e.hidden = hidden;

    Vec u(params.d_h);
    for (std::size_t r = 0; r < params.d_h; ++r)
        u[r] = dot(params.proj_w1.row(r), std::span<const double>(hidden)) + params.proj_b1[r];
    Vec rect(params.d_h);
    for (std::size_t r = 0; r < params.d_h; ++r) rect[r] = u[r] > 0.0 ? u[r] : 0.0;

    e.raw = Vec(params.d_z);
    for (std::size_t r = 0; r < params.d_z; ++r)
        e.raw[r] = dot(params.proj_w2.row(r), std::span<const double>(rect)) + params.proj_b2[r];

    const double n = std::sqrt(squared_norm(e.raw));
    if (n == 0.0)
        throw std::invalid_argument("project: raw projection is the zero vector");
    e.unit = Vec(params.d_z);
    for (std::size_t r = 0; r < params.d_z; ++r) e.unit[r] = e.raw[r] / n;
    return e;
}

Embedding embed(std::span<const double> features, const EncoderParams& params) {
    return project(encode(features, params), params);
}

GradientSet backward(const std::vector<std::span<const double>>& batch_features,
                     const EncoderParams& params, const std::vector<UpstreamGrad>& upstream) {
    if (batch_features.size() != upstream.size())
        throw std::invalid_argument("backward: batch and upstream sizes differ");
    GradientSet g = zero_gradients(params);

    for (std::size_t ex = 0; ex < batch_features.size(); ++ex) {
        const auto& x = batch_features[ex];
        const auto& up = upstream[ex];
        if (!up.unit.empty() && up.unit.size() != params.d_z)
            throw std::invalid_argument("backward: unit gradient length does not match d_z");
        if (!up.hidden.empty() && up.hidden.size() != params.d_h)
            throw std::invalid_argument("backward: hidden gradient length does not match d_h");

        // Forward pass with caches.
        Vec h = encode(x, params);
        Vec u(params.d_h);
        for (std::size_t r = 0; r < params.d_h; ++r)
            u[r] = dot(params.proj_w1.row(r), std::span<const double>(h)) + params.proj_b1[r];
        Vec rect(params.d_h);
        for (std::size_t r = 0; r < params.d_h; ++r) rect[r] = u[r] > 0.0 ? u[r] : 0.0;
        Vec raw(params.d_z);
        for (std::size_t r = 0; r < params.d_z; ++r)
            raw[r] = dot(params.proj_w2.row(r), std::span<const double>(rect)) + params.proj_b2[r];

        Vec g_hidden(params.d_h, 0.0);
        if (!up.hidden.empty())
            for (std::size_t r = 0; r < params.d_h; ++r) g_hidden[r] = up.hidden[r];

        if (!up.unit.empty()) {
            const double n = std::sqrt(squared_norm(raw));
            if (n == 0.0)
                throw std::invalid_argument("backward: raw projection is the zero vector");
            Vec z(params.d_z);
            for (std::size_t r = 0; r < params.d_z; ++r) z[r] = raw[r] / n;

            // d z / d raw = (I - z z^T) / n
            const double gz_dot_z = dot(up.unit, z);
            Vec g_raw(params.d_z);
            for (std::size_t r = 0; r < params.d_z; ++r)
                g_raw[r] = (up.unit[r] - gz_dot_z * z[r]) / n;

            // Second affine layer.
            Vec g_rect(params.d_h, 0.0);
            for (std::size_t r = 0; r < params.d_z; ++r) {
                g.proj_b2[r] += g_raw[r];
                for (std::size_t c = 0; c < params.d_h; ++c) {
                    g.proj_w2.at(r, c) += g_raw[r] * rect[c];
                    g_rect[c] += params.proj_w2.at(r, c) * g_raw[r];
                }
            }

            // Rectifier.
            Vec g_u(params.d_h);
            for (std::size_t r = 0; r < params.d_h; ++r) g_u[r] = u[r] > 0.0 ? g_rect[r] : 0.0;

            // First affine layer.
            for (std::size_t r = 0; r < params.d_h; ++r) {
                g.proj_b1[r] += g_u[r];
                for (std::size_t c = 0; c < params.d_h; ++c) {
                    g.proj_w1.at(r, c) += g_u[r] * h[c];
                    g_hidden[c] += params.proj_w1.at(r, c) * g_u[r];
                }
            }
        }

        // Linear map.
        for (std::size_t r = 0; r < params.d_h; ++r) {
            g.b[r] += g_hidden[r];
            for (std::size_t c = 0; c < params.feature_dim(); ++c)
                g.w.at(r, c) += g_hidden[r] * x[c];
        }
    }
    return g;
}

SgdState make_sgd_state(const EncoderParams& params) { return SgdState{zero_gradients(params)}; }

void apply_update(EncoderParams& params, const GradientSet& grads, double lr, double momentum,
                  SgdState& state) {
    if (lr <= 0.0) throw std::invalid_argument("apply_update: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("apply_update: momentum must be in [0,1)");
    if (!grads.all_finite())
        throw std::runtime_error("apply_update: non-finite gradient entries, step aborted");

    auto pv = views(params);
    auto gv = views(grads);
    auto vel = views(state.velocity);
    for (std::size_t a = 0; a < pv.size(); ++a) {
        if (pv[a].size != gv[a].size)
            throw std::invalid_argument("apply_update: gradient shape mismatch");
        for (std::size_t i = 0; i < pv[a].size; ++i) {
            vel[a].data[i] = momentum * vel[a].data[i] + gv[a].data[i];
            pv[a].data[i] -= lr * vel[a].data[i];
        }
    }
}

double finite_diff_check(const std::function<double(const EncoderParams&)>& loss_fn,
                         const EncoderParams& params, const GradientSet& analytic, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("finite_diff_check: eps must be positive");
    EncoderParams work = params;
    auto pv = views(work);
    auto gv = views(analytic);

    double worst = 0.0;
    for (std::size_t a = 0; a < pv.size(); ++a) {
        if (pv[a].size != gv[a].size)
            throw std::invalid_argument("finite_diff_check: gradient shape mismatch");
        for (std::size_t i = 0; i < pv[a].size; ++i) {
            const double saved = pv[a].data[i];
            pv[a].data[i] = saved + eps;
            const double lp = loss_fn(work);
            pv[a].data[i] = saved - eps;
            const double lm = loss_fn(work);
            pv[a].data[i] = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw std::runtime_error("finite_diff_check: non-finite loss at perturbed point");
            const double central = (lp - lm) / (2.0 * eps);
            const double ana = gv[a].data[i];
            const double denom = std::max({std::fabs(ana), std::fabs(central), 1e-8});
            worst = std::max(worst, std::fabs(ana - central) / denom);
        }
    }
    return worst;
}

}  // namespace crl
