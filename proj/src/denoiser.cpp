#include "vidfill/denoiser.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <sstream>

#include "vidfill/kernels.hpp"
#include "vidfill/rng.hpp"

namespace vidfill::dit {

namespace {

constexpr double kLnEps = 1e-6;
constexpr double kFeatMaxFreq = 200.0;
constexpr std::uint64_t kPromptSeed = 0x76696466696C6Cull;

using Vec = std::vector<double>;

double silu(double x) { return x / (1.0 + std::exp(-x)); }
double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}
double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475)); }
double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * 0.7071067811865475)) +
           x * std::exp(-0.5 * x * x) * 0.3989422804014327;
}

Vec sin_features(double v, std::size_t dim) {
    const std::size_t pairs = dim / 2;
    Vec f(dim);
    for (std::size_t i = 0; i < pairs; ++i) {
        const double expo = pairs > 1 ? static_cast<double>(i) / static_cast<double>(pairs - 1)
                                      : 0.0;
        const double omega = std::exp(std::log(kFeatMaxFreq) * expo);
        f[2 * i] = std::sin(v * omega);
        f[2 * i + 1] = std::cos(v * omega);
    }
    return f;
}

// y = x*W + b for a single row vector x.
void linear_vec(const Vec& x, const Tensor& w, const Tensor& b, Vec& y) {
    const std::size_t din = w.shape[0], dout = w.shape[1];
    y.assign(dout, 0.0);
    for (std::size_t i = 0; i < din; ++i) {
        const double xv = x[i];
        const double* wr = w.data() + i * dout;
        for (std::size_t j = 0; j < dout; ++j) y[j] += xv * wr[j];
    }
    for (std::size_t j = 0; j < dout; ++j) y[j] += b.v[j];
}

// Y = X*W + b over n rows.
void linear_rows(const Vec& x, std::size_t n, const Tensor& w, const Tensor& b, Vec& y) {
    const std::size_t din = w.shape[0], dout = w.shape[1];
    y.assign(n * dout, 0.0);
    kernels::matmul(x.data(), w.data(), y.data(), n, din, dout);
    kernels::parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j < dout; ++j) y[i * dout + j] += b.v[j];
    });
}

// Backward of Y = X*W + b. Accumulates into dw/db, overwrites dx when asked.
void linear_rows_backward(const Vec& x, const Vec& dy, std::size_t n, const Tensor& w,
                          Tensor& dw, Tensor& db, Vec* dx) {
    const std::size_t din = w.shape[0], dout = w.shape[1];
    kernels::matmul(x.data(), dy.data(), dw.data(), din, n, dout, /*trans_a=*/true,
                    /*trans_b=*/false, /*accumulate=*/true);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dout; ++j) db.v[j] += dy[i * dout + j];
    if (dx) {
        dx->assign(n * din, 0.0);
        kernels::matmul(dy.data(), w.data(), dx->data(), n, dout, din, /*trans_a=*/false,
                        /*trans_b=*/true);
    }
}

// LayerNorm without affine. Stores normalized values and 1/std per row.
void layer_norm(const Vec& x, std::size_t n, std::size_t d, Vec& u, Vec& inv_std) {
    u.assign(n * d, 0.0);
    inv_std.assign(n, 0.0);
    kernels::parallel_for(n, [&](std::size_t i) {
        const double* row = x.data() + i * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        inv_std[i] = inv;
        for (std::size_t j = 0; j < d; ++j) u[i * d + j] = (row[j] - mu) * inv;
    });
}

// dx given du, using cached u and inv_std.
void layer_norm_backward(const Vec& du, const Vec& u, const Vec& inv_std, std::size_t n,
                         std::size_t d, Vec& dx) {
    dx.assign(n * d, 0.0);
    kernels::parallel_for(n, [&](std::size_t i) {
        const double* dur = du.data() + i * d;
        const double* ur = u.data() + i * d;
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            m1 += dur[j];
            m2 += dur[j] * ur[j];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j)
            dx[i * d + j] = inv_std[i] * (dur[j] - m1 - ur[j] * m2);
    });
}

struct AttnCache {
    Vec input;            // tokens fed to the QKV projections (n, d)
    Vec q, k, v;          // (n, d)
    std::vector<Vec> a;   // per head (n_q, n_kv) softmax maps
    Vec o;                // concatenated head outputs (n, d)
};

// Multi-head attention. Queries come from `qin` (n_q rows), keys/values from
// `kvin` (n_kv rows of width kv_dim). Returns the projected output (n_q, d).
Vec attention(const NamedTensors& params, const std::string& prefix, const Vec& qin,
              std::size_t n_q, const Vec& kvin, std::size_t n_kv, std::size_t kv_dim,
              const DenoiserConfig& cfg, AttnCache* cache) {
    const std::size_t d = cfg.d_model;
    const std::size_t nh = cfg.n_heads;
    const std::size_t dh = d / nh;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Vec q, k, v;
    linear_rows(qin, n_q, params.at(prefix + ".wq"), params.at(prefix + ".bq"), q);
    linear_rows(kvin, n_kv, params.at(prefix + ".wk"), params.at(prefix + ".bk"), k);
    linear_rows(kvin, n_kv, params.at(prefix + ".wv"), params.at(prefix + ".bv"), v);
    (void)kv_dim;

    Vec o(n_q * d, 0.0);
    std::vector<Vec> amaps(nh);
    Vec qh(n_q * dh), kh(n_kv * dh), vh(n_kv * dh), oh(n_q * dh);
    for (std::size_t h = 0; h < nh; ++h) {
        for (std::size_t i = 0; i < n_q; ++i)
            std::memcpy(qh.data() + i * dh, q.data() + i * d + h * dh, dh * sizeof(double));
        for (std::size_t i = 0; i < n_kv; ++i) {
            std::memcpy(kh.data() + i * dh, k.data() + i * d + h * dh, dh * sizeof(double));
            std::memcpy(vh.data() + i * dh, v.data() + i * d + h * dh, dh * sizeof(double));
        }
        Vec s(n_q * n_kv);
        kernels::matmul(qh.data(), kh.data(), s.data(), n_q, dh, n_kv, false, true);
        for (double& x : s) x *= scale;
        kernels::softmax_rows(s.data(), n_q, n_kv);
        kernels::matmul(s.data(), vh.data(), oh.data(), n_q, n_kv, dh);
        for (std::size_t i = 0; i < n_q; ++i)
            std::memcpy(o.data() + i * d + h * dh, oh.data() + i * dh, dh * sizeof(double));
        amaps[h] = std::move(s);
    }

    Vec out;
    linear_rows(o, n_q, params.at(prefix + ".wo"), params.at(prefix + ".bo"), out);
    if (cache) {
        cache->input = qin;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->a = std::move(amaps);
        cache->o = std::move(o);
    }
    return out;
}

// Backward through `attention`. dqin is overwritten first, then the K/V
// paths are accumulated into dkvin when non-null. Self-attention passes the
// same buffer for both (the input feeds Q, K and V); cross-attention passes
// nullptr since prompts are data, not parameters.
void attention_backward(const NamedTensors& params, const std::string& prefix,
                        const AttnCache& cache, const Vec& dout, std::size_t n_q,
                        const Vec& kvin, std::size_t n_kv, const DenoiserConfig& cfg,
                        NamedTensors& grads, Vec& dqin, Vec* dkvin) {
    const std::size_t d = cfg.d_model;
    const std::size_t nh = cfg.n_heads;
    const std::size_t dh = d / nh;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Vec do_concat;
    linear_rows_backward(cache.o, dout, n_q, params.at(prefix + ".wo"),
                         grads.at(prefix + ".wo"), grads.at(prefix + ".bo"), &do_concat);

    Vec dq(n_q * d, 0.0), dk(n_kv * d, 0.0), dv(n_kv * d, 0.0);
    Vec qh(n_q * dh), kh(n_kv * dh), vh(n_kv * dh), doh(n_q * dh);
    Vec da(n_q * n_kv), ds(n_q * n_kv), dqh(n_q * dh), dkh(n_kv * dh), dvh(n_kv * dh);
    for (std::size_t h = 0; h < nh; ++h) {
        for (std::size_t i = 0; i < n_q; ++i) {
            std::memcpy(qh.data() + i * dh, cache.q.data() + i * d + h * dh, dh * sizeof(double));
            std::memcpy(doh.data() + i * dh, do_concat.data() + i * d + h * dh,
                        dh * sizeof(double));
        }
        for (std::size_t i = 0; i < n_kv; ++i) {
            std::memcpy(kh.data() + i * dh, cache.k.data() + i * d + h * dh, dh * sizeof(double));
            std::memcpy(vh.data() + i * dh, cache.v.data() + i * d + h * dh, dh * sizeof(double));
        }
        const Vec& a = cache.a[h];
        kernels::matmul(doh.data(), vh.data(), da.data(), n_q, dh, n_kv, false, true);
        kernels::matmul(a.data(), doh.data(), dvh.data(), n_kv, n_q, dh, true, false);
        // softmax backward per row
        for (std::size_t i = 0; i < n_q; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n_kv; ++j) dot += da[i * n_kv + j] * a[i * n_kv + j];
            for (std::size_t j = 0; j < n_kv; ++j)
                ds[i * n_kv + j] = a[i * n_kv + j] * (da[i * n_kv + j] - dot);
        }
        for (double& x : ds) x *= scale;
        kernels::matmul(ds.data(), kh.data(), dqh.data(), n_q, n_kv, dh);
        kernels::matmul(ds.data(), qh.data(), dkh.data(), n_kv, n_q, dh, true, false);
        for (std::size_t i = 0; i < n_q; ++i)
            std::memcpy(dq.data() + i * d + h * dh, dqh.data() + i * dh, dh * sizeof(double));
        for (std::size_t i = 0; i < n_kv; ++i) {
            std::memcpy(dk.data() + i * d + h * dh, dkh.data() + i * dh, dh * sizeof(double));
            std::memcpy(dv.data() + i * d + h * dh, dvh.data() + i * dh, dh * sizeof(double));
        }
    }

    linear_rows_backward(cache.input, dq, n_q, params.at(prefix + ".wq"),
                         grads.at(prefix + ".wq"), grads.at(prefix + ".bq"), &dqin);
    if (dkvin) {
        Vec scratch;
        linear_rows_backward(kvin, dk, n_kv, params.at(prefix + ".wk"),
                             grads.at(prefix + ".wk"), grads.at(prefix + ".bk"), &scratch);
        for (std::size_t i = 0; i < scratch.size(); ++i) (*dkvin)[i] += scratch[i];
        linear_rows_backward(kvin, dv, n_kv, params.at(prefix + ".wv"),
                             grads.at(prefix + ".wv"), grads.at(prefix + ".bv"), &scratch);
        for (std::size_t i = 0; i < scratch.size(); ++i) (*dkvin)[i] += scratch[i];
    } else {
        linear_rows_backward(kvin, dk, n_kv, params.at(prefix + ".wk"),
                             grads.at(prefix + ".wk"), grads.at(prefix + ".bk"), nullptr);
        linear_rows_backward(kvin, dv, n_kv, params.at(prefix + ".wv"),
                             grads.at(prefix + ".wv"), grads.at(prefix + ".bv"), nullptr);
    }
}

struct BlockCache {
    Vec x_in;
    Vec u1, um;
    Vec inv1;
    AttnCache attn;
    Vec x_attn;
    Vec u2, inv2;
    AttnCache cross;
    Vec x_cross;
    Vec u3, inv3, u3m;
    Vec h1, h2;
    Vec mod;  // (6*d) modulation values
};

struct ForwardCache {
    std::size_t n = 0;      // token count
    std::size_t gt = 0, gh = 0, gw = 0;
    Vec x0;                 // patchified input (n, in_dim)
    Vec x_pe;               // embedded tokens + position encodings
    Vec tfeat, c0, c1, cvec, a_vec;
    Vec gfeat;
    bool has_guidance = false;
    std::vector<BlockCache> blocks;
    Vec uf, invf, ufm;
    Vec modf;
    Vec y;                  // (n, out_dim)
    Vec prompt;             // (n_txt, d_txt)
};

void check_finite(const Vec& x, std::size_t block_index) {
    for (double v : x)
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "non-finite activation in block " << block_index;
            throw std::runtime_error(os.str());
        }
}

void split_mod(const Vec& mod, std::size_t d, const double** sh1, const double** sc1,
               const double** g1, const double** sh2, const double** sc2, const double** g2) {
    *sh1 = mod.data();
    *sc1 = mod.data() + d;
    *g1 = mod.data() + 2 * d;
    *sh2 = mod.data() + 3 * d;
    *sc2 = mod.data() + 4 * d;
    *g2 = mod.data() + 5 * d;
}

Vec forward_impl(const NamedTensors& params, const DenoiserConfig& cfg,
                 const DenoiserInput& input, ForwardCache& fc) {
    cfg.validate();
    const LatentGrid& z = input.noisy;
    require(z.same_extents(input.cond_video), "forward: noisy/cond_video extent mismatch");
    require(z.t == input.cond_mask.t && z.h == input.cond_mask.h && z.w == input.cond_mask.w,
            "forward: cond_mask extent mismatch");
    require(z.c == cfg.c_lat, "forward: latent channels do not match config");
    require(z.t <= cfg.max_f, "forward: latent frames exceed max_f");
    require(input.timestep >= 0.0 && input.timestep <= 1.0, "forward: timestep out of [0,1]");
    require(input.prompt.n_tokens == cfg.n_txt && input.prompt.dim == cfg.d_txt,
            "forward: prompt embedding extents do not match config");

    const std::size_t d = cfg.d_model;
    std::size_t n = 0;
    fc.x0 = patchify(z, input.cond_video, input.cond_mask, cfg, n);
    fc.n = n;
    fc.gt = z.t / cfg.p_t;
    fc.gh = z.h / cfg.p_h;
    fc.gw = z.w / cfg.p_w;
    fc.prompt = input.prompt.data;

    // token embed + position encodings
    Vec x;
    linear_rows(fc.x0, n, params.at("token_embed.w"), params.at("token_embed.b"), x);
    const Vec pe = position_encodings(fc.gt, fc.gh, fc.gw, d);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += pe[i];
    fc.x_pe = x;

    // conditioning vector from timestep (+ optional guidance)
    fc.tfeat = sin_features(input.timestep, cfg.freq_dim);
    linear_vec(fc.tfeat, params.at("time_embed.w1"), params.at("time_embed.b1"), fc.c0);
    fc.c1.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) fc.c1[j] = silu(fc.c0[j]);
    linear_vec(fc.c1, params.at("time_embed.w2"), params.at("time_embed.b2"), fc.cvec);
    fc.has_guidance = input.guidance.has_value();
    if (fc.has_guidance) {
        fc.gfeat = sin_features(*input.guidance, cfg.freq_dim);
        Vec gproj;
        linear_vec(fc.gfeat, params.at("guidance_embed.w"), params.at("guidance_embed.b"), gproj);
        for (std::size_t j = 0; j < d; ++j) fc.cvec[j] += gproj[j];
    }
    fc.a_vec.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) fc.a_vec[j] = silu(fc.cvec[j]);

    fc.blocks.resize(cfg.depth);
    for (std::size_t b = 0; b < cfg.depth; ++b) {
        BlockCache& bc = fc.blocks[b];
        const std::string bp = "block" + std::to_string(b);
        bc.x_in = x;

        linear_vec(fc.a_vec, params.at(bp + ".mod.w"), params.at(bp + ".mod.b"), bc.mod);
        const double *sh1, *sc1, *g1, *sh2, *sc2, *g2;
        split_mod(bc.mod, d, &sh1, &sc1, &g1, &sh2, &sc2, &g2);

        // self-attention over all spatio-temporal tokens jointly
        layer_norm(x, n, d, bc.u1, bc.inv1);
        bc.um.assign(n * d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                bc.um[i * d + j] = bc.u1[i * d + j] * (1.0 + sc1[j]) + sh1[j];
        const Vec attn_out = attention(params, bp + ".attn", bc.um, n, bc.um, n, d, cfg,
                                       &bc.attn);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) x[i * d + j] += g1[j] * attn_out[i * d + j];
        bc.x_attn = x;

        // cross-attention against prompt tokens
        layer_norm(x, n, d, bc.u2, bc.inv2);
        const Vec cross_out = attention(params, bp + ".cross", bc.u2, n, fc.prompt, cfg.n_txt,
                                        cfg.d_txt, cfg, &bc.cross);
        for (std::size_t i = 0; i < n * d; ++i) x[i] += cross_out[i];
        bc.x_cross = x;

        // pointwise feed-forward
        layer_norm(x, n, d, bc.u3, bc.inv3);
        bc.u3m.assign(n * d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                bc.u3m[i * d + j] = bc.u3[i * d + j] * (1.0 + sc2[j]) + sh2[j];
        linear_rows(bc.u3m, n, params.at(bp + ".mlp.w1"), params.at(bp + ".mlp.b1"), bc.h1);
        bc.h2.assign(bc.h1.size(), 0.0);
        for (std::size_t i = 0; i < bc.h1.size(); ++i) bc.h2[i] = gelu(bc.h1[i]);
        Vec h3;
        linear_rows(bc.h2, n, params.at(bp + ".mlp.w2"), params.at(bp + ".mlp.b2"), h3);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) x[i * d + j] += g2[j] * h3[i * d + j];

        check_finite(x, b);
    }

    // final adaptive norm + output projection
    linear_vec(fc.a_vec, params.at("final.mod.w"), params.at("final.mod.b"), fc.modf);
    layer_norm(x, n, d, fc.uf, fc.invf);
    fc.ufm.assign(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            fc.ufm[i * d + j] = fc.uf[i * d + j] * (1.0 + fc.modf[d + j]) + fc.modf[j];
    linear_rows(fc.ufm, n, params.at("final.w"), params.at("final.b"), fc.y);
    return fc.y;
}

// Full reverse pass; dy is the gradient w.r.t. the (n, out_dim) output rows.
void backward_impl(const NamedTensors& params, const DenoiserConfig& cfg, const ForwardCache& fc,
                   const Vec& dy, NamedTensors& grads) {
    const std::size_t d = cfg.d_model;
    const std::size_t n = fc.n;

    Vec da(d, 0.0);  // grad w.r.t. silu(cvec)

    // final projection
    Vec dufm;
    linear_rows_backward(fc.ufm, dy, n, params.at("final.w"), grads.at("final.w"),
                         grads.at("final.b"), &dufm);
    Vec dmodf(2 * d, 0.0);
    Vec duf(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double g = dufm[i * d + j];
            duf[i * d + j] = g * (1.0 + fc.modf[d + j]);
            dmodf[j] += g;
            dmodf[d + j] += g * fc.uf[i * d + j];
        }
    {
        // modf = a * Wfmod + bfmod
        Tensor& dw = grads.at("final.mod.w");
        Tensor& db = grads.at("final.mod.b");
        const Tensor& w = params.at("final.mod.w");
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < 2 * d; ++j) dw.v[i * 2 * d + j] += fc.a_vec[i] * dmodf[j];
        for (std::size_t j = 0; j < 2 * d; ++j) db.v[j] += dmodf[j];
        for (std::size_t i = 0; i < d; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < 2 * d; ++j) acc += w.v[i * 2 * d + j] * dmodf[j];
            da[i] += acc;
        }
    }
    Vec dx;
    layer_norm_backward(duf, fc.uf, fc.invf, n, d, dx);

    for (std::size_t bi = cfg.depth; bi-- > 0;) {
        const BlockCache& bc = fc.blocks[bi];
        const std::string bp = "block" + std::to_string(bi);
        const double *sh1, *sc1, *g1, *sh2, *sc2, *g2;
        split_mod(bc.mod, d, &sh1, &sc1, &g1, &sh2, &sc2, &g2);
        (void)sh1;
        (void)sh2;
        Vec dmod(6 * d, 0.0);

        // mlp residual: x_out = x_cross + g2 .* h3
        Vec dh3(n * d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                dh3[i * d + j] = dx[i * d + j] * g2[j];
            }
        {
            // recompute h3 rows for the gate gradient
            Vec h3;
            linear_rows(bc.h2, n, params.at(bp + ".mlp.w2"), params.at(bp + ".mlp.b2"), h3);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    dmod[5 * d + j] += dx[i * d + j] * h3[i * d + j];
        }
        Vec dh2;
        linear_rows_backward(bc.h2, dh3, n, params.at(bp + ".mlp.w2"),
                             grads.at(bp + ".mlp.w2"), grads.at(bp + ".mlp.b2"), &dh2);
        Vec dh1(dh2.size(), 0.0);
        for (std::size_t i = 0; i < dh1.size(); ++i) dh1[i] = dh2[i] * gelu_grad(bc.h1[i]);
        Vec du3m;
        linear_rows_backward(bc.u3m, dh1, n, params.at(bp + ".mlp.w1"),
                             grads.at(bp + ".mlp.w1"), grads.at(bp + ".mlp.b1"), &du3m);
        Vec du3(n * d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double g = du3m[i * d + j];
                du3[i * d + j] = g * (1.0 + sc2[j]);
                dmod[3 * d + j] += g;
                dmod[4 * d + j] += g * bc.u3[i * d + j];
            }
        Vec dx_ln3;
        layer_norm_backward(du3, bc.u3, bc.inv3, n, d, dx_ln3);
        for (std::size_t i = 0; i < n * d; ++i) dx[i] += dx_ln3[i];

        // cross residual: x = x_attn + cross_out
        Vec du2;
        attention_backward(params, bp + ".cross", bc.cross, dx, n, fc.prompt, cfg.n_txt, cfg,
                           grads, du2, nullptr);
        Vec dx_ln2;
        layer_norm_backward(du2, bc.u2, bc.inv2, n, d, dx_ln2);
        for (std::size_t i = 0; i < n * d; ++i) dx[i] += dx_ln2[i];

        // self-attention residual: x = x_in + g1 .* attn_out
        Vec dattn(n * d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) dattn[i * d + j] = dx[i * d + j] * g1[j];
        {
            Vec attn_out;
            linear_rows(bc.attn.o, n, params.at(bp + ".attn.wo"), params.at(bp + ".attn.bo"),
                        attn_out);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    dmod[2 * d + j] += dx[i * d + j] * attn_out[i * d + j];
        }
        Vec dum;
        attention_backward(params, bp + ".attn", bc.attn, dattn, n, bc.um, n, cfg, grads, dum,
                           &dum);
        Vec du1(n * d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double g = dum[i * d + j];
                du1[i * d + j] = g * (1.0 + sc1[j]);
                dmod[j] += g;
                dmod[d + j] += g * bc.u1[i * d + j];
            }
        Vec dx_ln1;
        layer_norm_backward(du1, bc.u1, bc.inv1, n, d, dx_ln1);
        for (std::size_t i = 0; i < n * d; ++i) dx[i] += dx_ln1[i];

        // modulation parameters
        {
            Tensor& dw = grads.at(bp + ".mod.w");
            Tensor& db = grads.at(bp + ".mod.b");
            const Tensor& w = params.at(bp + ".mod.w");
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < 6 * d; ++j)
                    dw.v[i * 6 * d + j] += fc.a_vec[i] * dmod[j];
            for (std::size_t j = 0; j < 6 * d; ++j) db.v[j] += dmod[j];
            for (std::size_t i = 0; i < d; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < 6 * d; ++j) acc += w.v[i * 6 * d + j] * dmod[j];
                da[i] += acc;
            }
        }
    }

    // token embedding (position encodings are constants)
    linear_rows_backward(fc.x0, dx, n, params.at("token_embed.w"), grads.at("token_embed.w"),
                         grads.at("token_embed.b"), nullptr);

    // conditioning chain
    Vec dcvec(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) dcvec[j] = da[j] * silu_grad(fc.cvec[j]);
    if (fc.has_guidance) {
        Tensor& dwg = grads.at("guidance_embed.w");
        Tensor& dbg = grads.at("guidance_embed.b");
        for (std::size_t i = 0; i < cfg.freq_dim; ++i)
            for (std::size_t j = 0; j < d; ++j) dwg.v[i * d + j] += fc.gfeat[i] * dcvec[j];
        for (std::size_t j = 0; j < d; ++j) dbg.v[j] += dcvec[j];
    }
    {
        Tensor& dw2 = grads.at("time_embed.w2");
        Tensor& db2 = grads.at("time_embed.b2");
        const Tensor& w2 = params.at("time_embed.w2");
        Vec dc1(d, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) dw2.v[i * d + j] += fc.c1[i] * dcvec[j];
        for (std::size_t j = 0; j < d; ++j) db2.v[j] += dcvec[j];
        for (std::size_t i = 0; i < d; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += w2.v[i * d + j] * dcvec[j];
            dc1[i] = acc;
        }
        Vec dc0(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) dc0[j] = dc1[j] * silu_grad(fc.c0[j]);
        Tensor& dw1 = grads.at("time_embed.w1");
        Tensor& db1 = grads.at("time_embed.b1");
        for (std::size_t i = 0; i < cfg.freq_dim; ++i)
            for (std::size_t j = 0; j < d; ++j) dw1.v[i * d + j] += fc.tfeat[i] * dc0[j];
        for (std::size_t j = 0; j < d; ++j) db1.v[j] += dc0[j];
    }
}

void add_param(NamedTensors& p, const std::string& name, std::vector<std::size_t> shape) {
    p.add(name, std::move(shape));
}

NamedTensors make_param_layout(const DenoiserConfig& cfg) {
    NamedTensors p;
    const std::size_t d = cfg.d_model;
    const std::size_t m = cfg.mlp_ratio * d;
    add_param(p, "token_embed.w", {cfg.in_patch_dim(), d});
    add_param(p, "token_embed.b", {d});
    add_param(p, "time_embed.w1", {cfg.freq_dim, d});
    add_param(p, "time_embed.b1", {d});
    add_param(p, "time_embed.w2", {d, d});
    add_param(p, "time_embed.b2", {d});
    add_param(p, "guidance_embed.w", {cfg.freq_dim, d});
    add_param(p, "guidance_embed.b", {d});
    for (std::size_t b = 0; b < cfg.depth; ++b) {
        const std::string bp = "block" + std::to_string(b);
        add_param(p, bp + ".mod.w", {d, 6 * d});
        add_param(p, bp + ".mod.b", {6 * d});
        for (const char* nm : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
            add_param(p, bp + nm, {d, d});
        for (const char* nm : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"})
            add_param(p, bp + nm, {d});
        add_param(p, bp + ".cross.wq", {d, d});
        add_param(p, bp + ".cross.bq", {d});
        add_param(p, bp + ".cross.wk", {cfg.d_txt, d});
        add_param(p, bp + ".cross.bk", {d});
        add_param(p, bp + ".cross.wv", {cfg.d_txt, d});
        add_param(p, bp + ".cross.bv", {d});
        add_param(p, bp + ".cross.wo", {d, d});
        add_param(p, bp + ".cross.bo", {d});
        add_param(p, bp + ".mlp.w1", {d, m});
        add_param(p, bp + ".mlp.b1", {m});
        add_param(p, bp + ".mlp.w2", {m, d});
        add_param(p, bp + ".mlp.b2", {d});
    }
    add_param(p, "final.mod.w", {d, 2 * d});
    add_param(p, "final.mod.b", {2 * d});
    add_param(p, "final.w", {d, cfg.out_patch_dim()});
    add_param(p, "final.b", {cfg.out_patch_dim()});
    return p;
}

bool zero_initialized(const std::string& name) {
    return name.rfind("guidance_embed", 0) == 0 || name.rfind("final.", 0) == 0 ||
           name.find(".mod.") != std::string::npos || name.find(".cross.wo") != std::string::npos ||
           name.find(".cross.bo") != std::string::npos;
}

}  // namespace

void DenoiserConfig::validate() const {
    require(d_model % 8 == 0, "config: d_model must be a multiple of 8");
    require(d_model % n_heads == 0, "config: d_model must divide by n_heads");
    require(depth >= 1, "config: depth must be >= 1");
    require(max_f >= 1, "config: max_f must be >= 1");
    require(p_t >= 1 && p_h >= 1 && p_w >= 1, "config: patch extents must be >= 1");
    require(freq_dim >= 2 && freq_dim % 2 == 0, "config: freq_dim must be even and >= 2");
    require(d_txt >= 1 && n_txt >= 1, "config: prompt extents must be >= 1");
    require(c_lat >= 1, "config: c_lat must be >= 1");
    require(mlp_ratio >= 1, "config: mlp_ratio must be >= 1");
}

PromptEmbedding embed_prompt(const std::string& text, std::size_t d_txt, std::size_t n_txt) {
    std::string src = text;
    bool blank = true;
    for (char ch : src)
        if (!std::isspace(static_cast<unsigned char>(ch))) blank = false;
    if (blank) src = "background scene";

    std::vector<std::string> words;
    std::istringstream is(src);
    std::string tok;
    while (is >> tok) words.push_back(tok);

    PromptEmbedding p = PromptEmbedding::zeros(n_txt, d_txt);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_txt));
    for (std::size_t i = 0; i < n_txt && i < words.size(); ++i) {
        Rng rng(derive_seed(kPromptSeed, words[i], i));
        for (std::size_t j = 0; j < d_txt; ++j) p.data[i * d_txt + j] = rng.normal() * scale;
    }
    return p;
}

NamedTensors init_params(const DenoiserConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    NamedTensors p = make_param_layout(cfg);
    for (std::size_t i = 0; i < p.count(); ++i) {
        const std::string& name = p.name(i);
        Tensor& t = p.tensor(i);
        if (zero_initialized(name) || t.shape.size() == 1) continue;
        Rng rng(derive_seed(seed, name));
        const double std = 1.0 / std::sqrt(static_cast<double>(t.shape[0]));
        for (double& x : t.v) x = rng.normal() * std;
    }
    return p;
}

NamedTensors random_params(const DenoiserConfig& cfg, std::uint64_t seed, double scale) {
    cfg.validate();
    NamedTensors p = make_param_layout(cfg);
    for (std::size_t i = 0; i < p.count(); ++i) {
        Tensor& t = p.tensor(i);
        Rng rng(derive_seed(seed, p.name(i)));
        if (t.shape.size() == 1) {
            for (double& x : t.v) x = rng.normal() * 0.05;
        } else {
            const double std = scale / std::sqrt(static_cast<double>(t.shape[0]));
            for (double& x : t.v) x = rng.normal() * std;
        }
    }
    return p;
}

std::size_t param_count(const NamedTensors& params) { return params.total_scalars(); }

std::vector<double> patchify(const LatentGrid& noisy, const LatentGrid& cond_video,
                             const LatentMask& cond_mask, const DenoiserConfig& cfg,
                             std::size_t& n_tokens_out) {
    if (noisy.t % cfg.p_t != 0)
        throw std::invalid_argument("patchify: t not divisible by p_t");
    if (noisy.h % cfg.p_h != 0)
        throw std::invalid_argument("patchify: h not divisible by p_h");
    if (noisy.w % cfg.p_w != 0)
        throw std::invalid_argument("patchify: w not divisible by p_w");

    const std::size_t gt = noisy.t / cfg.p_t, gh = noisy.h / cfg.p_h, gw = noisy.w / cfg.p_w;
    const std::size_t n = gt * gh * gw;
    const std::size_t cell_dim = 2 * cfg.c_lat + 1;
    const std::size_t in_dim = cfg.in_patch_dim();
    std::vector<double> x(n * in_dim, 0.0);
    n_tokens_out = n;

    kernels::parallel_for(n, [&](std::size_t tok) {
        const std::size_t ti = tok / (gh * gw);
        const std::size_t yi = (tok / gw) % gh;
        const std::size_t xi = tok % gw;
        double* row = x.data() + tok * in_dim;
        for (std::size_t dt = 0; dt < cfg.p_t; ++dt)
            for (std::size_t dy = 0; dy < cfg.p_h; ++dy)
                for (std::size_t dx = 0; dx < cfg.p_w; ++dx) {
                    const std::size_t t = ti * cfg.p_t + dt;
                    const std::size_t y = yi * cfg.p_h + dy;
                    const std::size_t xx = xi * cfg.p_w + dx;
                    double* cell = row + ((dt * cfg.p_h + dy) * cfg.p_w + dx) * cell_dim;
                    for (std::size_t c = 0; c < cfg.c_lat; ++c) cell[c] = noisy.at(t, y, xx, c);
                    for (std::size_t c = 0; c < cfg.c_lat; ++c)
                        cell[cfg.c_lat + c] = cond_video.at(t, y, xx, c);
                    cell[2 * cfg.c_lat] = static_cast<double>(cond_mask.at(t, y, xx));
                }
    });
    return x;
}

LatentGrid unpatchify(const std::vector<double>& tokens, std::size_t t, std::size_t h,
                      std::size_t w, const DenoiserConfig& cfg) {
    const std::size_t gt = t / cfg.p_t, gh = h / cfg.p_h, gw = w / cfg.p_w;
    const std::size_t n = gt * gh * gw;
    const std::size_t out_dim = cfg.out_patch_dim();
    require(tokens.size() == n * out_dim, "unpatchify: token buffer size mismatch");
    LatentGrid out(t, h, w, cfg.c_lat);
    kernels::parallel_for(n, [&](std::size_t tok) {
        const std::size_t ti = tok / (gh * gw);
        const std::size_t yi = (tok / gw) % gh;
        const std::size_t xi = tok % gw;
        const double* row = tokens.data() + tok * out_dim;
        for (std::size_t dt = 0; dt < cfg.p_t; ++dt)
            for (std::size_t dy = 0; dy < cfg.p_h; ++dy)
                for (std::size_t dx = 0; dx < cfg.p_w; ++dx) {
                    const double* cell = row + ((dt * cfg.p_h + dy) * cfg.p_w + dx) * cfg.c_lat;
                    for (std::size_t c = 0; c < cfg.c_lat; ++c)
                        out.at(ti * cfg.p_t + dt, yi * cfg.p_h + dy, xi * cfg.p_w + dx, c) =
                            cell[c];
                }
    });
    return out;
}

std::vector<double> position_encodings(std::size_t gt, std::size_t gh, std::size_t gw,
                                       std::size_t d_model) {
    const std::size_t n = gt * gh * gw;
    const std::size_t dt = d_model / 2, dh = d_model / 4, dw = d_model / 4;
    std::vector<double> pe(n * d_model, 0.0);
    auto fill_axis = [](double pos, double* dst, std::size_t dim) {
        const std::size_t pairs = dim / 2;
        for (std::size_t i = 0; i < pairs; ++i) {
            const double omega =
                std::exp(-std::log(10000.0) * static_cast<double>(i) /
                         std::max<std::size_t>(pairs, 1));
            dst[2 * i] = std::sin(pos * omega);
            dst[2 * i + 1] = std::cos(pos * omega);
        }
    };
    for (std::size_t tok = 0; tok < n; ++tok) {
        const std::size_t ti = tok / (gh * gw);
        const std::size_t yi = (tok / gw) % gh;
        const std::size_t xi = tok % gw;
        double* row = pe.data() + tok * d_model;
        fill_axis(static_cast<double>(ti), row, dt);
        fill_axis(static_cast<double>(yi), row + dt, dh);
        fill_axis(static_cast<double>(xi), row + dt + dh, dw);
    }
    return pe;
}

std::vector<double> self_attention(const std::vector<double>& tokens, std::size_t n,
                                   const NamedTensors& params, const std::string& prefix,
                                   const DenoiserConfig& cfg) {
    return attention(params, prefix, tokens, n, tokens, n, cfg.d_model, cfg, nullptr);
}

LatentGrid forward(const NamedTensors& params, const DenoiserConfig& cfg,
                   const DenoiserInput& input) {
    ForwardCache fc;
    const Vec y = forward_impl(params, cfg, input, fc);
    return unpatchify(y, input.noisy.t, input.noisy.h, input.noisy.w, cfg);
}

double focal_loss(const LatentGrid& pred, const LatentGrid& target, const HoleMap& hole,
                  int stage) {
    require(stage == 1 || stage == 2, "focal_loss: stage must be 1 or 2");
    require(pred.same_extents(target), "focal_loss: extent mismatch");
    if (stage == 2)
        require(hole.t == pred.t && hole.h == pred.h && hole.w == pred.w,
                "focal_loss: hole map extent mismatch");
    const std::size_t numel = pred.size();
    const std::size_t c = pred.c;
    const double loss = kernels::block_sum_map(numel, [&](std::size_t i) {
        const double r = pred.data[i] - target.data[i];
        double wgt = 1.0;
        if (stage == 2) wgt += static_cast<double>(hole.data[i / c]);
        return wgt * r * r;
    }) / static_cast<double>(numel);
    if (!std::isfinite(loss)) throw std::runtime_error("focal_loss: non-finite loss");
    return loss;
}

std::pair<double, NamedTensors> loss_and_gradients(const NamedTensors& params,
                                                   const DenoiserConfig& cfg,
                                                   std::span<const TrainSample> batch,
                                                   int stage) {
    require(stage == 1 || stage == 2, "loss_and_gradients: stage must be 1 or 2");
    require(!batch.empty(), "loss_and_gradients: empty batch");

    NamedTensors grads = params.zeros_like();
    double total_loss = 0.0;
    for (const TrainSample& sample : batch) {
        ForwardCache fc;
        const Vec y = forward_impl(params, cfg, sample.input, fc);
        const LatentGrid pred = unpatchify(y, sample.input.noisy.t, sample.input.noisy.h,
                                           sample.input.noisy.w, cfg);
        require(pred.same_extents(sample.target), "loss_and_gradients: target extent mismatch");

        const std::size_t numel = pred.size();
        const std::size_t c = pred.c;
        LatentGrid dpred(pred.t, pred.h, pred.w, pred.c);
        const double loss = kernels::block_sum_map(numel, [&](std::size_t i) {
            const double r = pred.data[i] - sample.target.data[i];
            double wgt = 1.0;
            if (stage == 2) wgt += static_cast<double>(sample.hole.data[i / c]);
            dpred.data[i] = 2.0 * wgt * r / static_cast<double>(numel);
            return wgt * r * r;
        }) / static_cast<double>(numel);
        if (!std::isfinite(loss)) throw std::runtime_error("loss_and_gradients: non-finite loss");
        total_loss += loss;

        // map grid gradient back to token-row layout
        const std::size_t gt = pred.t / cfg.p_t, gh = pred.h / cfg.p_h, gw = pred.w / cfg.p_w;
        const std::size_t n_tokens = gt * gh * gw;
        Vec dy(n_tokens * cfg.out_patch_dim(), 0.0);
        for (std::size_t tok = 0; tok < n_tokens; ++tok) {
            const std::size_t ti = tok / (gh * gw);
            const std::size_t yi = (tok / gw) % gh;
            const std::size_t xi = tok % gw;
            double* row = dy.data() + tok * cfg.out_patch_dim();
            for (std::size_t dt = 0; dt < cfg.p_t; ++dt)
                for (std::size_t dyx = 0; dyx < cfg.p_h; ++dyx)
                    for (std::size_t dxx = 0; dxx < cfg.p_w; ++dxx) {
                        double* cell =
                            row + ((dt * cfg.p_h + dyx) * cfg.p_w + dxx) * cfg.c_lat;
                        for (std::size_t ch = 0; ch < cfg.c_lat; ++ch)
                            cell[ch] = dpred.at(ti * cfg.p_t + dt, yi * cfg.p_h + dyx,
                                                xi * cfg.p_w + dxx, ch);
                    }
        }
        backward_impl(params, cfg, fc, dy, grads);
    }

    const double inv_b = 1.0 / static_cast<double>(batch.size());
    grads.scale(inv_b);
    return {total_loss * inv_b, std::move(grads)};
}

}  // namespace vidfill::dit
