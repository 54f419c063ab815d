#include "auscsed/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "auscsed/error.hpp"
#include "auscsed/model_cache.hpp"
#include "auscsed/rng.hpp"

namespace auscsed {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kPosteriorClamp = 1e-12;

// ---------------------------------------------------------------------------
// Initializers

Tensor glorot_uniform(Rng& rng, std::vector<size_t> shape, size_t fan_in, size_t fan_out) {
    Tensor t(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
    return t;
}

// Householder QR of a seeded Gaussian matrix; returns Q with the sign fixed
// so the decomposition (and therefore the init) is unique.
Tensor orthogonal(Rng& rng, size_t n) {
    std::vector<std::vector<double>> a(n, std::vector<double>(n));
    for (auto& row : a)
        for (auto& v : row) v = rng.gaussian();

    std::vector<std::vector<double>> q(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) q[i][i] = 1.0;

    for (size_t k = 0; k < n; ++k) {
        double norm = 0.0;
        for (size_t i = k; i < n; ++i) norm += a[i][k] * a[i][k];
        norm = std::sqrt(norm);
        if (norm < 1e-300) continue;
        std::vector<double> v(n, 0.0);
        const double alpha = a[k][k] >= 0 ? -norm : norm;
        v[k] = a[k][k] - alpha;
        for (size_t i = k + 1; i < n; ++i) v[i] = a[i][k];
        double vnorm2 = 0.0;
        for (size_t i = k; i < n; ++i) vnorm2 += v[i] * v[i];
        if (vnorm2 < 1e-300) continue;
        // Apply H = I - 2vv^T/(v^Tv) to A (left) and accumulate into Q.
        for (size_t j = k; j < n; ++j) {
            double dot = 0.0;
            for (size_t i = k; i < n; ++i) dot += v[i] * a[i][j];
            const double f = 2.0 * dot / vnorm2;
            for (size_t i = k; i < n; ++i) a[i][j] -= f * v[i];
        }
        for (size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (size_t i = k; i < n; ++i) dot += v[i] * q[j][i];
            const double f = 2.0 * dot / vnorm2;
            for (size_t i = k; i < n; ++i) q[j][i] -= f * v[i];
        }
    }
    // Q columns ordered so R has a positive diagonal.
    Tensor out({n, n});
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            const double sign = a[j][j] >= 0.0 ? 1.0 : -1.0;
            out.at(i, j) = q[i][j] * sign;
        }
    return out;
}

void add_bn_tensors(ModelWeights& w, const std::string& prefix, size_t channels) {
    Tensor gamma({channels});
    gamma.fill(1.0);
    w.add(prefix + ".bn.gamma", std::move(gamma));
    w.add(prefix + ".bn.beta", Tensor({channels}));
    w.add(prefix + ".bn.running_mean", Tensor({channels}), /*learnable=*/false);
    Tensor rv({channels});
    rv.fill(1.0);
    w.add(prefix + ".bn.running_var", std::move(rv), /*learnable=*/false);
}

void add_gru_tensors(ModelWeights& w, Rng& rng, const std::string& prefix, size_t input_dim,
                     size_t hidden) {
    for (const char* gate : {"z", "r", "h"})
        w.add(prefix + ".w_" + gate,
              glorot_uniform(rng, {hidden, input_dim}, input_dim, hidden));
    for (const char* gate : {"z", "r", "h"})
        w.add(prefix + ".u_" + gate, orthogonal(rng, hidden));
    for (const char* gate : {"z", "r", "h"})
        w.add(prefix + ".b_" + gate, Tensor({hidden}));
}

// ---------------------------------------------------------------------------
// Layer math. Conv stream layout is (C, T, F); sequences are (T, D);
// TCN stream is (C, T).

// Same-padded 2-D convolution, stride 1, no bias (BN follows every conv).
Tensor conv2d(const Tensor& x, const Tensor& kernel) {
    const size_t c_in = x.dim(0), T = x.dim(1), F = x.dim(2);
    const size_t c_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const long ph = static_cast<long>(kh) / 2, pw = static_cast<long>(kw) / 2;
    Tensor y({c_out, T, F});
    for (size_t o = 0; o < c_out; ++o) {
        for (size_t i = 0; i < c_in; ++i) {
            for (size_t dh = 0; dh < kh; ++dh) {
                const long t_off = static_cast<long>(dh) - ph;
                const size_t t_lo = static_cast<size_t>(std::max(0L, -t_off));
                const size_t t_hi = static_cast<size_t>(std::max(
                    0L, std::min<long>(static_cast<long>(T), static_cast<long>(T) - t_off)));
                for (size_t dw = 0; dw < kw; ++dw) {
                    const long f_off = static_cast<long>(dw) - pw;
                    const size_t f_lo = static_cast<size_t>(std::max(0L, -f_off));
                    const size_t f_hi = static_cast<size_t>(std::max(
                        0L, std::min<long>(static_cast<long>(F), static_cast<long>(F) - f_off)));
                    if (f_lo >= f_hi) continue;
                    const double wv = kernel.at(o, i, dh, dw);
                    if (wv == 0.0) continue;
                    for (size_t t = t_lo; t < t_hi; ++t) {
                        double* yr = y.data() + (o * T + t) * F;
                        const double* xr =
                            x.data() + (i * T + static_cast<size_t>(t + t_off)) * F;
                        for (size_t f = f_lo; f < f_hi; ++f)
                            yr[f] += wv * xr[static_cast<size_t>(static_cast<long>(f) + f_off)];
                    }
                }
            }
        }
    }
    return y;
}

void conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy, Tensor& dx,
                     Tensor& dkernel) {
    const size_t c_in = x.dim(0), T = x.dim(1), F = x.dim(2);
    const size_t c_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const long ph = static_cast<long>(kh) / 2, pw = static_cast<long>(kw) / 2;
    dx = Tensor(x.shape());
    dkernel = Tensor(kernel.shape());
    for (size_t o = 0; o < c_out; ++o) {
        for (size_t i = 0; i < c_in; ++i) {
            for (size_t dh = 0; dh < kh; ++dh) {
                const long t_off = static_cast<long>(dh) - ph;
                const size_t t_lo = static_cast<size_t>(std::max(0L, -t_off));
                const size_t t_hi = static_cast<size_t>(std::max(
                    0L, std::min<long>(static_cast<long>(T), static_cast<long>(T) - t_off)));
                for (size_t dw = 0; dw < kw; ++dw) {
                    const long f_off = static_cast<long>(dw) - pw;
                    const size_t f_lo = static_cast<size_t>(std::max(0L, -f_off));
                    const size_t f_hi = static_cast<size_t>(std::max(
                        0L, std::min<long>(static_cast<long>(F), static_cast<long>(F) - f_off)));
                    if (f_lo >= f_hi) continue;
                    const double wv = kernel.at(o, i, dh, dw);
                    double wgrad = 0.0;
                    for (size_t t = t_lo; t < t_hi; ++t) {
                        const double* dyr = dy.data() + (o * T + t) * F;
                        const size_t xt = static_cast<size_t>(t + t_off);
                        double* dxr = dx.data() + (i * T + xt) * F;
                        const double* xr = x.data() + (i * T + xt) * F;
                        for (size_t f = f_lo; f < f_hi; ++f) {
                            const size_t fx = static_cast<size_t>(static_cast<long>(f) + f_off);
                            dxr[fx] += wv * dyr[f];
                            wgrad += dyr[f] * xr[fx];
                        }
                    }
                    dkernel.at(o, i, dh, dw) = wgrad;
                }
            }
        }
    }
}

// BN + ReLU over per-channel groups of `group` trailing elements.
// x and out are contiguous (C, group); returns batch stats in mean/var.
void bn_relu_forward(const Tensor& x, size_t channels, size_t group, const Tensor& gamma,
                     const Tensor& beta, const Tensor& run_mean, const Tensor& run_var,
                     double eps, bool use_batch_stats, Tensor& xhat, Tensor& out,
                     std::vector<double>& mean, std::vector<double>& var,
                     bool& batch_stats_used) {
    xhat = Tensor(x.shape());
    out = Tensor(x.shape());
    mean.assign(channels, 0.0);
    var.assign(channels, 0.0);
    batch_stats_used = use_batch_stats && group >= 2;
    for (size_t c = 0; c < channels; ++c) {
        const double* xr = x.data() + c * group;
        double m, v;
        if (batch_stats_used) {
            double s = 0.0;
            for (size_t i = 0; i < group; ++i) s += xr[i];
            m = s / static_cast<double>(group);
            double sq = 0.0;
            for (size_t i = 0; i < group; ++i) {
                const double d = xr[i] - m;
                sq += d * d;
            }
            v = sq / static_cast<double>(group);
        } else {
            m = run_mean[c];
            v = run_var[c];
        }
        mean[c] = m;
        var[c] = v;
        const double inv = 1.0 / std::sqrt(v + eps);
        const double g = gamma[c], b = beta[c];
        double* xh = xhat.data() + c * group;
        double* yr = out.data() + c * group;
        for (size_t i = 0; i < group; ++i) {
            xh[i] = (xr[i] - m) * inv;
            const double y = g * xh[i] + b;
            yr[i] = y > 0.0 ? y : 0.0;
        }
    }
}

// Backward through ReLU and BN. dy is the gradient at the ReLU output.
void bn_relu_backward(const Tensor& xhat, const Tensor& out, size_t channels, size_t group,
                      const Tensor& gamma, const std::vector<double>& var, double eps,
                      bool batch_stats_used, const Tensor& dy, Tensor& dx, Tensor& dgamma,
                      Tensor& dbeta) {
    dx = Tensor(xhat.shape());
    dgamma = Tensor({channels});
    dbeta = Tensor({channels});
    for (size_t c = 0; c < channels; ++c) {
        const double* xh = xhat.data() + c * group;
        const double* yr = out.data() + c * group;
        const double* dyr = dy.data() + c * group;
        double* dxr = dx.data() + c * group;
        const double inv = 1.0 / std::sqrt(var[c] + eps);
        const double g = gamma[c];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (size_t i = 0; i < group; ++i) {
            const double d = yr[i] > 0.0 ? dyr[i] : 0.0; // ReLU mask
            dxr[i] = d;                                  // stash dL/dy_bn
            sum_dy += d;
            sum_dy_xhat += d * xh[i];
        }
        dgamma[c] = sum_dy_xhat;
        dbeta[c] = sum_dy;
        if (batch_stats_used) {
            const double n = static_cast<double>(group);
            for (size_t i = 0; i < group; ++i) {
                dxr[i] = g * inv * (dxr[i] - sum_dy / n - xh[i] * sum_dy_xhat / n);
            }
        } else {
            for (size_t i = 0; i < group; ++i) dxr[i] = g * inv * dxr[i];
        }
    }
}

Tensor avg_pool_freq(const Tensor& x, size_t factor) {
    const size_t C = x.dim(0), T = x.dim(1), F = x.dim(2);
    const size_t Fo = F / factor;
    Tensor y({C, T, Fo});
    for (size_t c = 0; c < C; ++c)
        for (size_t t = 0; t < T; ++t) {
            const double* xr = x.data() + (c * T + t) * F;
            double* yr = y.data() + (c * T + t) * Fo;
            for (size_t fo = 0; fo < Fo; ++fo) {
                double s = 0.0;
                for (size_t j = 0; j < factor; ++j) s += xr[fo * factor + j];
                yr[fo] = s / static_cast<double>(factor);
            }
        }
    return y;
}

Tensor avg_pool_freq_backward(const Tensor& dy, size_t factor, size_t f_in) {
    const size_t C = dy.dim(0), T = dy.dim(1), Fo = dy.dim(2);
    Tensor dx({C, T, f_in});
    for (size_t c = 0; c < C; ++c)
        for (size_t t = 0; t < T; ++t) {
            const double* dyr = dy.data() + (c * T + t) * Fo;
            double* dxr = dx.data() + (c * T + t) * f_in;
            for (size_t fo = 0; fo < Fo; ++fo)
                for (size_t j = 0; j < factor; ++j)
                    dxr[fo * factor + j] = dyr[fo] / static_cast<double>(factor);
        }
    return dx;
}

// y(H) += W(H,D) * x(D)
void matvec_acc(const Tensor& w, const double* x, double* y) {
    const size_t H = w.dim(0), D = w.dim(1);
    for (size_t h = 0; h < H; ++h) {
        const double* wr = w.data() + h * D;
        double acc = 0.0;
        for (size_t d = 0; d < D; ++d) acc += wr[d] * x[d];
        y[h] += acc;
    }
}

// y(D) += W(H,D)^T * x(H)
void matvec_t_acc(const Tensor& w, const double* x, double* y) {
    const size_t H = w.dim(0), D = w.dim(1);
    for (size_t h = 0; h < H; ++h) {
        const double* wr = w.data() + h * D;
        const double xv = x[h];
        if (xv == 0.0) continue;
        for (size_t d = 0; d < D; ++d) y[d] += xv * wr[d];
    }
}

// W(H,D) += a(H) outer b(D)
void outer_acc(Tensor& w, const double* a, const double* b) {
    const size_t H = w.dim(0), D = w.dim(1);
    for (size_t h = 0; h < H; ++h) {
        double* wr = w.data() + h * D;
        const double av = a[h];
        if (av == 0.0) continue;
        for (size_t d = 0; d < D; ++d) wr[d] += av * b[d];
    }
}

struct GruWeights {
    const Tensor *wz, *wr, *wh, *uz, *ur, *uh, *bz, *br, *bh;
};

GruWeights gru_weights(const ModelWeights& w, const std::string& prefix) {
    return {&w.get(prefix + ".w_z"), &w.get(prefix + ".w_r"), &w.get(prefix + ".w_h"),
            &w.get(prefix + ".u_z"), &w.get(prefix + ".u_r"), &w.get(prefix + ".u_h"),
            &w.get(prefix + ".b_z"), &w.get(prefix + ".b_r"), &w.get(prefix + ".b_h")};
}

// One GRU direction over seq (T, D). Outputs h (T, H) indexed by absolute
// time; `reversed` walks the sequence right to left.
void gru_forward(const GruWeights& g, const Tensor& seq, bool reversed,
                 GruDirectionCache& cache) {
    const size_t T = seq.dim(0), D = seq.dim(1);
    const size_t H = g.bz->dim(0);
    cache.z = Tensor({T, H});
    cache.r = Tensor({T, H});
    cache.c = Tensor({T, H});
    cache.h = Tensor({T, H});
    std::vector<double> h_prev(H, 0.0), rh(H), az(H), ar(H), ac(H);
    for (size_t step = 0; step < T; ++step) {
        const size_t t = reversed ? T - 1 - step : step;
        const double* x = seq.data() + t * D;
        for (size_t i = 0; i < H; ++i) az[i] = (*g.bz)[i];
        for (size_t i = 0; i < H; ++i) ar[i] = (*g.br)[i];
        for (size_t i = 0; i < H; ++i) ac[i] = (*g.bh)[i];
        matvec_acc(*g.wz, x, az.data());
        matvec_acc(*g.uz, h_prev.data(), az.data());
        matvec_acc(*g.wr, x, ar.data());
        matvec_acc(*g.ur, h_prev.data(), ar.data());
        double* zt = cache.z.data() + t * H;
        double* rt = cache.r.data() + t * H;
        double* ct = cache.c.data() + t * H;
        double* ht = cache.h.data() + t * H;
        for (size_t i = 0; i < H; ++i) zt[i] = sigmoid(az[i]);
        for (size_t i = 0; i < H; ++i) rt[i] = sigmoid(ar[i]);
        for (size_t i = 0; i < H; ++i) rh[i] = rt[i] * h_prev[i];
        matvec_acc(*g.wh, x, ac.data());
        matvec_acc(*g.uh, rh.data(), ac.data());
        for (size_t i = 0; i < H; ++i) ct[i] = std::tanh(ac[i]);
        for (size_t i = 0; i < H; ++i) ht[i] = (1.0 - zt[i]) * h_prev[i] + zt[i] * ct[i];
        std::copy(ht, ht + H, h_prev.begin());
    }
}

struct GruGrads {
    Tensor wz, wr, wh, uz, ur, uh, bz, br, bh;
};

// BPTT for one direction; accumulates dseq.
void gru_backward(const GruWeights& g, const Tensor& seq, bool reversed,
                  const GruDirectionCache& cache, const Tensor& dh_out, Tensor& dseq,
                  GruGrads& grads) {
    const size_t T = seq.dim(0), D = seq.dim(1);
    const size_t H = g.bz->dim(0);
    grads.wz = Tensor({H, D});
    grads.wr = Tensor({H, D});
    grads.wh = Tensor({H, D});
    grads.uz = Tensor({H, H});
    grads.ur = Tensor({H, H});
    grads.uh = Tensor({H, H});
    grads.bz = Tensor({H});
    grads.br = Tensor({H});
    grads.bh = Tensor({H});

    std::vector<double> dh_carry(H, 0.0), dh(H), daz(H), dar(H), dac(H), drh(H), dh_prev(H),
        h_prev(H), rh(H);
    for (size_t step = T; step-- > 0;) {
        const size_t t = reversed ? T - 1 - step : step;
        // Hidden state fed into step `step` of the walk.
        if (step == 0) {
            std::fill(h_prev.begin(), h_prev.end(), 0.0);
        } else {
            const size_t t_prev = reversed ? t + 1 : t - 1;
            const double* hp = cache.h.data() + t_prev * H;
            std::copy(hp, hp + H, h_prev.begin());
        }
        const double* zt = cache.z.data() + t * H;
        const double* rt = cache.r.data() + t * H;
        const double* ct = cache.c.data() + t * H;
        const double* x = seq.data() + t * D;
        const double* dht_out = dh_out.data() + t * H;

        for (size_t i = 0; i < H; ++i) dh[i] = dht_out[i] + dh_carry[i];
        for (size_t i = 0; i < H; ++i) {
            const double dz = dh[i] * (ct[i] - h_prev[i]);
            daz[i] = dz * zt[i] * (1.0 - zt[i]);
            const double dc = dh[i] * zt[i];
            dac[i] = dc * (1.0 - ct[i] * ct[i]);
            dh_prev[i] = dh[i] * (1.0 - zt[i]);
            rh[i] = rt[i] * h_prev[i];
        }
        // Candidate path.
        outer_acc(grads.wh, dac.data(), x);
        outer_acc(grads.uh, dac.data(), rh.data());
        for (size_t i = 0; i < H; ++i) grads.bh[i] += dac[i];
        std::fill(drh.begin(), drh.end(), 0.0);
        matvec_t_acc(*g.uh, dac.data(), drh.data());
        for (size_t i = 0; i < H; ++i) {
            const double dr = drh[i] * h_prev[i];
            dar[i] = dr * rt[i] * (1.0 - rt[i]);
            dh_prev[i] += drh[i] * rt[i];
        }
        // Gate paths.
        outer_acc(grads.wr, dar.data(), x);
        outer_acc(grads.ur, dar.data(), h_prev.data());
        for (size_t i = 0; i < H; ++i) grads.br[i] += dar[i];
        matvec_t_acc(*g.ur, dar.data(), dh_prev.data());

        outer_acc(grads.wz, daz.data(), x);
        outer_acc(grads.uz, daz.data(), h_prev.data());
        for (size_t i = 0; i < H; ++i) grads.bz[i] += daz[i];
        matvec_t_acc(*g.uz, daz.data(), dh_prev.data());

        double* dx = dseq.data() + t * D;
        matvec_t_acc(*g.wz, daz.data(), dx);
        matvec_t_acc(*g.wr, dar.data(), dx);
        matvec_t_acc(*g.wh, dac.data(), dx);

        std::swap(dh_carry, dh_prev);
    }
}

// 1-D dilated convolution with symmetric zero padding, layout (C, T).
Tensor conv1d_dilated(const Tensor& x, const Tensor& kernel, size_t dilation) {
    const size_t c_in = x.dim(0), T = x.dim(1);
    const size_t c_out = kernel.dim(0), k = kernel.dim(2);
    const long pad = static_cast<long>(dilation) * (static_cast<long>(k) - 1) / 2;
    Tensor y({c_out, T});
    for (size_t o = 0; o < c_out; ++o)
        for (size_t i = 0; i < c_in; ++i)
            for (size_t kk = 0; kk < k; ++kk) {
                const long off = static_cast<long>(kk * dilation) - pad;
                const double wv = kernel.at(o, i, kk);
                if (wv == 0.0) continue;
                const size_t t_lo = static_cast<size_t>(std::max(0L, -off));
                const size_t t_hi = static_cast<size_t>(std::max(
                    0L, std::min<long>(static_cast<long>(T), static_cast<long>(T) - off)));
                double* yr = y.data() + o * T;
                const double* xr = x.data() + i * T;
                for (size_t t = t_lo; t < t_hi; ++t)
                    yr[t] += wv * xr[static_cast<size_t>(static_cast<long>(t) + off)];
            }
    return y;
}

void conv1d_dilated_backward(const Tensor& x, const Tensor& kernel, size_t dilation,
                             const Tensor& dy, Tensor& dx, Tensor& dkernel) {
    const size_t c_in = x.dim(0), T = x.dim(1);
    const size_t c_out = kernel.dim(0), k = kernel.dim(2);
    const long pad = static_cast<long>(dilation) * (static_cast<long>(k) - 1) / 2;
    dx = Tensor(x.shape());
    dkernel = Tensor(kernel.shape());
    for (size_t o = 0; o < c_out; ++o)
        for (size_t i = 0; i < c_in; ++i)
            for (size_t kk = 0; kk < k; ++kk) {
                const long off = static_cast<long>(kk * dilation) - pad;
                const double wv = kernel.at(o, i, kk);
                const size_t t_lo = static_cast<size_t>(std::max(0L, -off));
                const size_t t_hi = static_cast<size_t>(std::max(
                    0L, std::min<long>(static_cast<long>(T), static_cast<long>(T) - off)));
                const double* dyr = dy.data() + o * T;
                const double* xr = x.data() + i * T;
                double* dxr = dx.data() + i * T;
                double wgrad = 0.0;
                for (size_t t = t_lo; t < t_hi; ++t) {
                    const size_t tx = static_cast<size_t>(static_cast<long>(t) + off);
                    dxr[tx] += wv * dyr[t];
                    wgrad += dyr[t] * xr[tx];
                }
                dkernel.at(o, i, kk) = wgrad;
            }
}

void check_finite(const Tensor& t, const char* what) {
    for (size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i]))
            raise(ErrorKind::NonFiniteActivation, std::string(what) + " is not finite");
}

} // namespace

// ---------------------------------------------------------------------------
// Configs

void CrnnConfig::validate() const {
    if (n_mels < 1 || n_classes < 1 || conv_blocks < 1 || convs_per_block < 1)
        raise(ErrorKind::InvalidConfig, "all dimensions must be positive");
    if (static_cast<int>(channels.size()) != conv_blocks)
        raise(ErrorKind::InvalidConfig, "channels list must have one entry per block");
    if (kernel < 1 || kernel % 2 == 0)
        raise(ErrorKind::InvalidConfig, "kernel must be odd");
    if (gru_hidden < 1)
        raise(ErrorKind::InvalidConfig, "gru_hidden must be positive");
    int div = 1;
    for (int b = 0; b < conv_blocks; ++b) div *= freq_pool;
    if (n_mels % div != 0)
        raise(ErrorKind::InvalidConfig,
              "n_mels must be divisible by freq_pool^conv_blocks");
}

CrnnConfig CrnnConfig::desk_scale() {
    CrnnConfig cfg;
    cfg.channels = {4, 8, 16};
    cfg.gru_hidden = 16;
    return cfg;
}

void TcnConfig::validate() const {
    if (n_mels < 1 || n_classes < 1 || n_filters < 1)
        raise(ErrorKind::InvalidConfig, "all dimensions must be positive");
    if (kernel < 1 || kernel % 2 == 0)
        raise(ErrorKind::InvalidConfig, "kernel must be odd");
    if (dilations.empty())
        raise(ErrorKind::InvalidConfig, "need at least one dilation");
    for (size_t i = 1; i < dilations.size(); ++i)
        if (dilations[i] <= dilations[i - 1])
            raise(ErrorKind::InvalidConfig, "dilations must be strictly increasing");
}

int TcnConfig::receptive_field() const {
    int sum = 0;
    for (int d : dilations) sum += d;
    return 1 + (kernel - 1) * sum;
}

TcnConfig TcnConfig::desk_scale() {
    TcnConfig cfg;
    cfg.n_filters = 32;
    return cfg;
}

// ---------------------------------------------------------------------------
// TensorMap / ModelWeights

Tensor& TensorMap::add(const std::string& name, Tensor t) {
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
}

bool TensorMap::has(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return true;
    return false;
}

Tensor& TensorMap::get(const std::string& name) {
    for (auto& [n, t] : items_)
        if (n == name) return t;
    raise(ErrorKind::InvalidArgument, "no tensor named " + name);
}

const Tensor& TensorMap::get(const std::string& name) const {
    return const_cast<TensorMap*>(this)->get(name);
}

ModelWeights::ModelWeights(ModelConfig cfg, uint64_t seed)
    : config_(std::move(cfg)), seed_(seed) {}

Architecture ModelWeights::architecture() const {
    return std::holds_alternative<CrnnConfig>(config_) ? Architecture::crnn
                                                       : Architecture::tcn;
}

const CrnnConfig& ModelWeights::crnn() const {
    if (architecture() != Architecture::crnn)
        raise(ErrorKind::InvalidArgument, "weights are not a CRNN");
    return std::get<CrnnConfig>(config_);
}

const TcnConfig& ModelWeights::tcn() const {
    if (architecture() != Architecture::tcn)
        raise(ErrorKind::InvalidArgument, "weights are not a TCN");
    return std::get<TcnConfig>(config_);
}

int ModelWeights::n_classes() const {
    return architecture() == Architecture::crnn ? crnn().n_classes : tcn().n_classes;
}

int ModelWeights::n_mels() const {
    return architecture() == Architecture::crnn ? crnn().n_mels : tcn().n_mels;
}

Tensor& ModelWeights::add(const std::string& name, Tensor t, bool learnable) {
    tensors_.push_back({name, std::move(t), learnable});
    return tensors_.back().value;
}

bool ModelWeights::has(const std::string& name) const {
    for (const auto& nt : tensors_)
        if (nt.name == name) return true;
    return false;
}

Tensor& ModelWeights::get(const std::string& name) {
    for (auto& nt : tensors_)
        if (nt.name == name) return nt.value;
    raise(ErrorKind::InvalidArgument, "no tensor named " + name);
}

const Tensor& ModelWeights::get(const std::string& name) const {
    return const_cast<ModelWeights*>(this)->get(name);
}

// ---------------------------------------------------------------------------
// Initialization

ModelWeights init_weights(const CrnnConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelWeights w(cfg, seed);
    Rng rng(seed);
    int in_ch = 1;
    for (int b = 0; b < cfg.conv_blocks; ++b) {
        const int out_ch = cfg.channels[static_cast<size_t>(b)];
        for (int k = 0; k < cfg.convs_per_block; ++k) {
            const std::string prefix =
                "conv" + std::to_string(b) + "_" + std::to_string(k);
            const size_t kk = static_cast<size_t>(cfg.kernel);
            const size_t fan_in = static_cast<size_t>(in_ch) * kk * kk;
            const size_t fan_out = static_cast<size_t>(out_ch) * kk * kk;
            w.add(prefix + ".kernel",
                  glorot_uniform(rng,
                                 {static_cast<size_t>(out_ch), static_cast<size_t>(in_ch),
                                  kk, kk},
                                 fan_in, fan_out));
            add_bn_tensors(w, prefix, static_cast<size_t>(out_ch));
            in_ch = out_ch;
        }
    }
    const size_t D = static_cast<size_t>(cfg.channels.back());
    const size_t H = static_cast<size_t>(cfg.gru_hidden);
    add_gru_tensors(w, rng, "gru.fwd", D, H);
    add_gru_tensors(w, rng, "gru.bwd", D, H);
    const size_t M = static_cast<size_t>(cfg.n_classes);
    w.add("head.weight", glorot_uniform(rng, {M, 2 * H}, 2 * H, M));
    w.add("head.bias", Tensor({M}));
    return w;
}

ModelWeights init_weights(const TcnConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelWeights w(cfg, seed);
    Rng rng(seed);
    const size_t F = static_cast<size_t>(cfg.n_filters);
    const size_t mels = static_cast<size_t>(cfg.n_mels);
    w.add("embed.weight", glorot_uniform(rng, {F, mels}, mels, F));
    w.add("embed.bias", Tensor({F}));
    for (size_t i = 0; i < cfg.dilations.size(); ++i) {
        const std::string prefix = "block" + std::to_string(i);
        const size_t k = static_cast<size_t>(cfg.kernel);
        w.add(prefix + ".dilated.kernel",
              glorot_uniform(rng, {F, F, k}, F * k, F * k));
        add_bn_tensors(w, prefix, F);
        w.add(prefix + ".pointwise.weight", glorot_uniform(rng, {F, F}, F, F));
        w.add(prefix + ".pointwise.bias", Tensor({F}));
    }
    const size_t M = static_cast<size_t>(cfg.n_classes);
    w.add("head.weight", glorot_uniform(rng, {M, F}, F, M));
    w.add("head.bias", Tensor({M}));
    return w;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

void conv_bn_relu_layer(const ModelWeights& w, const std::string& prefix, double eps,
                        bool train, const Tensor& input, ConvLayerCache& cache) {
    const Tensor& kernel = w.get(prefix + ".kernel");
    Tensor pre = conv2d(input, kernel);
    const size_t C = pre.dim(0);
    const size_t group = pre.dim(1) * pre.dim(2);
    cache.input = input;
    bn_relu_forward(pre, C, group, w.get(prefix + ".bn.gamma"), w.get(prefix + ".bn.beta"),
                    w.get(prefix + ".bn.running_mean"), w.get(prefix + ".bn.running_var"),
                    eps, train, cache.xhat, cache.output, cache.mean, cache.var,
                    cache.batch_stats);
}

FramePosteriors crnn_run(const ModelWeights& w, const LogMelSpectrogram& x, RunMode mode,
                         CrnnCache& cache) {
    const CrnnConfig& cfg = w.crnn();
    const size_t T = x.n_frames();

    Tensor cur({1, T, x.n_mels()});
    std::copy(x.values.data(), x.values.data() + x.values.size(), cur.data());

    const bool train = mode == RunMode::train;
    for (int b = 0; b < cfg.conv_blocks; ++b) {
        for (int k = 0; k < cfg.convs_per_block; ++k) {
            cache.conv.emplace_back();
            conv_bn_relu_layer(w, "conv" + std::to_string(b) + "_" + std::to_string(k),
                               cfg.bn_epsilon, train, cur, cache.conv.back());
            cur = cache.conv.back().output;
        }
        cur = avg_pool_freq(cur, static_cast<size_t>(cfg.freq_pool));
        cache.block_out_freq.push_back(cur.dim(2));
    }

    // Mean over the frequency axis -> (T, C) sequence.
    const size_t C = cur.dim(0), F = cur.dim(2);
    cache.seq = Tensor({T, C});
    for (size_t c = 0; c < C; ++c)
        for (size_t t = 0; t < T; ++t) {
            const double* row = cur.data() + (c * T + t) * F;
            double s = 0.0;
            for (size_t f = 0; f < F; ++f) s += row[f];
            cache.seq.at(t, c) = s / static_cast<double>(F);
        }

    gru_forward(gru_weights(w, "gru.fwd"), cache.seq, false, cache.fwd);
    gru_forward(gru_weights(w, "gru.bwd"), cache.seq, true, cache.bwd);

    const size_t H = static_cast<size_t>(cfg.gru_hidden);
    cache.concat = Tensor({T, 2 * H});
    for (size_t t = 0; t < T; ++t) {
        std::copy(cache.fwd.h.data() + t * H, cache.fwd.h.data() + (t + 1) * H,
                  cache.concat.data() + t * 2 * H);
        std::copy(cache.bwd.h.data() + t * H, cache.bwd.h.data() + (t + 1) * H,
                  cache.concat.data() + t * 2 * H + H);
    }

    const Tensor& hw = w.get("head.weight");
    const Tensor& hb = w.get("head.bias");
    const size_t M = hw.dim(0);
    FramePosteriors out;
    out.frame_duration = x.frame_duration;
    out.values = Tensor({T, M});
    for (size_t t = 0; t < T; ++t) {
        const double* in = cache.concat.data() + t * 2 * H;
        for (size_t m = 0; m < M; ++m) {
            const double* wr = hw.data() + m * 2 * H;
            double acc = hb[m];
            for (size_t i = 0; i < 2 * H; ++i) acc += wr[i] * in[i];
            out.values.at(t, m) =
                std::clamp(sigmoid(acc), kPosteriorClamp, 1.0 - kPosteriorClamp);
        }
    }
    check_finite(out.values, "crnn posteriors");
    cache.posteriors = out.values;
    return out;
}

void tcn_block_layer(const ModelWeights& w, const std::string& prefix, size_t dilation,
                     double eps, bool train, const Tensor& input, TcnBlockCache& cache,
                     Tensor& residual_out) {
    Tensor pre = conv1d_dilated(input, w.get(prefix + ".dilated.kernel"), dilation);
    const size_t C = pre.dim(0), T = pre.dim(1);
    cache.input = input;
    bn_relu_forward(pre, C, T, w.get(prefix + ".bn.gamma"), w.get(prefix + ".bn.beta"),
                    w.get(prefix + ".bn.running_mean"), w.get(prefix + ".bn.running_var"),
                    eps, train, cache.xhat, cache.relu_out, cache.mean, cache.var,
                    cache.batch_stats);
    const Tensor& pw = w.get(prefix + ".pointwise.weight");
    const Tensor& pb = w.get(prefix + ".pointwise.bias");
    residual_out = input;
    for (size_t o = 0; o < C; ++o) {
        double* yr = residual_out.data() + o * T;
        for (size_t i = 0; i < C; ++i) {
            const double wv = pw.at(o, i);
            if (wv == 0.0) continue;
            const double* xr = cache.relu_out.data() + i * T;
            for (size_t t = 0; t < T; ++t) yr[t] += wv * xr[t];
        }
        const double b = pb[o];
        for (size_t t = 0; t < T; ++t) yr[t] += b;
    }
}

FramePosteriors tcn_run(const ModelWeights& w, const LogMelSpectrogram& x, RunMode mode,
                        TcnCache& cache) {
    const TcnConfig& cfg = w.tcn();
    const size_t T = x.n_frames();
    const size_t F = static_cast<size_t>(cfg.n_filters);
    const size_t mels = x.n_mels();

    cache.x_seq = Tensor({T, mels});
    std::copy(x.values.data(), x.values.data() + x.values.size(), cache.x_seq.data());

    // Frequency-collapsing embedding, stored channel-major (F, T).
    const Tensor& ew = w.get("embed.weight");
    const Tensor& eb = w.get("embed.bias");
    Tensor cur({F, T});
    for (size_t o = 0; o < F; ++o) {
        const double* wr = ew.data() + o * mels;
        double* yr = cur.data() + o * T;
        for (size_t t = 0; t < T; ++t) {
            const double* xr = cache.x_seq.data() + t * mels;
            double acc = eb[o];
            for (size_t m = 0; m < mels; ++m) acc += wr[m] * xr[m];
            yr[t] = acc;
        }
    }

    const bool train = mode == RunMode::train;
    for (size_t i = 0; i < cfg.dilations.size(); ++i) {
        cache.blocks.emplace_back();
        Tensor next;
        tcn_block_layer(w, "block" + std::to_string(i),
                        static_cast<size_t>(cfg.dilations[i]), cfg.bn_epsilon, train, cur,
                        cache.blocks.back(), next);
        cur = std::move(next);
    }
    cache.final_seq = cur;

    const Tensor& hw = w.get("head.weight");
    const Tensor& hb = w.get("head.bias");
    const size_t M = hw.dim(0);
    FramePosteriors out;
    out.frame_duration = x.frame_duration;
    out.values = Tensor({T, M});
    for (size_t t = 0; t < T; ++t)
        for (size_t m = 0; m < M; ++m) {
            const double* wr = hw.data() + m * F;
            double acc = hb[m];
            for (size_t f = 0; f < F; ++f) acc += wr[f] * cache.final_seq.at(f, t);
            out.values.at(t, m) =
                std::clamp(sigmoid(acc), kPosteriorClamp, 1.0 - kPosteriorClamp);
        }
    check_finite(out.values, "tcn posteriors");
    cache.posteriors = out.values;
    return out;
}

} // namespace

FramePosteriors model_forward(const ModelWeights& weights, const LogMelSpectrogram& x,
                              RunMode mode, ForwardCachePtr* cache_out) {
    if (x.n_frames() < 1)
        raise(ErrorKind::ShapeMismatch, "input spectrogram is empty");
    if (static_cast<int>(x.n_mels()) != weights.n_mels())
        raise(ErrorKind::ShapeMismatch,
              "input has " + std::to_string(x.n_mels()) + " mel bins, model expects " +
                  std::to_string(weights.n_mels()));
    if (cache_out && mode != RunMode::train)
        raise(ErrorKind::InvalidArgument, "caches are only produced in train mode");

    auto cache = std::make_shared<ForwardCache>();
    cache->arch = weights.architecture();
    cache->weights_version = weights.version();

    FramePosteriors out;
    if (weights.architecture() == Architecture::crnn) {
        cache->crnn = std::make_unique<CrnnCache>();
        out = crnn_run(weights, x, mode, *cache->crnn);
    } else {
        cache->tcn = std::make_unique<TcnCache>();
        out = tcn_run(weights, x, mode, *cache->tcn);
    }
    if (cache_out) *cache_out = std::move(cache);
    return out;
}

void update_bn_running(ModelWeights& weights, const ForwardCache& cache) {
    const double momentum = weights.architecture() == Architecture::crnn
                                ? weights.crnn().bn_momentum
                                : weights.tcn().bn_momentum;
    auto apply = [&](const std::string& prefix, const std::vector<double>& mean,
                     const std::vector<double>& var, bool batch_stats) {
        if (!batch_stats) return;
        Tensor& rm = weights.get(prefix + ".bn.running_mean");
        Tensor& rv = weights.get(prefix + ".bn.running_var");
        for (size_t c = 0; c < rm.size(); ++c) {
            rm[c] = momentum * rm[c] + (1.0 - momentum) * mean[c];
            rv[c] = momentum * rv[c] + (1.0 - momentum) * var[c];
        }
    };
    if (cache.arch == Architecture::crnn && cache.crnn) {
        const CrnnConfig& cfg = weights.crnn();
        size_t layer = 0;
        for (int b = 0; b < cfg.conv_blocks; ++b)
            for (int k = 0; k < cfg.convs_per_block; ++k, ++layer)
                apply("conv" + std::to_string(b) + "_" + std::to_string(k),
                      cache.crnn->conv[layer].mean, cache.crnn->conv[layer].var,
                      cache.crnn->conv[layer].batch_stats);
    } else if (cache.arch == Architecture::tcn && cache.tcn) {
        for (size_t i = 0; i < cache.tcn->blocks.size(); ++i)
            apply("block" + std::to_string(i), cache.tcn->blocks[i].mean,
                  cache.tcn->blocks[i].var, cache.tcn->blocks[i].batch_stats);
    }
}

// ---------------------------------------------------------------------------
// Backward

namespace {

GradientMap crnn_backward_impl(const ModelWeights& w, const CrnnCache& cache,
                               const Tensor& dLdp) {
    const CrnnConfig& cfg = w.crnn();
    const size_t T = dLdp.dim(0), M = dLdp.dim(1);
    const size_t H = static_cast<size_t>(cfg.gru_hidden);

    GradientMap grads;

    // Sigmoid.
    Tensor dlogits({T, M});
    for (size_t i = 0; i < dlogits.size(); ++i) {
        const double p = cache.posteriors[i];
        dlogits[i] = dLdp[i] * p * (1.0 - p);
    }

    // Head.
    const Tensor& hw = w.get("head.weight");
    Tensor dhw({M, 2 * H});
    Tensor dhb({M});
    Tensor dconcat({T, 2 * H});
    for (size_t t = 0; t < T; ++t) {
        const double* in = cache.concat.data() + t * 2 * H;
        const double* dl = dlogits.data() + t * M;
        double* dc = dconcat.data() + t * 2 * H;
        for (size_t m = 0; m < M; ++m) {
            const double g = dl[m];
            if (g == 0.0) continue;
            dhb[m] += g;
            double* dwr = dhw.data() + m * 2 * H;
            const double* wr = hw.data() + m * 2 * H;
            for (size_t i = 0; i < 2 * H; ++i) {
                dwr[i] += g * in[i];
                dc[i] += g * wr[i];
            }
        }
    }

    // Split concat gradient into the two GRU directions.
    Tensor dh_fwd({T, H}), dh_bwd({T, H});
    for (size_t t = 0; t < T; ++t) {
        std::copy(dconcat.data() + t * 2 * H, dconcat.data() + t * 2 * H + H,
                  dh_fwd.data() + t * H);
        std::copy(dconcat.data() + t * 2 * H + H, dconcat.data() + (t + 1) * 2 * H,
                  dh_bwd.data() + t * H);
    }

    Tensor dseq(cache.seq.shape());
    GruGrads gf, gb;
    gru_backward(gru_weights(w, "gru.fwd"), cache.seq, false, cache.fwd, dh_fwd, dseq, gf);
    gru_backward(gru_weights(w, "gru.bwd"), cache.seq, true, cache.bwd, dh_bwd, dseq, gb);

    // Frequency mean -> last pooled conv tensor.
    const size_t C = cache.seq.dim(1);
    const size_t F_last = cache.block_out_freq.back();
    Tensor dcur({C, T, F_last});
    for (size_t c = 0; c < C; ++c)
        for (size_t t = 0; t < T; ++t) {
            const double g = dseq.at(t, c) / static_cast<double>(F_last);
            double* row = dcur.data() + (c * T + t) * F_last;
            for (size_t f = 0; f < F_last; ++f) row[f] = g;
        }

    // Conv blocks in reverse. Gradients for each layer are emitted into
    // temporary holders, then registered in forward order below.
    const size_t n_layers = cache.conv.size();
    std::vector<Tensor> dkernels(n_layers), dgammas(n_layers), dbetas(n_layers);
    size_t layer = n_layers;
    for (int b = cfg.conv_blocks - 1; b >= 0; --b) {
        // Un-pool: gradient of the block's pool output spreads over inputs.
        const size_t f_in = cache.conv[layer - 1].output.dim(2);
        dcur = avg_pool_freq_backward(dcur, static_cast<size_t>(cfg.freq_pool), f_in);
        for (int k = cfg.convs_per_block - 1; k >= 0; --k) {
            --layer;
            const ConvLayerCache& lc = cache.conv[layer];
            const std::string prefix =
                "conv" + std::to_string(b) + "_" + std::to_string(k);
            const size_t ch = lc.output.dim(0);
            const size_t group = lc.output.dim(1) * lc.output.dim(2);
            Tensor dpre, dgamma, dbeta;
            bn_relu_backward(lc.xhat, lc.output, ch, group, w.get(prefix + ".bn.gamma"),
                             lc.var, cfg.bn_epsilon, lc.batch_stats, dcur, dpre, dgamma,
                             dbeta);
            Tensor dx, dkernel;
            conv2d_backward(lc.input, w.get(prefix + ".kernel"), dpre, dx, dkernel);
            dkernels[layer] = std::move(dkernel);
            dgammas[layer] = std::move(dgamma);
            dbetas[layer] = std::move(dbeta);
            dcur = std::move(dx);
        }
    }

    layer = 0;
    for (int b = 0; b < cfg.conv_blocks; ++b)
        for (int k = 0; k < cfg.convs_per_block; ++k, ++layer) {
            const std::string prefix =
                "conv" + std::to_string(b) + "_" + std::to_string(k);
            grads.add(prefix + ".kernel", std::move(dkernels[layer]));
            grads.add(prefix + ".bn.gamma", std::move(dgammas[layer]));
            grads.add(prefix + ".bn.beta", std::move(dbetas[layer]));
        }
    auto add_gru = [&](const std::string& prefix, GruGrads& g) {
        grads.add(prefix + ".w_z", std::move(g.wz));
        grads.add(prefix + ".w_r", std::move(g.wr));
        grads.add(prefix + ".w_h", std::move(g.wh));
        grads.add(prefix + ".u_z", std::move(g.uz));
        grads.add(prefix + ".u_r", std::move(g.ur));
        grads.add(prefix + ".u_h", std::move(g.uh));
        grads.add(prefix + ".b_z", std::move(g.bz));
        grads.add(prefix + ".b_r", std::move(g.br));
        grads.add(prefix + ".b_h", std::move(g.bh));
    };
    add_gru("gru.fwd", gf);
    add_gru("gru.bwd", gb);
    grads.add("head.weight", std::move(dhw));
    grads.add("head.bias", std::move(dhb));
    return grads;
}

GradientMap tcn_backward_impl(const ModelWeights& w, const TcnCache& cache,
                              const Tensor& dLdp) {
    const TcnConfig& cfg = w.tcn();
    const size_t T = dLdp.dim(0), M = dLdp.dim(1);
    const size_t F = static_cast<size_t>(cfg.n_filters);
    const size_t mels = cache.x_seq.dim(1);

    GradientMap grads;

    Tensor dlogits({T, M});
    for (size_t i = 0; i < dlogits.size(); ++i) {
        const double p = cache.posteriors[i];
        dlogits[i] = dLdp[i] * p * (1.0 - p);
    }

    const Tensor& hw = w.get("head.weight");
    Tensor dhw({M, F});
    Tensor dhb({M});
    Tensor dcur({F, T});
    for (size_t t = 0; t < T; ++t) {
        const double* dl = dlogits.data() + t * M;
        for (size_t m = 0; m < M; ++m) {
            const double g = dl[m];
            if (g == 0.0) continue;
            dhb[m] += g;
            const double* wr = hw.data() + m * F;
            double* dwr = dhw.data() + m * F;
            for (size_t f = 0; f < F; ++f) {
                dwr[f] += g * cache.final_seq.at(f, t);
                dcur.at(f, t) += g * wr[f];
            }
        }
    }

    const size_t n_blocks = cache.blocks.size();
    std::vector<Tensor> dkernels(n_blocks), dgammas(n_blocks), dbetas(n_blocks),
        dpw(n_blocks), dpb(n_blocks);
    for (size_t i = n_blocks; i-- > 0;) {
        const TcnBlockCache& bc = cache.blocks[i];
        const std::string prefix = "block" + std::to_string(i);
        const Tensor& pw = w.get(prefix + ".pointwise.weight");

        // Residual add: identity branch + pointwise branch.
        Tensor drelu({F, T});
        Tensor dpw_i({F, F});
        Tensor dpb_i({F});
        for (size_t o = 0; o < F; ++o) {
            const double* dyr = dcur.data() + o * T;
            double acc_b = 0.0;
            for (size_t t = 0; t < T; ++t) acc_b += dyr[t];
            dpb_i[o] = acc_b;
            for (size_t ic = 0; ic < F; ++ic) {
                const double wv = pw.at(o, ic);
                const double* rr = bc.relu_out.data() + ic * T;
                double* drr = drelu.data() + ic * T;
                double acc_w = 0.0;
                for (size_t t = 0; t < T; ++t) {
                    acc_w += dyr[t] * rr[t];
                    drr[t] += wv * dyr[t];
                }
                dpw_i.at(o, ic) = acc_w;
            }
        }

        Tensor dpre, dgamma, dbeta;
        bn_relu_backward(bc.xhat, bc.relu_out, F, T, w.get(prefix + ".bn.gamma"), bc.var,
                         cfg.bn_epsilon, bc.batch_stats, drelu, dpre, dgamma, dbeta);
        Tensor dx, dkernel;
        conv1d_dilated_backward(bc.input, w.get(prefix + ".dilated.kernel"),
                                static_cast<size_t>(cfg.dilations[i]), dpre, dx, dkernel);
        // Identity branch of the residual.
        for (size_t j = 0; j < dx.size(); ++j) dx[j] += dcur[j];

        dkernels[i] = std::move(dkernel);
        dgammas[i] = std::move(dgamma);
        dbetas[i] = std::move(dbeta);
        dpw[i] = std::move(dpw_i);
        dpb[i] = std::move(dpb_i);
        dcur = std::move(dx);
    }

    // Embedding backward from dcur (F, T). The gradient w.r.t. the input
    // spectrogram is not needed, so only the weights are handled.
    Tensor dew({F, mels});
    Tensor deb({F});
    for (size_t o = 0; o < F; ++o) {
        const double* dyr = dcur.data() + o * T;
        double* dwr = dew.data() + o * mels;
        double acc_b = 0.0;
        for (size_t t = 0; t < T; ++t) {
            const double g = dyr[t];
            if (g == 0.0) continue;
            acc_b += g;
            const double* xr = cache.x_seq.data() + t * mels;
            for (size_t m = 0; m < mels; ++m) dwr[m] += g * xr[m];
        }
        deb[o] = acc_b;
    }

    grads.add("embed.weight", std::move(dew));
    grads.add("embed.bias", std::move(deb));
    for (size_t i = 0; i < n_blocks; ++i) {
        const std::string prefix = "block" + std::to_string(i);
        grads.add(prefix + ".dilated.kernel", std::move(dkernels[i]));
        grads.add(prefix + ".bn.gamma", std::move(dgammas[i]));
        grads.add(prefix + ".bn.beta", std::move(dbetas[i]));
        grads.add(prefix + ".pointwise.weight", std::move(dpw[i]));
        grads.add(prefix + ".pointwise.bias", std::move(dpb[i]));
    }
    grads.add("head.weight", std::move(dhw));
    grads.add("head.bias", std::move(dhb));
    return grads;
}

} // namespace

GradientMap model_backward(const ModelWeights& weights, const ForwardCache& cache,
                           const Tensor& dLdp) {
    if (cache.weights_version != weights.version())
        raise(ErrorKind::StaleCache,
              "weights were modified after the forward pass that built this cache");

    GradientMap grads;
    if (cache.arch == Architecture::crnn) {
        if (!cache.crnn) raise(ErrorKind::StaleCache, "cache has no CRNN intermediates");
        require_same_shape(dLdp, cache.crnn->posteriors, "dL/dp");
        grads = crnn_backward_impl(weights, *cache.crnn, dLdp);
    } else {
        if (!cache.tcn) raise(ErrorKind::StaleCache, "cache has no TCN intermediates");
        require_same_shape(dLdp, cache.tcn->posteriors, "dL/dp");
        grads = tcn_backward_impl(weights, *cache.tcn, dLdp);
    }
    for (const auto& [name, g] : grads.items())
        for (size_t i = 0; i < g.size(); ++i)
            if (!std::isfinite(g[i]))
                raise(ErrorKind::NonFiniteGradient, "gradient of " + name + " is not finite");
    return grads;
}

} // namespace auscsed
