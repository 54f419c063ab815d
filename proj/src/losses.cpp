#include "auscsed/losses.hpp"

#include <algorithm>
#include <cmath>

#include "auscsed/error.hpp"

namespace auscsed {

namespace {

constexpr double kClip = 1e-7;

struct CellVisitor {
    const FramePosteriors& p;
    const ActivityMatrix& y;
    const LossMask& mask;

    void check() const {
        if (p.n_frames() != y.n_frames || p.n_classes() != y.n_classes())
            raise(ErrorKind::ShapeMismatch, "posteriors and targets differ in shape");
        if (!mask.frames.empty() && mask.frames.size() != y.n_frames)
            raise(ErrorKind::ShapeMismatch, "frame mask length mismatch");
        if (!mask.classes.empty() && mask.classes.size() != y.n_classes())
            raise(ErrorKind::ShapeMismatch, "class mask length mismatch");
    }

    template <typename Fn>
    size_t for_each(Fn&& fn) const {
        const size_t n = y.n_frames, m = y.n_classes();
        size_t count = 0;
        for (size_t t = 0; t < n; ++t) {
            if (!mask.frames.empty() && !mask.frames[t]) continue;
            for (size_t c = 0; c < m; ++c) {
                if (!mask.classes.empty() && !mask.classes[c]) continue;
                ++count;
                fn(t * m + c, y.values[t * m + c] != 0);
            }
        }
        return count;
    }
};

} // namespace

LossResult bce_loss(const FramePosteriors& p, const ActivityMatrix& y,
                    const LossMask& mask) {
    CellVisitor v{p, y, mask};
    v.check();
    LossResult out;
    out.grad = Tensor(p.values.shape());
    double sum = 0.0;
    const size_t count = v.for_each([&](size_t idx, bool active) {
        const double pv = std::clamp(p.values[idx], kClip, 1.0 - kClip);
        if (active) {
            sum += -std::log(pv);
            out.grad[idx] = -1.0 / pv;
        } else {
            sum += -std::log(1.0 - pv);
            out.grad[idx] = 1.0 / (1.0 - pv);
        }
    });
    if (count == 0) {
        out.grad.fill(0.0);
        return out;
    }
    const double inv = 1.0 / static_cast<double>(count);
    out.value = sum * inv;
    for (size_t i = 0; i < out.grad.size(); ++i) out.grad[i] *= inv;
    return out;
}

LossResult afl_loss(const FramePosteriors& p, const ActivityMatrix& y, double gamma,
                    double zeta, const LossMask& mask) {
    if (gamma < 0.0 || zeta < 0.0)
        raise(ErrorKind::NegativeExponent, "gamma and zeta must be non-negative");
    CellVisitor v{p, y, mask};
    v.check();
    LossResult out;
    out.grad = Tensor(p.values.shape());
    double sum = 0.0;
    const size_t count = v.for_each([&](size_t idx, bool active) {
        const double pv = std::clamp(p.values[idx], kClip, 1.0 - kClip);
        if (active) {
            const double logp = std::log(pv);
            if (gamma == 0.0) {
                sum += -logp;
                out.grad[idx] = -1.0 / pv;
            } else {
                const double focal = std::pow(1.0 - pv, gamma);
                sum += -focal * logp;
                out.grad[idx] =
                    gamma * std::pow(1.0 - pv, gamma - 1.0) * logp - focal / pv;
            }
        } else {
            const double log1p = std::log(1.0 - pv);
            if (zeta == 0.0) {
                sum += -log1p;
                out.grad[idx] = 1.0 / (1.0 - pv);
            } else {
                const double focal = std::pow(pv, zeta);
                sum += -focal * log1p;
                out.grad[idx] =
                    -zeta * std::pow(pv, zeta - 1.0) * log1p + focal / (1.0 - pv);
            }
        }
    });
    if (count == 0) {
        out.grad.fill(0.0);
        return out;
    }
    const double inv = 1.0 / static_cast<double>(count);
    out.value = sum * inv;
    for (size_t i = 0; i < out.grad.size(); ++i) out.grad[i] *= inv;
    return out;
}

} // namespace auscsed
