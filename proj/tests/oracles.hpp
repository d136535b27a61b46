#pragma once

// Independent brute-force oracles used only by tests. These deliberately
// avoid the production implementations: flood fill instead of union-find,
// all-pairs scans instead of distance transforms, finite differences
// instead of the tape.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "rl4seg/image.hpp"
#include "rl4seg/rng.hpp"
#include "rl4seg/tensor.hpp"

namespace oracle {

using rl4seg::Mask;
using rl4seg::Rng;

// stack-based flood fill component count
inline int count_components(const Mask& bin, bool eight) {
    std::vector<char> seen(bin.size(), 0);
    int count = 0;
    std::vector<std::pair<int, int>> stack;
    for (int sy = 0; sy < bin.h; ++sy)
        for (int sx = 0; sx < bin.w; ++sx) {
            if (!bin.at(sy, sx) || seen[size_t(sy) * bin.w + sx]) continue;
            ++count;
            stack.push_back({sy, sx});
            seen[size_t(sy) * bin.w + sx] = 1;
            while (!stack.empty()) {
                auto [y, x] = stack.back();
                stack.pop_back();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (!dy && !dx) continue;
                        if (!eight && dy && dx) continue;
                        const int ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny >= bin.h || nx < 0 || nx >= bin.w) continue;
                        if (!bin.at(ny, nx) || seen[size_t(ny) * bin.w + nx]) continue;
                        seen[size_t(ny) * bin.w + nx] = 1;
                        stack.push_back({ny, nx});
                    }
            }
        }
    return count;
}

// holes = 4-connected background components unreachable from the border
inline int count_holes(const Mask& bin) {
    std::vector<char> outside(bin.size(), 0);
    std::vector<std::pair<int, int>> stack;
    auto push = [&](int y, int x) {
        if (y < 0 || y >= bin.h || x < 0 || x >= bin.w) return;
        if (bin.at(y, x) || outside[size_t(y) * bin.w + x]) return;
        outside[size_t(y) * bin.w + x] = 1;
        stack.push_back({y, x});
    };
    for (int x = 0; x < bin.w; ++x) {
        push(0, x);
        push(bin.h - 1, x);
    }
    for (int y = 0; y < bin.h; ++y) {
        push(y, 0);
        push(y, bin.w - 1);
    }
    while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        push(y - 1, x);
        push(y + 1, x);
        push(y, x - 1);
        push(y, x + 1);
    }
    // remaining background forms the holes; count its 4-components
    Mask leftover(bin.h, bin.w);
    for (size_t i = 0; i < bin.size(); ++i)
        leftover.px[i] = (!bin.px[i] && !outside[i]) ? 1 : 0;
    return count_components(leftover, false);
}

// exhaustive squared EDT: nearest 1-pixel by full scan
inline std::vector<int64_t> edt_sq(const Mask& feature) {
    std::vector<std::pair<int, int>> feats;
    for (int y = 0; y < feature.h; ++y)
        for (int x = 0; x < feature.w; ++x)
            if (feature.at(y, x)) feats.push_back({y, x});
    std::vector<int64_t> out(feature.size(), int64_t(1) << 60);
    if (feats.empty()) return out;
    for (int y = 0; y < feature.h; ++y)
        for (int x = 0; x < feature.w; ++x) {
            int64_t best = int64_t(1) << 60;
            for (auto [fy, fx] : feats) {
                const int64_t d =
                    int64_t(y - fy) * (y - fy) + int64_t(x - fx) * (x - fx);
                best = std::min(best, d);
            }
            out[size_t(y) * feature.w + x] = best;
        }
    return out;
}

// all-pairs symmetric Hausdorff over boundary pixels (border counts as bg)
inline std::optional<double> hausdorff_mm(const Mask& a, const Mask& b, float spacing) {
    auto boundary = [](const Mask& m) {
        std::vector<std::pair<int, int>> out;
        for (int y = 0; y < m.h; ++y)
            for (int x = 0; x < m.w; ++x) {
                if (!m.at(y, x)) continue;
                bool edge = y == 0 || y == m.h - 1 || x == 0 || x == m.w - 1;
                if (edge || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) ||
                    !m.at(y, x + 1))
                    out.push_back({y, x});
            }
        return out;
    };
    const auto pa = boundary(a), pb = boundary(b);
    if (pa.empty() || pb.empty()) return std::nullopt;
    auto directed = [](const auto& from, const auto& to) {
        int64_t worst = 0;
        for (auto [y, x] : from) {
            int64_t best = int64_t(1) << 60;
            for (auto [ty, tx] : to)
                best = std::min(best, int64_t(y - ty) * (y - ty) + int64_t(x - tx) * (x - tx));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::sqrt(double(std::max(directed(pa, pb), directed(pb, pa)))) * spacing;
}

inline Mask random_binary(Rng& rng, int h, int w, double density) {
    Mask m(h, w);
    for (auto& p : m.px) p = rng.uniform() < density ? 1 : 0;
    return m;
}

inline Mask random_multiclass(Rng& rng, int h, int w) {
    Mask m(h, w);
    for (auto& p : m.px) p = uint8_t(rng.uniform_int(3));
    return m;
}

// ---- finite-difference gradient oracle ----

// make_loss builds a fresh scalar graph from the current parameter values;
// call with a tape for the analytic pass, with nullptr for FD evaluations.
template <typename T>
using LossFn = std::function<rl4seg::ag::VarT<T>(rl4seg::ag::TapeT<T>*)>;

template <typename T>
struct GradCheckResult {
    double max_rel_err = 0;
    size_t checked = 0;
};

template <typename T>
GradCheckResult<T> fd_gradcheck(const std::vector<rl4seg::ag::VarT<T>>& params,
                                const LossFn<T>& make_loss, T step, double floor,
                                size_t max_per_tensor = 400) {
    namespace ag = rl4seg::ag;
    ag::TapeT<T> tape;
    auto loss = make_loss(&tape);
    for (auto& p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
    tape.backward(loss);
    std::vector<std::vector<T>> analytic;
    for (auto& p : params) analytic.push_back(p->grad);

    GradCheckResult<T> res;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        const size_t n = p->value.numel();
        const size_t stride = n <= max_per_tensor ? 1 : n / max_per_tensor;
        // near-zero components are judged against the tensor's gradient
        // scale; central differences cannot resolve them better than that
        double tensor_scale = 0;
        for (T g : analytic[pi]) tensor_scale = std::max(tensor_scale, std::abs(double(g)));
        for (size_t i = 0; i < n; i += stride) {
            const T saved = p->value.data[i];
            p->value.data[i] = saved + step;
            const double fp = double(make_loss(nullptr)->value.data[0]);
            p->value.data[i] = saved - step;
            const double fm = double(make_loss(nullptr)->value.data[0]);
            p->value.data[i] = saved;
            const double fd = (fp - fm) / (2.0 * double(step));
            const double an = double(analytic[pi][i]);
            const double denom =
                std::max({std::abs(fd), std::abs(an), floor, 1e-3 * tensor_scale});
            res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - an) / denom);
            ++res.checked;
        }
    }
    return res;
}

// 32-bit check: analytic gradients from the float engine, finite
// differences from a double twin of the same function synced to the float
// parameter values (float FD noise would otherwise swamp the comparison).
inline GradCheckResult<float> mirrored_fd_gradcheck(
    const std::vector<rl4seg::ag::VarT<float>>& params_f, const LossFn<float>& loss_f,
    const std::vector<rl4seg::ag::VarT<double>>& params_d, const LossFn<double>& loss_d,
    double step, double floor, size_t max_per_tensor = 400) {
    namespace ag = rl4seg::ag;
    if (params_f.size() != params_d.size())
        throw std::logic_error("mirrored_fd_gradcheck: param list mismatch");

    ag::TapeT<float> tape;
    auto loss = loss_f(&tape);
    for (auto& p : params_f) {
        p->ensure_grad();
        p->zero_grad();
    }
    tape.backward(loss);

    for (size_t pi = 0; pi < params_f.size(); ++pi) {
        if (params_d[pi]->value.numel() != params_f[pi]->value.numel())
            throw std::logic_error("mirrored_fd_gradcheck: tensor shape mismatch");
        for (size_t i = 0; i < params_f[pi]->value.numel(); ++i)
            params_d[pi]->value.data[i] = double(params_f[pi]->value.data[i]);
    }

    GradCheckResult<float> res;
    for (size_t pi = 0; pi < params_f.size(); ++pi) {
        auto& pd = params_d[pi];
        const size_t n = pd->value.numel();
        const size_t stride = n <= max_per_tensor ? 1 : n / max_per_tensor;
        double tensor_scale = 0;
        for (float g : params_f[pi]->grad)
            tensor_scale = std::max(tensor_scale, std::abs(double(g)));
        for (size_t i = 0; i < n; i += stride) {
            const double saved = pd->value.data[i];
            pd->value.data[i] = saved + step;
            const double fp = loss_d(nullptr)->value.data[0];
            pd->value.data[i] = saved - step;
            const double fm = loss_d(nullptr)->value.data[0];
            pd->value.data[i] = saved;
            const double fd = (fp - fm) / (2.0 * step);
            const double an = double(params_f[pi]->grad[i]);
            const double denom =
                std::max({std::abs(fd), std::abs(an), floor, 1e-2 * tensor_scale});
            res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - an) / denom);
            ++res.checked;
        }
    }
    return res;
}

// directional finite difference: robust at float precision for whole nets
template <typename T>
double fd_directional_err(const std::vector<rl4seg::ag::VarT<T>>& params,
                          const LossFn<T>& make_loss, T step, Rng& rng, double floor) {
    namespace ag = rl4seg::ag;
    ag::TapeT<T> tape;
    auto loss = make_loss(&tape);
    for (auto& p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
    tape.backward(loss);

    std::vector<std::vector<T>> dir;
    double norm = 0;
    for (auto& p : params) {
        std::vector<T> v(p->value.numel());
        for (auto& x : v) {
            x = T(rng.normal());
            norm += double(x) * double(x);
        }
        dir.push_back(std::move(v));
    }
    norm = std::sqrt(norm);
    double analytic = 0;
    for (size_t pi = 0; pi < params.size(); ++pi)
        for (size_t i = 0; i < dir[pi].size(); ++i) {
            dir[pi][i] = T(double(dir[pi][i]) / norm);
            analytic += double(params[pi]->grad[i]) * double(dir[pi][i]);
        }

    auto shift = [&](double scale) {
        for (size_t pi = 0; pi < params.size(); ++pi)
            for (size_t i = 0; i < dir[pi].size(); ++i)
                params[pi]->value.data[i] += T(scale * double(step) * double(dir[pi][i]));
    };
    shift(+1);
    const double fp = double(make_loss(nullptr)->value.data[0]);
    shift(-2);
    const double fm = double(make_loss(nullptr)->value.data[0]);
    shift(+1);
    const double fd = (fp - fm) / (2.0 * double(step));
    return std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), floor});
}

}  // namespace oracle
