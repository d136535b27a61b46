#pragma once

// Reverse-mode tensor engine. Ops append closure nodes to a tape in
// construction order; TapeT::backward walks the tape in reverse, which is a
// valid topological order by construction. Templated on the scalar type:
// production code instantiates float, gradient-check tests instantiate
// double as well.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rl4seg/image.hpp"
#include "rl4seg/kernels.hpp"

namespace rl4seg::ag {

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// probability clamp applied before log / BCE / CCE
constexpr double kProbEps = 1e-7;

// When enabled, every op asserts its output is finite. Cheap enough for
// tests; off by default in production loops.
inline bool g_check_finite = false;
inline void set_check_finite(bool on) { g_check_finite = on; }

template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        data.assign(numel_of(shape), fill);
    }

    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) n *= size_t(d);
        return n;
    }
    size_t numel() const { return data.size(); }
    bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

template <typename T>
struct NodeT;
template <typename T>
using VarT = std::shared_ptr<NodeT<T>>;

template <typename T>
struct NodeT {
    TensorT<T> value;
    std::vector<T> grad;  // allocated lazily, same length as value.data
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<VarT<T>> parents;
    std::function<void(NodeT<T>&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != value.data.size()) grad.assign(value.data.size(), T(0));
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
    size_t numel() const { return value.numel(); }
};

template <typename T>
VarT<T> make_param(TensorT<T> value) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

template <typename T>
VarT<T> make_const(TensorT<T> value) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    return n;
}

template <typename T>
class TapeT {
public:
    void record(const VarT<T>& n) { nodes_.push_back(n); }
    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse. Gradients of
    // interior nodes are reset per call; leaf (parameter) gradients
    // accumulate across calls until zeroed by the optimizer.
    void backward(const VarT<T>& loss) {
        if (loss->numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got " +
                                        shape_str(loss->value.shape));
        for (auto& n : nodes_) n->zero_grad();
        loss->ensure_grad();
        loss->grad[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            NodeT<T>& n = **it;
            if (!n.backward_fn || n.grad.empty()) continue;
            n.backward_fn(n);
        }
    }

private:
    std::vector<VarT<T>> nodes_;
};

namespace detail {

template <typename T>
void check_finite(const TensorT<T>& t, const char* op) {
    if (!g_check_finite) return;
    for (T v : t.data)
        if (!std::isfinite(double(v)))
            throw numeric_error(std::string("non-finite value in op '") + op + "'");
}

template <typename T>
VarT<T> make_node(TapeT<T>* tape, TensorT<T> value, std::vector<VarT<T>> parents,
                  const char* op, std::function<void(NodeT<T>&)> bw) {
    check_finite(value, op);
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->op = op;
    bool rg = false;
    for (auto& p : parents) rg = rg || p->requires_grad;
    if (tape && rg) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(bw);
        tape->record(n);
    }
    return n;
}

template <typename T>
void require_same_shape(const VarT<T>& a, const VarT<T>& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a->value.shape) + " vs " +
                                    shape_str(b->value.shape));
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
VarT<T> add(TapeT<T>* tape, const VarT<T>& a, const VarT<T>& b) {
    detail::require_same_shape(a, b, "add");
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] + b->value.data[i];
    return detail::make_node<T>(tape, std::move(out), {a, b}, "add", [a, b](NodeT<T>& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i];
        }
    });
}

template <typename T>
VarT<T> sub(TapeT<T>* tape, const VarT<T>& a, const VarT<T>& b) {
    detail::require_same_shape(a, b, "sub");
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] - b->value.data[i];
    return detail::make_node<T>(tape, std::move(out), {a, b}, "sub", [a, b](NodeT<T>& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad[i] -= n.grad[i];
        }
    });
}

template <typename T>
VarT<T> mul(TapeT<T>* tape, const VarT<T>& a, const VarT<T>& b) {
    detail::require_same_shape(a, b, "mul");
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * b->value.data[i];
    return detail::make_node<T>(tape, std::move(out), {a, b}, "mul", [a, b](NodeT<T>& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * b->value.data[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i] * a->value.data[i];
        }
    });
}

template <typename T>
VarT<T> scale(TapeT<T>* tape, const VarT<T>& a, T c) {
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * c;
    return detail::make_node<T>(tape, std::move(out), {a}, "scale", [a, c](NodeT<T>& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * c;
    });
}

template <typename T>
VarT<T> add_scalar(TapeT<T>* tape, const VarT<T>& a, T c) {
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] + c;
    return detail::make_node<T>(tape, std::move(out), {a}, "add_scalar", [a](NodeT<T>& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    });
}

template <typename T>
VarT<T> relu(TapeT<T>* tape, const VarT<T>& a) {
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = std::max(a->value.data[i], T(0));
    return detail::make_node<T>(tape, std::move(out), {a}, "relu", [a](NodeT<T>& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (a->value.data[i] > T(0)) a->grad[i] += n.grad[i];
    });
}

template <typename T>
VarT<T> sigmoid(TapeT<T>* tape, const VarT<T>& a) {
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.numel(); ++i) {
        const T x = a->value.data[i];
        out.data[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                                : std::exp(x) / (T(1) + std::exp(x));
    }
    return detail::make_node<T>(tape, std::move(out), {a}, "sigmoid", [a](NodeT<T>& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            const T y = n.value.data[i];
            a->grad[i] += n.grad[i] * y * (T(1) - y);
        }
    });
}

template <typename T>
VarT<T> exp(TapeT<T>* tape, const VarT<T>& a) {
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = std::exp(a->value.data[i]);
    return detail::make_node<T>(tape, std::move(out), {a}, "exp", [a](NodeT<T>& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * n.value.data[i];
    });
}

// natural log; inputs are clamped to >= kProbEps first
template <typename T>
VarT<T> log(TapeT<T>* tape, const VarT<T>& a) {
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.numel(); ++i)
        out.data[i] = std::log(std::max(a->value.data[i], T(kProbEps)));
    return detail::make_node<T>(tape, std::move(out), {a}, "log", [a](NodeT<T>& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (a->value.data[i] > T(kProbEps)) a->grad[i] += n.grad[i] / a->value.data[i];
    });
}

// clamp to [lo, hi]; gradient passes only strictly inside the interval
template <typename T>
VarT<T> clip(TapeT<T>* tape, const VarT<T>& a, T lo, T hi) {
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.numel(); ++i)
        out.data[i] = std::min(std::max(a->value.data[i], lo), hi);
    return detail::make_node<T>(tape, std::move(out), {a}, "clip", [a, lo, hi](NodeT<T>& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            const T x = a->value.data[i];
            if (x > lo && x < hi) a->grad[i] += n.grad[i];
        }
    });
}

// elementwise min; ties route the gradient to the first argument
template <typename T>
VarT<T> minimum(TapeT<T>* tape, const VarT<T>& a, const VarT<T>& b) {
    detail::require_same_shape(a, b, "minimum");
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.numel(); ++i)
        out.data[i] = std::min(a->value.data[i], b->value.data[i]);
    return detail::make_node<T>(tape, std::move(out), {a, b}, "minimum", [a, b](NodeT<T>& n) {
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            if (a->value.data[i] <= b->value.data[i]) {
                if (a->requires_grad) a->grad[i] += n.grad[i];
            } else if (b->requires_grad) {
                b->grad[i] += n.grad[i];
            }
        }
    });
}

// same data, new shape; numel must match
template <typename T>
VarT<T> reshape(TapeT<T>* tape, const VarT<T>& a, std::vector<int> new_shape) {
    if (TensorT<T>::numel_of(new_shape) != a->value.numel())
        throw std::invalid_argument("reshape: numel mismatch " + shape_str(a->value.shape) +
                                    " -> " + shape_str(new_shape));
    TensorT<T> out;
    out.shape = std::move(new_shape);
    out.data = a->value.data;
    return detail::make_node<T>(tape, std::move(out), {a}, "reshape", [a](NodeT<T>& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    });
}

// ---- linear algebra / conv ----

template <typename T>
VarT<T> matmul(TapeT<T>* tape, const VarT<T>& a, const VarT<T>& b) {
    if (a->value.shape.size() != 2 || b->value.shape.size() != 2 ||
        a->value.shape[1] != b->value.shape[0])
        throw std::invalid_argument("matmul: incompatible shapes " +
                                    shape_str(a->value.shape) + " vs " +
                                    shape_str(b->value.shape));
    const int m = a->value.shape[0], k = a->value.shape[1], n2 = b->value.shape[1];
    TensorT<T> out({m, n2});
    kernels::gemm(a->value.data.data(), b->value.data.data(), out.data.data(), m, k, n2,
                  false, false, false);
    return detail::make_node<T>(tape, std::move(out), {a, b}, "matmul",
                                [a, b, m, k, n2](NodeT<T>& n) {
        if (a->requires_grad) {
            a->ensure_grad();  // dA += dY * B^T
            kernels::gemm(n.grad.data(), b->value.data.data(), a->grad.data(), m, n2, k,
                          false, true, true);
        }
        if (b->requires_grad) {
            b->ensure_grad();  // dB += A^T * dY
            kernels::gemm(a->value.data.data(), n.grad.data(), b->grad.data(), k, m, n2,
                          true, false, true);
        }
    });
}

// x: [cin,h,w], w: [cout,cin,kh,kw], bias: [cout] (may be null), stride 1
template <typename T>
VarT<T> conv2d(TapeT<T>* tape, const VarT<T>& x, const VarT<T>& w, const VarT<T>& bias,
               int pad) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0])
        throw std::invalid_argument("conv2d: incompatible shapes " + shape_str(xs) +
                                    " vs " + shape_str(ws));
    const int cin = xs[0], h = xs[1], wd = xs[2];
    const int cout = ws[0], kh = ws[2], kw = ws[3];
    const int oh = h + 2 * pad - kh + 1, ow = wd + 2 * pad - kw + 1;
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: kernel larger than input");
    if (bias && bias->value.numel() != size_t(cout))
        throw std::invalid_argument("conv2d: bias size mismatch");
    TensorT<T> out({cout, oh, ow});
    kernels::conv2d_forward(x->value.data.data(), cin, h, wd, w->value.data.data(), cout,
                            kh, kw, pad, bias ? bias->value.data.data() : nullptr,
                            out.data.data());
    std::vector<VarT<T>> parents = {x, w};
    if (bias) parents.push_back(bias);
    return detail::make_node<T>(tape, std::move(out), std::move(parents), "conv2d",
                                [x, w, bias, cin, h, wd, cout, kh, kw, pad, oh, ow](NodeT<T>& n) {
        if (x->requires_grad) {
            x->ensure_grad();
            kernels::conv2d_backward_input(n.grad.data(), cout, w->value.data.data(), cin,
                                           kh, kw, pad, h, wd, x->grad.data());
        }
        if (w->requires_grad) {
            w->ensure_grad();
            T* db = nullptr;
            if (bias && bias->requires_grad) {
                bias->ensure_grad();
                db = bias->grad.data();
            }
            kernels::conv2d_backward_params(n.grad.data(), cout, x->value.data.data(), cin,
                                            h, wd, kh, kw, pad, w->grad.data(), db);
        }
    });
}

template <typename T>
VarT<T> maxpool2(TapeT<T>* tape, const VarT<T>& x) {
    const auto& xs = x->value.shape;
    if (xs.size() != 3 || xs[1] % 2 || xs[2] % 2)
        throw std::invalid_argument("maxpool2: need [c,h,w] with even h,w, got " +
                                    shape_str(xs));
    const int c = xs[0], h = xs[1], w = xs[2];
    TensorT<T> out({c, h / 2, w / 2});
    auto argmax = std::make_shared<std::vector<int32_t>>(out.numel());
    kernels::maxpool2x2_forward(x->value.data.data(), c, h, w, out.data.data(),
                                argmax->data());
    return detail::make_node<T>(tape, std::move(out), {x}, "maxpool2",
                                [x, argmax](NodeT<T>& n) {
        x->ensure_grad();
        kernels::maxpool2x2_backward(n.grad.data(), argmax->data(), n.grad.size(),
                                     x->grad.data());
    });
}

template <typename T>
VarT<T> upsample2(TapeT<T>* tape, const VarT<T>& x) {
    const auto& xs = x->value.shape;
    if (xs.size() != 3) throw std::invalid_argument("upsample2: need [c,h,w]");
    const int c = xs[0], h = xs[1], w = xs[2];
    TensorT<T> out({c, 2 * h, 2 * w});
    kernels::upsample2x_forward(x->value.data.data(), c, h, w, out.data.data());
    return detail::make_node<T>(tape, std::move(out), {x}, "upsample2",
                                [x, c, h, w](NodeT<T>& n) {
        x->ensure_grad();
        kernels::upsample2x_backward(n.grad.data(), c, h, w, x->grad.data());
    });
}

template <typename T>
VarT<T> concat_channels(TapeT<T>* tape, const VarT<T>& a, const VarT<T>& b) {
    const auto& as = a->value.shape;
    const auto& bs = b->value.shape;
    if (as.size() != 3 || bs.size() != 3 || as[1] != bs[1] || as[2] != bs[2])
        throw std::invalid_argument("concat_channels: incompatible " + shape_str(as) +
                                    " vs " + shape_str(bs));
    TensorT<T> out({as[0] + bs[0], as[1], as[2]});
    std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(),
              out.data.begin() + a->value.numel());
    return detail::make_node<T>(tape, std::move(out), {a, b}, "concat", [a, b](NodeT<T>& n) {
        const size_t na = a->value.numel();
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < na; ++i) a->grad[i] += n.grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < b->value.numel(); ++i) b->grad[i] += n.grad[na + i];
        }
    });
}

template <typename T>
VarT<T> softmax_channels(TapeT<T>* tape, const VarT<T>& x) {
    const auto& xs = x->value.shape;
    if (xs.size() != 3) throw std::invalid_argument("softmax_channels: need [k,h,w]");
    TensorT<T> out(xs);
    kernels::softmax_channels_forward(x->value.data.data(), xs[0], xs[1], xs[2],
                                      out.data.data());
    return detail::make_node<T>(tape, std::move(out), {x},
                                "softmax", [x, k = xs[0], h = xs[1], w = xs[2]](NodeT<T>& n) {
        x->ensure_grad();
        kernels::softmax_channels_backward(n.value.data.data(), n.grad.data(), k, h, w,
                                           x->grad.data());
    });
}

// select, per pixel, the channel named by the class mask: out[y][x] = p[cls[y][x]][y][x]
template <typename T>
VarT<T> gather_channel(TapeT<T>* tape, const VarT<T>& p, const Mask& cls) {
    const auto& ps = p->value.shape;
    if (ps.size() != 3 || ps[1] != cls.h || ps[2] != cls.w)
        throw std::invalid_argument("gather_channel: dist " + shape_str(ps) +
                                    " vs mask " + std::to_string(cls.h) + "x" +
                                    std::to_string(cls.w));
    const size_t plane = size_t(ps[1]) * ps[2];
    TensorT<T> out({ps[1], ps[2]});
    for (size_t i = 0; i < plane; ++i) out.data[i] = p->value.data[cls.px[i] * plane + i];
    auto idx = std::make_shared<std::vector<uint8_t>>(cls.px);
    return detail::make_node<T>(tape, std::move(out), {p}, "gather", [p, idx, plane](NodeT<T>& n) {
        p->ensure_grad();
        for (size_t i = 0; i < plane; ++i) p->grad[(*idx)[i] * plane + i] += n.grad[i];
    });
}

// ---- reductions and losses (accumulate in double) ----

template <typename T>
VarT<T> sum(TapeT<T>* tape, const VarT<T>& a) {
    double acc = 0;
    for (T v : a->value.data) acc += double(v);
    TensorT<T> out({1});
    out.data[0] = T(acc);
    return detail::make_node<T>(tape, std::move(out), {a}, "sum", [a](NodeT<T>& n) {
        a->ensure_grad();
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += n.grad[0];
    });
}

template <typename T>
VarT<T> mean(TapeT<T>* tape, const VarT<T>& a) {
    double acc = 0;
    for (T v : a->value.data) acc += double(v);
    const size_t n_el = a->value.numel();
    TensorT<T> out({1});
    out.data[0] = T(acc / double(n_el));
    return detail::make_node<T>(tape, std::move(out), {a}, "mean", [a, n_el](NodeT<T>& n) {
        a->ensure_grad();
        const T g = n.grad[0] / T(n_el);
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    });
}

// mean binary cross-entropy; predictions clamped to [eps, 1-eps]
template <typename T>
VarT<T> bce_mean(TapeT<T>* tape, const VarT<T>& pred, const VarT<T>& target) {
    detail::require_same_shape(pred, target, "bce");
    const size_t n_el = pred->value.numel();
    double acc = 0;
    for (size_t i = 0; i < n_el; ++i) {
        const double p = std::min(std::max(double(pred->value.data[i]), kProbEps), 1.0 - kProbEps);
        const double t = double(target->value.data[i]);
        acc += -(t * std::log(p) + (1.0 - t) * std::log1p(-p));
    }
    TensorT<T> out({1});
    out.data[0] = T(acc / double(n_el));
    return detail::make_node<T>(tape, std::move(out), {pred, target}, "bce",
                                [pred, target, n_el](NodeT<T>& n) {
        pred->ensure_grad();
        const T g = n.grad[0] / T(n_el);
        for (size_t i = 0; i < n_el; ++i) {
            const double p = double(pred->value.data[i]);
            if (p <= kProbEps || p >= 1.0 - kProbEps) continue;
            const double t = double(target->value.data[i]);
            pred->grad[i] += g * T((p - t) / (p * (1.0 - p)));
        }
    });
}

// mean categorical cross-entropy of per-pixel distributions vs a class mask
template <typename T>
VarT<T> cce_mean(TapeT<T>* tape, const VarT<T>& probs, const Mask& cls) {
    const auto& ps = probs->value.shape;
    if (ps.size() != 3 || ps[1] != cls.h || ps[2] != cls.w)
        throw std::invalid_argument("cce: dist " + shape_str(ps) + " vs mask " +
                                    std::to_string(cls.h) + "x" + std::to_string(cls.w));
    const size_t plane = size_t(ps[1]) * ps[2];
    double acc = 0;
    for (size_t i = 0; i < plane; ++i) {
        const double p =
            std::max(double(probs->value.data[cls.px[i] * plane + i]), kProbEps);
        acc += -std::log(p);
    }
    TensorT<T> out({1});
    out.data[0] = T(acc / double(plane));
    auto idx = std::make_shared<std::vector<uint8_t>>(cls.px);
    return detail::make_node<T>(tape, std::move(out), {probs}, "cce",
                                [probs, idx, plane](NodeT<T>& n) {
        probs->ensure_grad();
        const T g = n.grad[0] / T(plane);
        for (size_t i = 0; i < plane; ++i) {
            const size_t j = (*idx)[i] * plane + i;
            const double p = double(probs->value.data[j]);
            if (p > kProbEps) probs->grad[j] += -g / T(p);
        }
    });
}

// per-pixel entropy of channel distributions: out[y][x] = -sum_k p log p
template <typename T>
VarT<T> entropy_channels(TapeT<T>* tape, const VarT<T>& probs) {
    const auto& ps = probs->value.shape;
    if (ps.size() != 3) throw std::invalid_argument("entropy: need [k,h,w]");
    const int k = ps[0];
    const size_t plane = size_t(ps[1]) * ps[2];
    TensorT<T> out({ps[1], ps[2]});
    for (size_t i = 0; i < plane; ++i) {
        double e = 0;
        for (int c = 0; c < k; ++c) {
            const double p = std::max(double(probs->value.data[c * plane + i]), kProbEps);
            e -= p * std::log(p);
        }
        out.data[i] = T(e);
    }
    return detail::make_node<T>(tape, std::move(out), {probs}, "entropy",
                                [probs, k, plane](NodeT<T>& n) {
        probs->ensure_grad();
        for (size_t i = 0; i < plane; ++i) {
            const T g = n.grad[i];
            for (int c = 0; c < k; ++c) {
                const double p = double(probs->value.data[c * plane + i]);
                if (p > kProbEps) probs->grad[c * plane + i] += g * T(-(std::log(p) + 1.0));
            }
        }
    });
}

// ---- optimizer ----

template <typename T>
class AdamT {
public:
    explicit AdamT(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        if (!(lr > T(0))) throw std::invalid_argument("adam: lr must be > 0");
    }

    void step(const std::vector<VarT<T>>& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(double(b1_), double(t_));
        const double bc2 = 1.0 - std::pow(double(b2_), double(t_));
        for (const auto& p : params) {
            p->ensure_grad();
            auto& slot = slots_[p.get()];
            if (slot.m.size() != p->numel()) {
                slot.m.assign(p->numel(), T(0));
                slot.v.assign(p->numel(), T(0));
            }
            for (size_t i = 0; i < p->numel(); ++i) {
                const T g = p->grad[i];
                slot.m[i] = b1_ * slot.m[i] + (T(1) - b1_) * g;
                slot.v[i] = b2_ * slot.v[i] + (T(1) - b2_) * g * g;
                const T mhat = T(double(slot.m[i]) / bc1);
                const T vhat = T(double(slot.v[i]) / bc2);
                p->value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    static void zero_grad(const std::vector<VarT<T>>& params) {
        for (const auto& p : params) {
            p->ensure_grad();
            p->zero_grad();
        }
    }

    long step_count() const { return t_; }
    void set_lr(T lr) {
        if (!(lr > T(0))) throw std::invalid_argument("adam: lr must be > 0");
        lr_ = lr;
    }

private:
    struct Slot {
        std::vector<T> m, v;
    };
    T lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::unordered_map<const NodeT<T>*, Slot> slots_;
};

using Tensor = TensorT<float>;
using Node = NodeT<float>;
using Var = VarT<float>;
using Tape = TapeT<float>;
using Adam = AdamT<float>;

}  // namespace rl4seg::ag
