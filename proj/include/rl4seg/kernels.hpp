#pragma once

// Dense compute kernels for the tensor engine. Each kernel has two
// implementations with identical contracts:
//
//   rl4seg::kernels          — OpenMP-parallel production path
//   rl4seg::kernels::serial  — straightforward reference loops, kept for
//                              equivalence tests and the kernel benchmark
//
// Parallel loops only ever split across *output* elements; the summation
// order for any single output element is fixed by the code, so results are
// bit-identical for any thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace rl4seg::kernels {

// below this many fused multiply-adds a parallel region is not worth it
constexpr long kOmpMinWork = 1 << 14;

namespace serial {

// y[co][oy][ox] = bias[co] + sum_{ci,ky,kx} w[co][ci][ky][kx] * x[ci][oy+ky-pad][ox+kx-pad]
template <typename T>
void conv2d_forward(const T* x, int cin, int h, int w, const T* wt, int cout,
                    int kh, int kw, int pad, const T* bias, T* y) {
    const int oh = h + 2 * pad - kh + 1;
    const int ow = w + 2 * pad - kw + 1;
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                T acc = bias ? bias[co] : T(0);
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy + ky - pad;
                            const int ix = ox + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += wt[((size_t(co) * cin + ci) * kh + ky) * kw + kx] *
                                   x[(size_t(ci) * h + iy) * w + ix];
                        }
                y[(size_t(co) * oh + oy) * ow + ox] = acc;
            }
}

// dx[ci][iy][ix] += sum_{co,ky,kx} w[co][ci][ky][kx] * dy[co][iy-ky+pad][ix-kx+pad]
template <typename T>
void conv2d_backward_input(const T* dy, int cout, const T* wt, int cin, int kh,
                           int kw, int pad, int h, int w, T* dx) {
    const int oh = h + 2 * pad - kh + 1;
    const int ow = w + 2 * pad - kw + 1;
    for (int ci = 0; ci < cin; ++ci)
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix) {
                T acc = 0;
                for (int co = 0; co < cout; ++co)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int oy = iy - ky + pad;
                            const int ox = ix - kx + pad;
                            if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                            acc += wt[((size_t(co) * cin + ci) * kh + ky) * kw + kx] *
                                   dy[(size_t(co) * oh + oy) * ow + ox];
                        }
                dx[(size_t(ci) * h + iy) * w + ix] += acc;
            }
}

// dw[co][ci][ky][kx] += sum_{oy,ox} dy[co][oy][ox] * x[ci][oy+ky-pad][ox+kx-pad]
// db[co]             += sum_{oy,ox} dy[co][oy][ox]
template <typename T>
void conv2d_backward_params(const T* dy, int cout, const T* x, int cin, int h,
                            int w, int kh, int kw, int pad, T* dw, T* db) {
    const int oh = h + 2 * pad - kh + 1;
    const int ow = w + 2 * pad - kw + 1;
    for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    T acc = 0;
                    for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox) {
                            const int iy = oy + ky - pad;
                            const int ix = ox + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += dy[(size_t(co) * oh + oy) * ow + ox] *
                                   x[(size_t(ci) * h + iy) * w + ix];
                        }
                    dw[((size_t(co) * cin + ci) * kh + ky) * kw + kx] += acc;
                }
        if (db) {
            T acc = 0;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) acc += dy[(size_t(co) * oh + oy) * ow + ox];
            db[co] += acc;
        }
    }
}

// C[m][n] (+)= op(A)[m][k] * op(B)[k][n]
template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool ta, bool tb,
          bool accumulate) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            T acc = 0;
            for (int p = 0; p < k; ++p) {
                const T av = ta ? a[size_t(p) * m + i] : a[size_t(i) * k + p];
                const T bv = tb ? b[size_t(j) * k + p] : b[size_t(p) * n + j];
                acc += av * bv;
            }
            T* out = &c[size_t(i) * n + j];
            *out = accumulate ? *out + acc : acc;
        }
}

}  // namespace serial

template <typename T>
void conv2d_forward(const T* x, int cin, int h, int w, const T* wt, int cout,
                    int kh, int kw, int pad, const T* bias, T* y) {
    const int oh = h + 2 * pad - kh + 1;
    const int ow = w + 2 * pad - kw + 1;
    const long work = long(cout) * oh * ow * cin * kh * kw;
#pragma omp parallel for collapse(2) schedule(static) if (work > kOmpMinWork)
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < oh; ++oy) {
            T* yrow = &y[(size_t(co) * oh + oy) * ow];
            for (int ox = 0; ox < ow; ++ox) yrow[ox] = bias ? bias[co] : T(0);
            for (int ci = 0; ci < cin; ++ci)
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const T* xrow = &x[(size_t(ci) * h + iy) * w];
                    const T* wrow = &wt[((size_t(co) * cin + ci) * kh + ky) * kw];
                    for (int ox = 0; ox < ow; ++ox) {
                        T acc = 0;
                        const int kx_lo = std::max(0, pad - ox);
                        const int kx_hi = std::min(kw, w + pad - ox);
                        for (int kx = kx_lo; kx < kx_hi; ++kx) acc += wrow[kx] * xrow[ox + kx - pad];
                        yrow[ox] += acc;
                    }
                }
        }
}

template <typename T>
void conv2d_backward_input(const T* dy, int cout, const T* wt, int cin, int kh,
                           int kw, int pad, int h, int w, T* dx) {
    const int oh = h + 2 * pad - kh + 1;
    const int ow = w + 2 * pad - kw + 1;
    const long work = long(cin) * h * w * cout * kh * kw;
#pragma omp parallel for collapse(2) schedule(static) if (work > kOmpMinWork)
    for (int ci = 0; ci < cin; ++ci)
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix) {
                T acc = 0;
                for (int co = 0; co < cout; ++co)
                    for (int ky = 0; ky < kh; ++ky) {
                        const int oy = iy - ky + pad;
                        if (oy < 0 || oy >= oh) continue;
                        const T* dyrow = &dy[(size_t(co) * oh + oy) * ow];
                        const T* wrow = &wt[((size_t(co) * cin + ci) * kh + ky) * kw];
                        const int kx_lo = std::max(0, ix + pad - ow + 1);
                        const int kx_hi = std::min(kw, ix + pad + 1);
                        for (int kx = kx_lo; kx < kx_hi; ++kx) acc += wrow[kx] * dyrow[ix - kx + pad];
                    }
                dx[(size_t(ci) * h + iy) * w + ix] += acc;
            }
}

template <typename T>
void conv2d_backward_params(const T* dy, int cout, const T* x, int cin, int h,
                            int w, int kh, int kw, int pad, T* dw, T* db) {
    const int oh = h + 2 * pad - kh + 1;
    const int ow = w + 2 * pad - kw + 1;
    const long work = long(cout) * cin * kh * kw * oh * ow;
#pragma omp parallel for schedule(static) if (work > kOmpMinWork)
    for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    T acc = 0;
                    const int oy_lo = std::max(0, pad - ky);
                    const int oy_hi = std::min(oh, h + pad - ky);
                    const int ox_lo = std::max(0, pad - kx);
                    const int ox_hi = std::min(ow, w + pad - kx);
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        const T* dyrow = &dy[(size_t(co) * oh + oy) * ow];
                        const T* xrow = &x[(size_t(ci) * h + oy + ky - pad) * w + (kx - pad)];
                        for (int ox = ox_lo; ox < ox_hi; ++ox) acc += dyrow[ox] * xrow[ox];
                    }
                    dw[((size_t(co) * cin + ci) * kh + ky) * kw + kx] += acc;
                }
        if (db) {
            T acc = 0;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) acc += dy[(size_t(co) * oh + oy) * ow + ox];
            db[co] += acc;
        }
    }
}

template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool ta, bool tb,
          bool accumulate) {
    const long work = long(m) * n * k;
#pragma omp parallel for schedule(static) if (work > kOmpMinWork)
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            T acc = 0;
            for (int p = 0; p < k; ++p) {
                const T av = ta ? a[size_t(p) * m + i] : a[size_t(i) * k + p];
                const T bv = tb ? b[size_t(j) * k + p] : b[size_t(p) * n + j];
                acc += av * bv;
            }
            T* out = &c[size_t(i) * n + j];
            *out = accumulate ? *out + acc : acc;
        }
}

// 2x2 max pool, stride 2. argmax records the input linear index per output
// cell (raster-first tie break) so the backward pass can scatter exactly.
template <typename T>
void maxpool2x2_forward(const T* x, int c, int h, int w, T* y, int32_t* argmax) {
    const int oh = h / 2, ow = w / 2;
#pragma omp parallel for schedule(static) if (long(c) * oh * ow > kOmpMinWork)
    for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                int32_t best = int32_t((size_t(ci) * h + 2 * oy) * w + 2 * ox);
                T bv = x[best];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int32_t idx =
                            int32_t((size_t(ci) * h + 2 * oy + dy) * w + 2 * ox + dx);
                        if (x[idx] > bv) {
                            bv = x[idx];
                            best = idx;
                        }
                    }
                const size_t o = (size_t(ci) * oh + oy) * ow + ox;
                y[o] = bv;
                argmax[o] = best;
            }
}

template <typename T>
void maxpool2x2_backward(const T* dy, const int32_t* argmax, size_t n_out, T* dx) {
    // pool windows are disjoint, so the scatter writes are disjoint
    for (size_t i = 0; i < n_out; ++i) dx[argmax[i]] += dy[i];
}

template <typename T>
void upsample2x_forward(const T* x, int c, int h, int w, T* y) {
    const int oh = 2 * h, ow = 2 * w;
#pragma omp parallel for schedule(static) if (long(c) * oh * ow > kOmpMinWork)
    for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < oh; ++oy) {
            const T* xrow = &x[(size_t(ci) * h + oy / 2) * w];
            T* yrow = &y[(size_t(ci) * oh + oy) * ow];
            for (int ox = 0; ox < ow; ++ox) yrow[ox] = xrow[ox / 2];
        }
}

template <typename T>
void upsample2x_backward(const T* dy, int c, int h, int w, T* dx) {
    // h, w are the *input* dims; dy is c x 2h x 2w
    const int oh = 2 * h, ow = 2 * w;
#pragma omp parallel for schedule(static) if (long(c) * h * w > kOmpMinWork)
    for (int ci = 0; ci < c; ++ci)
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix) {
                T acc = 0;
                for (int dy2 = 0; dy2 < 2; ++dy2)
                    for (int dx2 = 0; dx2 < 2; ++dx2)
                        acc += dy[(size_t(ci) * oh + 2 * iy + dy2) * ow + 2 * ix + dx2];
                dx[(size_t(ci) * h + iy) * w + ix] += acc;
            }
}

// softmax over the channel axis of a [k][h][w] tensor, one distribution per pixel
template <typename T>
void softmax_channels_forward(const T* x, int k, int h, int w, T* y) {
    const size_t plane = size_t(h) * w;
#pragma omp parallel for schedule(static) if (long(k) * h * w > kOmpMinWork)
    for (long p = 0; p < long(plane); ++p) {
        T mx = x[p];
        for (int c = 1; c < k; ++c) mx = std::max(mx, x[c * plane + p]);
        T sum = 0;
        for (int c = 0; c < k; ++c) {
            const T e = std::exp(x[c * plane + p] - mx);
            y[c * plane + p] = e;
            sum += e;
        }
        for (int c = 0; c < k; ++c) y[c * plane + p] /= sum;
    }
}

// dx_c += y_c * (dy_c - sum_j dy_j y_j)
template <typename T>
void softmax_channels_backward(const T* y, const T* dy, int k, int h, int w, T* dx) {
    const size_t plane = size_t(h) * w;
#pragma omp parallel for schedule(static) if (long(k) * h * w > kOmpMinWork)
    for (long p = 0; p < long(plane); ++p) {
        T dot = 0;
        for (int c = 0; c < k; ++c) dot += dy[c * plane + p] * y[c * plane + p];
        for (int c = 0; c < k; ++c)
            dx[c * plane + p] += y[c * plane + p] * (dy[c * plane + p] - dot);
    }
}

}  // namespace rl4seg::kernels
