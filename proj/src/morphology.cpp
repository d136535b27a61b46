#include "rl4seg/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rl4seg::morph {

namespace {

// union-find with path halving
struct DisjointSet {
    std::vector<int32_t> parent;

    int32_t make() {
        parent.push_back(int32_t(parent.size()));
        return int32_t(parent.size() - 1);
    }
    int32_t find(int32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int32_t a, int32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace

Labels connected_components(const Mask& bin, Connectivity conn) {
    const int h = bin.h, w = bin.w;
    Labels out;
    out.h = h;
    out.w = w;
    out.lab.assign(size_t(h) * w, 0);

    DisjointSet ds;
    ds.make();  // slot 0 reserved for background
    std::vector<int32_t> prov(size_t(h) * w, 0);

    // first pass: provisional labels from already-visited neighbors
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!bin.at(y, x)) continue;
            const size_t i = size_t(y) * w + x;
            int32_t best = 0;
            auto consider = [&](int ny, int nx) {
                if (ny < 0 || nx < 0 || nx >= w) return;
                const int32_t l = prov[size_t(ny) * w + nx];
                if (!l) return;
                if (!best)
                    best = l;
                else
                    ds.unite(best, l);
            };
            consider(y, x - 1);
            consider(y - 1, x);
            if (conn == Connectivity::eight) {
                consider(y - 1, x - 1);
                consider(y - 1, x + 1);
            }
            prov[i] = best ? best : ds.make();
        }

    // second pass: map roots to final labels in raster first-seen order
    std::vector<int32_t> final_of_root(ds.parent.size(), 0);
    int32_t next = 0;
    for (size_t i = 0; i < prov.size(); ++i) {
        if (!prov[i]) continue;
        const int32_t r = ds.find(prov[i]);
        if (!final_of_root[r]) final_of_root[r] = ++next;
        out.lab[i] = final_of_root[r];
    }
    out.count = next;
    return out;
}

int count_holes(const Mask& bin) {
    Mask bg(bin.h, bin.w);
    for (size_t i = 0; i < bin.size(); ++i) bg.px[i] = bin.px[i] ? 0 : 1;
    const Labels labs = connected_components(bg, Connectivity::four);
    std::vector<char> touches(size_t(labs.count) + 1, 0);
    for (int x = 0; x < bin.w; ++x) {
        if (labs.at(0, x)) touches[labs.at(0, x)] = 1;
        if (labs.at(bin.h - 1, x)) touches[labs.at(bin.h - 1, x)] = 1;
    }
    for (int y = 0; y < bin.h; ++y) {
        if (labs.at(y, 0)) touches[labs.at(y, 0)] = 1;
        if (labs.at(y, bin.w - 1)) touches[labs.at(y, bin.w - 1)] = 1;
    }
    int holes = 0;
    for (int l = 1; l <= labs.count; ++l) holes += !touches[l];
    return holes;
}

namespace {

// Felzenszwalb-Huttenlocher 1-D squared distance transform
void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n,
            std::vector<int>& v, std::vector<double>& z) {
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        for (;;) {
            s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
                (2.0 * q - 2.0 * v[k]);
            if (s > z[k]) break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = double(q - v[k]) * (q - v[k]) + f[v[k]];
    }
}

}  // namespace

std::vector<int64_t> edt_sq(const Mask& feature) {
    const int h = feature.h, w = feature.w;
    const double inf = 1e18;
    std::vector<double> g(size_t(h) * w);

    // columns
    {
        std::vector<double> f(h), d(h);
        std::vector<int> v(h);
        std::vector<double> z(size_t(h) + 1);
        for (int x = 0; x < w; ++x) {
            for (int y = 0; y < h; ++y) f[y] = feature.at(y, x) ? 0.0 : inf;
            edt_1d(f, d, h, v, z);
            for (int y = 0; y < h; ++y) g[size_t(y) * w + x] = d[y];
        }
    }
    // rows
    std::vector<int64_t> out(size_t(h) * w);
    {
        std::vector<double> f(w), d(w);
        std::vector<int> v(w);
        std::vector<double> z(size_t(w) + 1);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) f[x] = g[size_t(y) * w + x];
            edt_1d(f, d, w, v, z);
            for (int x = 0; x < w; ++x)
                out[size_t(y) * w + x] =
                    d[x] >= inf ? kEdtInf : int64_t(std::llround(d[x]));
        }
    }
    return out;
}

std::vector<std::pair<int, int>> boundary_pixels(const Mask& bin) {
    std::vector<std::pair<int, int>> out;
    for (int y = 0; y < bin.h; ++y)
        for (int x = 0; x < bin.w; ++x) {
            if (!bin.at(y, x)) continue;
            const bool edge = y == 0 || y == bin.h - 1 || x == 0 || x == bin.w - 1;
            if (edge || !bin.at(y - 1, x) || !bin.at(y + 1, x) || !bin.at(y, x - 1) ||
                !bin.at(y, x + 1))
                out.emplace_back(y, x);
        }
    return out;
}

Mask largest_component(const Mask& bin, Connectivity conn) {
    const Labels labs = connected_components(bin, conn);
    if (labs.count == 0) return Mask(bin.h, bin.w);
    std::vector<size_t> sizes(size_t(labs.count) + 1, 0);
    for (int32_t l : labs.lab) ++sizes[l];
    int32_t best = 1;
    for (int32_t l = 2; l <= labs.count; ++l)
        if (sizes[l] > sizes[best]) best = l;
    Mask out(bin.h, bin.w);
    for (size_t i = 0; i < out.size(); ++i) out.px[i] = labs.lab[i] == best ? 1 : 0;
    return out;
}

namespace {

// thickness samples on the medial axis (local maxima of the squared EDT)
// of a binary region; the EDT measures to the nearest 0-pixel
ThicknessProfile thickness_of(const Mask& region) {
    const int h = region.h, w = region.w;
    Mask non_region(h, w);
    bool any_bg = false;
    for (size_t i = 0; i < region.size(); ++i) {
        non_region.px[i] = region.px[i] ? 0 : 1;
        any_bg = any_bg || non_region.px[i];
    }
    if (!any_bg) {
        const double diag = std::sqrt(double(h) * h + double(w) * w);
        return {diag, diag};
    }
    const std::vector<int64_t> d2 = edt_sq(non_region);
    double mn = std::numeric_limits<double>::infinity(), mx = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = size_t(y) * w + x;
            if (!region.px[i]) continue;
            bool is_ridge = true;
            for (int dy = -1; dy <= 1 && is_ridge; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dy && !dx) continue;
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    if (d2[size_t(ny) * w + nx] > d2[i]) {
                        is_ridge = false;
                        break;
                    }
                }
            if (!is_ridge) continue;
            const double t = 2.0 * std::sqrt(double(d2[i])) - 1.0;
            mn = std::min(mn, t);
            mx = std::max(mx, t);
        }
    return {mn, mx};
}

}  // namespace

ThicknessProfile myo_thickness_profile(const Mask& mask) {
    Mask myo = mask.binary(kMYO);
    if (myo.count(1) == 0)
        throw std::invalid_argument("myo_thickness_profile: mask has no MYO pixels");
    return thickness_of(largest_component(myo, Connectivity::eight));
}

double lv_inscribed_width(const Mask& mask) {
    Mask lv = mask.binary(kLV);
    if (lv.count(1) == 0) return 0.0;
    Mask non_lv(mask.h, mask.w);
    for (size_t i = 0; i < lv.size(); ++i) non_lv.px[i] = lv.px[i] ? 0 : 1;
    const std::vector<int64_t> d2 = edt_sq(non_lv);
    int64_t best = 0;
    for (size_t i = 0; i < lv.size(); ++i)
        if (lv.px[i] && d2[i] != kEdtInf) best = std::max(best, d2[i]);
    if (best == 0) {
        // LV fills the grid entirely
        return std::sqrt(double(mask.h) * mask.h + double(mask.w) * mask.w);
    }
    return 2.0 * std::sqrt(double(best)) - 1.0;
}

}  // namespace rl4seg::morph
