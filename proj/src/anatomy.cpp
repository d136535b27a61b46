#include "rl4seg/anatomy.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "rl4seg/morphology.hpp"

namespace rl4seg::anatomy {

using morph::Connectivity;

void Thresholds::validate() const {
    if (!(frontier_ratio_max > 0) || !(myo_thickness_ratio_min > 0) ||
        !(lv_myo_ratio_lo > 0) || !(lv_myo_ratio_hi > 0))
        throw std::invalid_argument("thresholds: all values must be positive");
    if (!(lv_myo_ratio_lo < lv_myo_ratio_hi))
        throw std::invalid_argument("thresholds: lv_myo_ratio_lo must be < hi");
}

namespace {

struct BgPockets {
    int lv_only = 0;   // enclosed BG touching only LV
    int myo_only = 0;  // enclosed BG touching only MYO
    int both = 0;      // enclosed BG touching both classes
};

// classify enclosed background components by which classes they touch
BgPockets classify_bg_pockets(const Mask& mask, const morph::Labels& bg_labs) {
    const int h = mask.h, w = mask.w;
    std::vector<uint8_t> touches_border(size_t(bg_labs.count) + 1, 0);
    std::vector<uint8_t> adj_lv(size_t(bg_labs.count) + 1, 0);
    std::vector<uint8_t> adj_myo(size_t(bg_labs.count) + 1, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int32_t l = bg_labs.at(y, x);
            if (!l) continue;
            if (y == 0 || y == h - 1 || x == 0 || x == w - 1) touches_border[l] = 1;
            auto look = [&](int ny, int nx) {
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) return;
                const uint8_t c = mask.at(ny, nx);
                if (c == kLV) adj_lv[l] = 1;
                if (c == kMYO) adj_myo[l] = 1;
            };
            look(y - 1, x);
            look(y + 1, x);
            look(y, x - 1);
            look(y, x + 1);
        }
    BgPockets p;
    for (int32_t l = 1; l <= bg_labs.count; ++l) {
        if (touches_border[l]) continue;
        if (adj_lv[l] && adj_myo[l])
            ++p.both;
        else if (adj_lv[l])
            ++p.lv_only;
        else if (adj_myo[l])
            ++p.myo_only;
    }
    return p;
}

// share of the LV boundary that faces background (image border counts as BG)
double frontier_ratio_of(const Mask& mask) {
    const int h = mask.h, w = mask.w;
    size_t boundary = 0, facing_bg = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (mask.at(y, x) != kLV) continue;
            bool is_boundary = false, bg_neighbor = false;
            auto look = [&](int ny, int nx) {
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) {
                    is_boundary = true;
                    bg_neighbor = true;
                    return;
                }
                const uint8_t c = mask.at(ny, nx);
                if (c != kLV) is_boundary = true;
                if (c == kBG) bg_neighbor = true;
            };
            look(y - 1, x);
            look(y + 1, x);
            look(y, x - 1);
            look(y, x + 1);
            if (is_boundary) {
                ++boundary;
                facing_bg += bg_neighbor;
            }
        }
    if (!boundary) return 0.0;
    return double(facing_bg) / double(boundary);
}

}  // namespace

ValidityReport assess_validity(const Mask& mask, const Thresholds& thr) {
    thr.validate();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    ValidityReport r;
    r.frontier_ratio = nan;
    r.thickness_ratio = nan;
    r.lv_myo_ratio = nan;
    r.myo_thickness_min = nan;
    r.myo_thickness_max = nan;
    r.lv_width = nan;

    const Mask lv = mask.binary(kLV);
    const Mask myo = mask.binary(kMYO);
    const bool has_lv = lv.count(1) > 0;
    const bool has_myo = myo.count(1) > 0;
    r.presence_lv = has_lv;
    r.presence_myo = has_myo;

    const int lv_comps = has_lv ? morph::connected_components(lv, Connectivity::eight).count : 0;
    const int myo_comps = has_myo ? morph::connected_components(myo, Connectivity::eight).count : 0;
    r.lv_disconnectivity = has_lv ? lv_comps == 1 : true;
    r.myo_disconnectivity = has_myo ? myo_comps == 1 : true;

    const Mask bg = mask.binary(kBG);
    const morph::Labels bg_labs = morph::connected_components(bg, Connectivity::four);
    const BgPockets pockets = classify_bg_pockets(mask, bg_labs);
    r.lv_holes = has_lv ? pockets.lv_only == 0 : true;
    r.myo_holes = has_myo ? pockets.myo_only == 0 : true;
    r.holes_between_lv_myo = (has_lv && has_myo) ? pockets.both == 0 : true;

    if (has_lv && has_myo) {
        r.frontier_ratio = frontier_ratio_of(mask);
        r.lv_bg_frontier_ratio = r.frontier_ratio <= thr.frontier_ratio_max;
    } else {
        r.lv_bg_frontier_ratio = true;
    }

    if (has_myo) {
        const morph::ThicknessProfile tp = morph::myo_thickness_profile(mask);
        r.myo_thickness_min = tp.min_t;
        r.myo_thickness_max = tp.max_t;
        r.thickness_ratio = tp.max_t > 0 ? tp.min_t / tp.max_t : 0.0;
        r.myo_thickness_ratio = r.thickness_ratio >= thr.myo_thickness_ratio_min;
    } else {
        r.myo_thickness_ratio = true;
    }

    if (has_lv && has_myo) {
        r.lv_width = morph::lv_inscribed_width(mask);
        r.lv_myo_ratio = r.myo_thickness_max > 0 ? r.lv_width / r.myo_thickness_max : 0.0;
        r.lv_width_myo_thickness_ratio =
            r.lv_myo_ratio >= thr.lv_myo_ratio_lo && r.lv_myo_ratio <= thr.lv_myo_ratio_hi;
    } else {
        r.lv_width_myo_thickness_ratio = true;
    }

    return r;
}

std::string ValidityReport::to_json_string() const {
    nlohmann::json j;
    j["rules"]["presence_lv"] = presence_lv;
    j["rules"]["presence_myo"] = presence_myo;
    j["rules"]["lv_holes"] = lv_holes;
    j["rules"]["myo_holes"] = myo_holes;
    j["rules"]["lv_disconnectivity"] = lv_disconnectivity;
    j["rules"]["myo_disconnectivity"] = myo_disconnectivity;
    j["rules"]["holes_between_lv_myo"] = holes_between_lv_myo;
    j["rules"]["lv_bg_frontier_ratio"] = lv_bg_frontier_ratio;
    j["rules"]["myo_thickness_ratio"] = myo_thickness_ratio;
    j["rules"]["lv_width_myo_thickness_ratio"] = lv_width_myo_thickness_ratio;
    auto num = [](double v) {
        return std::isnan(v) ? nlohmann::json() : nlohmann::json(v);
    };
    j["measured"]["frontier_ratio"] = num(frontier_ratio);
    j["measured"]["thickness_ratio"] = num(thickness_ratio);
    j["measured"]["lv_myo_ratio"] = num(lv_myo_ratio);
    j["measured"]["myo_thickness_min"] = num(myo_thickness_min);
    j["measured"]["myo_thickness_max"] = num(myo_thickness_max);
    j["measured"]["lv_width"] = num(lv_width);
    j["overall_valid"] = overall_valid();
    return j.dump(2);
}

CorrectionResult correct(const Mask& mask, const Thresholds& thr) {
    const ValidityReport before = assess_validity(mask, thr);
    if (before.overall_valid()) return {CorrectionStatus::unchanged, mask, false};

    const Mask lv = mask.binary(kLV);
    const Mask myo = mask.binary(kMYO);
    if (lv.count(1) == 0 && myo.count(1) == 0)
        return {CorrectionStatus::irrecoverable, mask, false};

    Mask work(mask.h, mask.w, kBG);
    if (myo.count(1)) {
        const Mask keep = morph::largest_component(myo, Connectivity::eight);
        for (size_t i = 0; i < work.size(); ++i)
            if (keep.px[i]) work.px[i] = kMYO;
    }
    if (lv.count(1)) {
        const Mask keep = morph::largest_component(lv, Connectivity::eight);
        for (size_t i = 0; i < work.size(); ++i)
            if (keep.px[i]) work.px[i] = kLV;
    }

    // fill enclosed background pockets
    const Mask bg = work.binary(kBG);
    const morph::Labels bg_labs = morph::connected_components(bg, Connectivity::four);
    const int h = work.h, w = work.w;
    std::vector<uint8_t> touches_border(size_t(bg_labs.count) + 1, 0);
    std::vector<int> lv_adj(size_t(bg_labs.count) + 1, 0);
    std::vector<int> myo_adj(size_t(bg_labs.count) + 1, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int32_t l = bg_labs.at(y, x);
            if (!l) continue;
            if (y == 0 || y == h - 1 || x == 0 || x == w - 1) touches_border[l] = 1;
            auto look = [&](int ny, int nx) {
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) return;
                const uint8_t c = work.at(ny, nx);
                if (c == kLV) ++lv_adj[l];
                if (c == kMYO) ++myo_adj[l];
            };
            look(y - 1, x);
            look(y + 1, x);
            look(y, x - 1);
            look(y, x + 1);
        }
    std::vector<uint8_t> fill_class(size_t(bg_labs.count) + 1, kBG);
    for (int32_t l = 1; l <= bg_labs.count; ++l) {
        if (touches_border[l]) continue;
        if (lv_adj[l] && !myo_adj[l])
            fill_class[l] = kLV;
        else if (myo_adj[l] && !lv_adj[l])
            fill_class[l] = kMYO;
        else if (lv_adj[l] && myo_adj[l])
            fill_class[l] = lv_adj[l] >= myo_adj[l] ? kLV : kMYO;
    }
    for (size_t i = 0; i < work.size(); ++i) {
        const int32_t l = bg_labs.lab[i];
        if (l && fill_class[l] != kBG) work.px[i] = fill_class[l];
    }

    const ValidityReport after = assess_validity(work, thr);
    if (!after.overall_valid()) return {CorrectionStatus::irrecoverable, mask, false};
    return {CorrectionStatus::corrected, work, !(work == mask)};
}

}  // namespace rl4seg::anatomy
