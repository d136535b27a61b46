#pragma once

// Hand-built LV/MYO ring fixtures (circle metric, independent of the
// dataset generator) and the ten single-defect variants.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rl4seg/image.hpp"

namespace fixtures {

using rl4seg::kBG;
using rl4seg::kLV;
using rl4seg::kMYO;
using rl4seg::Mask;

struct RingSpec {
    int h = 64, w = 64;
    double cx = 32, cy = 32;
    double lv_r = 10;
    double t_base = 5;        // MYO band thickness
    double t_amp = 0;         // absolute sinusoidal modulation
    double gap_half_deg = 0;  // basal wedge (around "up")
    double arc_keep_deg = 360;  // keep MYO only within this arc around "down"
};

inline Mask make_ring(const RingSpec& s) {
    Mask m(s.h, s.w, kBG);
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
            const double dx = x - s.cx, dy = y - s.cy;
            const double d = std::sqrt(dx * dx + dy * dy);
            if (d <= s.lv_r) {
                m.at(y, x) = kLV;
                continue;
            }
            const double theta = std::atan2(dy, dx);
            const double t = s.t_base + s.t_amp * std::sin(theta);
            if (d <= s.lv_r + t) {
                auto wrap = [](double a) {
                    while (a > M_PI) a -= 2 * M_PI;
                    while (a < -M_PI) a += 2 * M_PI;
                    return a;
                };
                const double from_up = std::abs(wrap(theta + M_PI / 2)) * 180.0 / M_PI;
                if (s.gap_half_deg > 0 && from_up < s.gap_half_deg) continue;
                const double from_down = std::abs(wrap(theta - M_PI / 2)) * 180.0 / M_PI;
                if (from_down > s.arc_keep_deg / 2) continue;
                m.at(y, x) = kMYO;
            }
        }
    return m;
}

// fixture name = the one rule it must fail
inline std::vector<std::pair<std::string, Mask>> single_defect_fixtures() {
    std::vector<std::pair<std::string, Mask>> out;

    {
        RingSpec s;
        s.gap_half_deg = 15;
        Mask m = make_ring(s);
        for (auto& p : m.px)
            if (p == kLV) p = kBG;
        out.emplace_back("presence_lv", std::move(m));
    }
    {
        Mask m = make_ring({});
        for (auto& p : m.px)
            if (p == kMYO) p = kBG;
        out.emplace_back("presence_myo", std::move(m));
    }
    {
        Mask m = make_ring({});
        m.at(32, 32) = kBG;
        out.emplace_back("lv_holes", std::move(m));
    }
    {
        Mask m = make_ring({});
        m.at(32, 32 + 12) = kBG;
        out.emplace_back("myo_holes", std::move(m));
    }
    {
        Mask m = make_ring({});
        m.at(5, 5) = kLV;
        m.at(5, 6) = kLV;
        out.emplace_back("lv_disconnectivity", std::move(m));
    }
    {
        Mask m = make_ring({});
        for (int y = 4; y < 7; ++y)
            for (int x = 50; x < 53; ++x) m.at(y, x) = kMYO;
        out.emplace_back("myo_disconnectivity", std::move(m));
    }
    {
        Mask m = make_ring({});
        m.at(32, 32 + 10) = kBG;
        out.emplace_back("holes_between_lv_myo", std::move(m));
    }
    {
        RingSpec s;
        s.arc_keep_deg = 130;
        out.emplace_back("lv_bg_frontier_ratio", make_ring(s));
    }
    {
        RingSpec s;
        s.t_base = 4.45;
        s.t_amp = 3.05;
        out.emplace_back("myo_thickness_ratio", make_ring(s));
    }
    {
        RingSpec s;
        s.lv_r = 3;
        s.t_base = 7;
        out.emplace_back("lv_width_myo_thickness_ratio", make_ring(s));
    }
    return out;
}

}  // namespace fixtures
