#pragma once

// The ten anatomical validity rules for LV/MYO/BG masks and a rule-based
// corrector that projects invalid masks onto the valid set.
//
// Hole bookkeeping: enclosed pure-background components are partitioned by
// what they touch — only LV (an LV hole), only MYO (a MYO hole), or both
// (a hole between LV and MYO) — so each defect trips exactly one rule.
// Rules that need an absent class evaluate as pass; the presence rules
// carry that failure.

#include <string>

#include "rl4seg/image.hpp"

namespace rl4seg::anatomy {

struct Thresholds {
    double frontier_ratio_max = 0.5;      // LV/BG frontier share of the LV boundary
    double myo_thickness_ratio_min = 0.2; // floor on min/max medial thickness
    double lv_myo_ratio_lo = 1.0;         // LV width / max MYO thickness window
    double lv_myo_ratio_hi = 10.0;

    void validate() const;
};

struct ValidityReport {
    bool presence_lv = false;
    bool presence_myo = false;
    bool lv_holes = false;
    bool myo_holes = false;
    bool lv_disconnectivity = false;
    bool myo_disconnectivity = false;
    bool holes_between_lv_myo = false;
    bool lv_bg_frontier_ratio = false;
    bool myo_thickness_ratio = false;
    bool lv_width_myo_thickness_ratio = false;

    // measured values backing the three ratio rules (NaN when not measurable)
    double frontier_ratio = 0;
    double thickness_ratio = 0;
    double lv_myo_ratio = 0;
    double myo_thickness_min = 0;
    double myo_thickness_max = 0;
    double lv_width = 0;

    bool overall_valid() const {
        return presence_lv && presence_myo && lv_holes && myo_holes &&
               lv_disconnectivity && myo_disconnectivity && holes_between_lv_myo &&
               lv_bg_frontier_ratio && myo_thickness_ratio &&
               lv_width_myo_thickness_ratio;
    }

    std::string to_json_string() const;
};

ValidityReport assess_validity(const Mask& mask, const Thresholds& thr);

enum class CorrectionStatus { unchanged, corrected, irrecoverable };

struct CorrectionResult {
    CorrectionStatus status = CorrectionStatus::irrecoverable;
    Mask mask;
    bool changed = false;

    bool ok() const { return status != CorrectionStatus::irrecoverable; }
};

// Repair pipeline: keep the largest component per foreground class, then
// fill enclosed background pockets (own class for intra-class holes,
// majority neighbor class for LV/MYO gaps), then re-assess. A mask the
// pipeline cannot make valid is reported irrecoverable.
CorrectionResult correct(const Mask& mask, const Thresholds& thr);

}  // namespace rl4seg::anatomy
