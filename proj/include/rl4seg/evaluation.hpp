#pragma once

// Segmentation metrics (Dice, Hausdorff, anatomical validity), mask
// post-processing, reward-network uncertainty with temperature scaling, and
// calibration reporting (ECE + reliability diagram data).

#include <optional>
#include <string>
#include <vector>

#include "rl4seg/anatomy.hpp"
#include "rl4seg/image.hpp"
#include "rl4seg/nets.hpp"
#include "rl4seg/synth.hpp"

namespace rl4seg::eval {

// 2|P&R| / (|P|+|R|); 1.0 when both regions are empty
double dice(const Mask& pred_bin, const Mask& ref_bin);

// Symmetric Hausdorff distance between boundary pixel sets, in mm.
// nullopt when either region has no boundary (empty region).
std::optional<double> hausdorff_mm(const Mask& pred_bin, const Mask& ref_bin,
                                   float spacing_mm);

// ENDO structure = LV; EPI structure = LV + MYO
Mask structure_endo(const Mask& m);
Mask structure_epi(const Mask& m);

// keep only the largest connected component per foreground class
Mask postprocess(const Mask& m);

// u = 1 - sigmoid(logit(r_psi) / T)
ag::Tensor uncertainty_map(const nets::UNet& reward_net, const Image& img,
                           const Mask& action, double temperature);

// Fit T by golden-section search on log T in [log 0.05, log 20], minimizing
// BCE(sigmoid(logit(p)/T), target) over all pixels of all pairs.
double fit_temperature(const std::vector<std::pair<ag::Tensor, Mask>>& prob_target_pairs);

double bce_of_pairs(const std::vector<std::pair<ag::Tensor, Mask>>& pairs,
                    double temperature);

struct CalibrationReport {
    int bins = 10;
    std::vector<double> bin_conf;    // mean confidence per bin
    std::vector<double> bin_acc;     // empirical accuracy per bin
    std::vector<size_t> bin_count;
    double ece = 0;
    double temperature = 1.0;
};

CalibrationReport ece_and_reliability(const std::vector<float>& confidence,
                                      const std::vector<uint8_t>& correct, int bins = 10);

// area under the ROC curve for score predicting label==1
double auroc(const std::vector<float>& score, const std::vector<uint8_t>& label);

struct PerSampleMetrics {
    int id = 0;
    double dice_endo = 0, dice_epi = 0;
    std::optional<double> hd_endo_mm, hd_epi_mm;
    bool anatomically_valid = false;
};

struct SegMetrics {
    double dice_endo = 0, dice_epi = 0, dice_avg = 0;
    double dice_endo_std = 0, dice_epi_std = 0;
    double hd_endo_mm = 0, hd_epi_mm = 0, hd_avg_mm = 0;
    double hd_endo_std = 0, hd_epi_std = 0;
    double anatomical_validity = 0;
    int n = 0;
    int hd_excluded = 0;  // samples skipped in the HD means (no boundary)
};

// Greedy decode, post-process, then score against the reference masks.
SegMetrics evaluate_policy(const nets::UNet& policy,
                           const std::vector<const synth::Scene*>& test,
                           const anatomy::Thresholds& thr,
                           std::vector<PerSampleMetrics>* per_sample = nullptr);

void write_metrics_csv(const std::string& path, const std::vector<PerSampleMetrics>& rows,
                       const SegMetrics& aggregate);

void write_reliability_csv(const std::string& path, const CalibrationReport& rep);
void write_reliability_svg(const std::string& path, const CalibrationReport& rep);

}  // namespace rl4seg::eval
