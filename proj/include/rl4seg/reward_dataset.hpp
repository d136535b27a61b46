#pragma once

// Reward-dataset construction: segment target images, triage by anatomical
// validity, correct invalid masks, and fabricate perturbed pairs from valid
// ones. Samples store (s, a, e) with the reference mask the agreement map
// was computed against, so the invariant e == agree(a, ref) can be
// re-checked on load.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rl4seg/anatomy.hpp"
#include "rl4seg/image.hpp"
#include "rl4seg/nets.hpp"
#include "rl4seg/rng.hpp"

namespace rl4seg::rdata {

enum class Provenance { corrected_invalid, perturbed_weights, perturbed_image, gold_valid };

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct RewardSample {
    Image s;
    Mask a;
    Mask e;    // {0,1} agreement map between a and ref
    Mask ref;  // reference mask backing e
    Provenance provenance = Provenance::gold_valid;
};

struct PerturbationConfig {
    double weight_noise_sigma_rel = 0.2;  // relative to each tensor's RMS
    Range brightness_delta{-0.3, 0.3};
    Range contrast_gain{0.6, 1.6};
    int pairs_per_axis = 2;
    uint64_t seed = 0;

    void validate() const;
};

// Axes of Supplementary-style ablations; true = axis active.
struct AblationFlags {
    bool image_transforms = true;
    bool weight_perturbations = true;
    bool anatomical_correction = true;
};

struct TriageReport {
    int n_images = 0;
    int n_valid = 0;
    int n_invalid = 0;
    int n_corrected = 0;
    int n_irrecoverable = 0;          // invalid and the corrector gave up
    int n_skipped_correction_off = 0; // invalid and the correction axis is disabled
    int n_gold_samples = 0;
    int n_corrected_samples = 0;
    int n_perturbed_weight_samples = 0;
    int n_perturbed_image_samples = 0;
};

struct BuildResult {
    std::vector<RewardSample> samples;
    // per input image: the anatomically valid greedy mask, kept as the PPO
    // gold standard; nullopt where the segmentation was invalid
    std::vector<std::optional<Mask>> gold;
    TriageReport triage;
};

BuildResult build_reward_dataset(const nets::UNet& policy,
                                 const std::vector<const Image*>& target_images,
                                 const PerturbationConfig& pcfg,
                                 const anatomy::Thresholds& thr,
                                 const AblationFlags& flags, uint64_t seed);

// Additive Gaussian noise on every parameter tensor, std = sigma_rel x that
// tensor's RMS; the input policy is untouched.
nets::UNet perturb_weights(const nets::UNet& policy, double sigma_rel, uint64_t seed);

// out = clamp(gain * (img - 0.5) + 0.5 + delta, 0, 1)
Image perturb_image(const Image& img, double brightness_delta, double contrast_gain);

void save_reward_dataset(const std::string& dir, const std::vector<RewardSample>& samples,
                         const TriageReport& triage);

struct LoadedRewardDataset {
    std::vector<RewardSample> samples;
    TriageReport triage;
};

// Throws if any stored agreement map does not match agree(a, ref).
LoadedRewardDataset load_reward_dataset(const std::string& dir);

}  // namespace rl4seg::rdata
