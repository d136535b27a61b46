#pragma once

// Seeded generator for cardiac-like scenes: a superellipse LV blob wrapped
// in a MYO band of varying thickness over background, with an ultrasound-ish
// intensity model. The target domain applies a configurable shift
// (brightness, contrast, speckle, blur, LV elongation) on top of the source
// appearance. Every emitted ground-truth mask satisfies the ten anatomy
// rules at default thresholds.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rl4seg/anatomy.hpp"
#include "rl4seg/image.hpp"
#include "rl4seg/rng.hpp"

namespace rl4seg::synth {

enum class Domain { source, target };
enum class Split { train, val, test };

const char* to_string(Domain d);
const char* to_string(Split s);

struct Scene {
    Image image;
    Mask mask;  // empty (h == 0) when withheld
    float spacing_mm = 1.f;
    Domain domain = Domain::source;
    Split split = Split::train;
    int id = 0;

    bool has_mask() const { return mask.h > 0; }
};

// Shift applied to target-domain scenes; source scenes use the base
// appearance (no offset, unit gain/elongation, speckle 0.08, blur 0.4-0.8).
struct DomainShiftConfig {
    Range brightness_offset{0.12, 0.22};
    Range contrast_gain{0.85, 1.15};
    Range speckle_noise_sigma{0.10, 0.16};
    Range shape_elongation{1.10, 1.30};
    Range blur_sigma{0.9, 1.4};
    uint64_t seed = 0;

    void validate() const;
};

// Deterministic in (n, domain, cfg, seed); per-sample seed streams, so
// generation order does not matter. Masks are always attached here; callers
// that need the unlabeled target split use `withhold_masks`.
std::vector<Scene> generate_dataset(int n, Domain domain, const DomainShiftConfig& cfg,
                                    uint64_t seed, int h = 64, int w = 64,
                                    float spacing_mm = 1.f);

void withhold_masks(std::vector<Scene>& scenes);

struct DatasetSpec {
    int h = 64, w = 64;
    float spacing_mm = 1.f;
    int source_train = 200, source_val = 50, source_test = 50;
    int target_train = 500, target_test = 100;
};

// The full experiment dataset: labeled source splits, unlabeled target
// train split and a labeled target test split.
struct Dataset {
    DatasetSpec spec;
    DomainShiftConfig shift;
    uint64_t seed = 0;
    std::vector<Scene> scenes;

    std::vector<const Scene*> select(Domain d, Split s) const;
};

Dataset generate_full(const DatasetSpec& spec, const DomainShiftConfig& shift,
                      uint64_t master_seed);

// Directory layout: manifest.json plus one 16-bit PGM per image and one
// 8-bit PGM per available mask.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

}  // namespace rl4seg::synth
