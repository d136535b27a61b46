#pragma once

// Binary morphology primitives: component labeling, hole counting, exact
// squared Euclidean distance transform, boundary extraction and medial-axis
// thickness measurement.

#include <cstdint>
#include <utility>
#include <vector>

#include "rl4seg/image.hpp"

namespace rl4seg::morph {

enum class Connectivity { four, eight };

struct Labels {
    int h = 0, w = 0;
    int count = 0;
    std::vector<int32_t> lab;  // 0 = background, 1..count in raster first-seen order

    int32_t at(int y, int x) const { return lab[size_t(y) * w + x]; }
};

// Label the 1-pixels of a binary grid. Labels are assigned in raster order
// of each component's first pixel, so the labeling is deterministic.
Labels connected_components(const Mask& bin, Connectivity conn);

// Number of 4-connected background components that do not touch the border.
int count_holes(const Mask& bin);

// Exact squared Euclidean distance to the nearest 1-pixel of `feature`.
// Cells are pixel centers; returns kEdtInf where the grid has no feature.
constexpr int64_t kEdtInf = int64_t(1) << 60;
std::vector<int64_t> edt_sq(const Mask& feature);

// Foreground pixels with a 4-neighbor that is background or outside the
// image (the image border counts as background).
std::vector<std::pair<int, int>> boundary_pixels(const Mask& bin);

// Keep only the largest component (ties broken toward the first-seen
// label); everything else becomes 0.
Mask largest_component(const Mask& bin, Connectivity conn);

struct ThicknessProfile {
    double min_t = 0, max_t = 0;
};

// Local thickness along the medial axis of the largest MYO component.
// The distance transform measures to the nearest non-MYO pixel center, so
// the distance to the tissue boundary is (d - 1/2) and the two-sided
// thickness is 2*d - 1. Throws std::invalid_argument when MYO is absent.
ThicknessProfile myo_thickness_profile(const Mask& mask);

// Diameter of the largest disc inscribed in the LV region (same boundary
// convention as the thickness profile). 0 when LV is absent.
double lv_inscribed_width(const Mask& mask);

}  // namespace rl4seg::morph
