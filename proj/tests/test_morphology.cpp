#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "rl4seg/morphology.hpp"

using namespace rl4seg;
using morph::Connectivity;

TEST_CASE("connected components: basics and raster-order labels") {
    Mask m(8, 8);
    m.at(0, 0) = 1;
    m.at(7, 7) = 1;
    const auto labs = morph::connected_components(m, Connectivity::eight);
    CHECK(labs.count == 2);
    CHECK(labs.at(0, 0) == 1);  // first in raster order gets label 1
    CHECK(labs.at(7, 7) == 2);

    CHECK(morph::connected_components(Mask(8, 8), Connectivity::four).count == 0);

    // diagonal pair: one component under 8-connectivity, two under 4
    Mask d(4, 4);
    d.at(1, 1) = 1;
    d.at(2, 2) = 1;
    CHECK(morph::connected_components(d, Connectivity::eight).count == 1);
    CHECK(morph::connected_components(d, Connectivity::four).count == 2);
}

TEST_CASE("connected components match the flood-fill oracle on random grids") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const int h = 3 + int(rng.uniform_int(14));
        const int w = 3 + int(rng.uniform_int(14));
        const Mask m = oracle::random_binary(rng, h, w, rng.uniform(0.2, 0.8));
        CHECK(morph::connected_components(m, Connectivity::eight).count ==
              oracle::count_components(m, true));
        CHECK(morph::connected_components(m, Connectivity::four).count ==
              oracle::count_components(m, false));
    }
}

TEST_CASE("hole counting: basics") {
    Mask ring(5, 5);
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 3; ++x) ring.at(y, x) = 1;
    ring.at(2, 2) = 0;
    CHECK(morph::count_holes(ring) == 1);

    Mask solid(6, 6, 1);
    CHECK(morph::count_holes(solid) == 0);
}

TEST_CASE("hole counting matches the border flood oracle on random grids") {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const int h = 3 + int(rng.uniform_int(14));
        const int w = 3 + int(rng.uniform_int(14));
        const Mask m = oracle::random_binary(rng, h, w, rng.uniform(0.3, 0.8));
        CHECK(morph::count_holes(m) == oracle::count_holes(m));
    }
}

TEST_CASE("squared EDT is exact against the exhaustive scan") {
    Rng rng(13);
    for (int trial = 0; trial < 60; ++trial) {
        const int h = 3 + int(rng.uniform_int(14));
        const int w = 3 + int(rng.uniform_int(14));
        const Mask m = oracle::random_binary(rng, h, w, rng.uniform(0.05, 0.5));
        const auto got = morph::edt_sq(m);
        const auto want = oracle::edt_sq(m);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i) {
            const bool inf_got = got[i] == morph::kEdtInf;
            const bool inf_want = want[i] >= (int64_t(1) << 59);
            CHECK(inf_got == inf_want);
            if (!inf_got) CHECK(got[i] == want[i]);
        }
    }
}

TEST_CASE("thickness profile: analytic band geometry") {
    // uniform 3-px horizontal band
    Mask band(16, 24);
    for (int y = 6; y <= 8; ++y)
        for (int x = 2; x < 22; ++x) {
            band.at(y, x) = kMYO;
        }
    auto tp = morph::myo_thickness_profile(band);
    CHECK(tp.min_t == doctest::Approx(3.0).epsilon(0.34));
    CHECK(tp.max_t == doctest::Approx(3.0).epsilon(0.34));

    // thickness 2 joined to thickness 6
    Mask joined(20, 40, 0);
    for (int x = 2; x < 20; ++x)
        for (int y = 9; y <= 10; ++y) joined.at(y, x) = kMYO;
    for (int x = 20; x < 38; ++x)
        for (int y = 7; y <= 12; ++y) joined.at(y, x) = kMYO;
    tp = morph::myo_thickness_profile(joined);
    CHECK(tp.min_t >= 1.0);
    CHECK(tp.min_t <= 3.0);
    CHECK(tp.max_t >= 5.0);
    CHECK(tp.max_t <= 7.0);

    // single-pixel line
    Mask line(10, 10);
    for (int x = 2; x < 8; ++x) line.at(5, x) = kMYO;
    tp = morph::myo_thickness_profile(line);
    CHECK(tp.min_t == doctest::Approx(1.0));
    CHECK(tp.max_t == doctest::Approx(1.0));

    CHECK_THROWS_AS(morph::myo_thickness_profile(Mask(8, 8)), std::invalid_argument);
}

TEST_CASE("largest component keeps ties deterministic") {
    Mask m(6, 10);
    m.at(1, 1) = 1;  // first 1-px blob
    m.at(4, 8) = 1;  // second 1-px blob
    const Mask kept = morph::largest_component(m, Connectivity::eight);
    CHECK(kept.at(1, 1) == 1);
    CHECK(kept.at(4, 8) == 0);
}

TEST_CASE("inscribed LV width of a disc") {
    Mask m(32, 32);
    const double r = 7.3;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if ((y - 16.0) * (y - 16.0) + (x - 16.0) * (x - 16.0) <= r * r)
                m.at(y, x) = kLV;
    const double width = morph::lv_inscribed_width(m);
    CHECK(width == doctest::Approx(2 * r).epsilon(0.15));
    CHECK(morph::lv_inscribed_width(Mask(8, 8)) == 0.0);
}

TEST_CASE("boundary pixels: interior pixels excluded, edge pixels included") {
    Mask m(4, 4, 1);
    const auto b = morph::boundary_pixels(m);
    CHECK(b.size() == 12);  // all but the 2x2 interior
}
