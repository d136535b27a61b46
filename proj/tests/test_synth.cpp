#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rl4seg/anatomy.hpp"
#include "rl4seg/pgm.hpp"
#include "rl4seg/synth.hpp"

using namespace rl4seg;
using synth::Domain;
using synth::Split;

namespace {

std::string temp_dir(const char* tag) {
    auto p = std::filesystem::temp_directory_path() / (std::string("rl4seg_synth_") + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

}  // namespace

TEST_CASE("generation is a pure function of its seed") {
    const synth::DomainShiftConfig cfg;
    const auto a = synth::generate_dataset(12, Domain::target, cfg, 99);
    const auto b = synth::generate_dataset(12, Domain::target, cfg, 99);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].mask == b[i].mask);
        CHECK(a[i].image.px == b[i].image.px);
    }
    const auto c = synth::generate_dataset(12, Domain::target, cfg, 100);
    CHECK(a[0].image.px != c[0].image.px);
}

TEST_CASE("every generated mask passes all ten anatomy rules") {
    const synth::DomainShiftConfig cfg;
    const anatomy::Thresholds thr;
    for (Domain d : {Domain::source, Domain::target}) {
        const auto scenes = synth::generate_dataset(60, d, cfg, 4242);
        for (const auto& sc : scenes) {
            const auto rep = anatomy::assess_validity(sc.mask, thr);
            CHECK_MESSAGE(rep.overall_valid(), rep.to_json_string());
            for (float v : sc.image.px) {
                CHECK(v >= 0.f);
                CHECK(v <= 1.f);
            }
        }
    }
}

TEST_CASE("target images carry the configured brightness shift") {
    const synth::DomainShiftConfig cfg;
    auto mean_of = [](const std::vector<synth::Scene>& scenes) {
        double acc = 0;
        size_t n = 0;
        for (const auto& sc : scenes) {
            for (float v : sc.image.px) acc += v;
            n += sc.image.size();
        }
        return acc / double(n);
    };
    const auto src = synth::generate_dataset(200, Domain::source, cfg, 5);
    const auto tgt = synth::generate_dataset(200, Domain::target, cfg, 6);
    const double delta = std::abs(mean_of(tgt) - mean_of(src));
    CHECK(delta >= 0.8 * cfg.brightness_offset.mid());
}

TEST_CASE("degenerate shift ranges are rejected") {
    synth::DomainShiftConfig cfg;
    cfg.blur_sigma = {2.0, 1.0};
    CHECK_THROWS_AS(synth::generate_dataset(1, Domain::source, cfg, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(synth::generate_dataset(0, Domain::source, synth::DomainShiftConfig{}, 1),
                    std::invalid_argument);
}

TEST_CASE("full dataset withholds target-train masks only") {
    synth::DatasetSpec spec;
    spec.source_train = 6;
    spec.source_val = 2;
    spec.source_test = 2;
    spec.target_train = 8;
    spec.target_test = 4;
    const auto ds = synth::generate_full(spec, synth::DomainShiftConfig{}, 7);
    CHECK(ds.scenes.size() == 22);
    for (const auto& sc : ds.scenes) {
        const bool withheld = sc.domain == Domain::target && sc.split == Split::train;
        CHECK(sc.has_mask() == !withheld);
    }
    CHECK(ds.select(Domain::source, Split::train).size() == 6);
    CHECK(ds.select(Domain::target, Split::test).size() == 4);
}

TEST_CASE("dataset save/load round-trips masks bit-exactly") {
    const std::string dir = temp_dir("roundtrip");
    synth::DatasetSpec spec;
    spec.source_train = 4;
    spec.source_val = 1;
    spec.source_test = 1;
    spec.target_train = 4;
    spec.target_test = 2;
    const auto ds = synth::generate_full(spec, synth::DomainShiftConfig{}, 11);
    synth::save_dataset(dir, ds);
    const auto back = synth::load_dataset(dir);
    REQUIRE(back.scenes.size() == ds.scenes.size());
    for (size_t i = 0; i < ds.scenes.size(); ++i) {
        CHECK(back.scenes[i].domain == ds.scenes[i].domain);
        CHECK(back.scenes[i].split == ds.scenes[i].split);
        CHECK(back.scenes[i].mask == ds.scenes[i].mask);
        REQUIRE(back.scenes[i].image.size() == ds.scenes[i].image.size());
        for (size_t k = 0; k < ds.scenes[i].image.size(); ++k)
            CHECK(std::abs(back.scenes[i].image.px[k] - ds.scenes[i].image.px[k]) <=
                  1.f / 65535.f);
    }
    CHECK(back.seed == ds.seed);
    CHECK(back.spec.target_train == spec.target_train);
}

TEST_CASE("empty dataset round-trips as a valid zero-record file") {
    const std::string dir = temp_dir("empty");
    synth::Dataset ds;
    synth::save_dataset(dir, ds);
    const auto back = synth::load_dataset(dir);
    CHECK(back.scenes.empty());
}

TEST_CASE("corrupted files fail loudly, with no partial load") {
    const std::string dir = temp_dir("corrupt");
    synth::DatasetSpec spec;
    spec.source_train = 1;
    spec.source_val = 1;
    spec.source_test = 1;
    spec.target_train = 1;
    spec.target_test = 1;
    synth::save_dataset(dir, synth::generate_full(spec, synth::DomainShiftConfig{}, 3));

    // corrupt the magic bytes of the first image
    {
        std::fstream f(dir + "/img_00000.pgm",
                       std::ios::in | std::ios::out | std::ios::binary);
        f.write("XX", 2);
    }
    try {
        synth::load_dataset(dir);
        FAIL("expected pgm_error");
    } catch (const pgm_error& e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }

    // truncated payload
    const std::string dir2 = temp_dir("trunc");
    synth::save_dataset(dir2, synth::generate_full(spec, synth::DomainShiftConfig{}, 3));
    std::filesystem::resize_file(dir2 + "/img_00000.pgm", 64);
    CHECK_THROWS_AS(synth::load_dataset(dir2), pgm_error);

    // malformed manifest
    const std::string dir3 = temp_dir("manifest");
    synth::save_dataset(dir3, synth::Dataset{});
    std::ofstream(dir3 + "/manifest.json") << "{ not json";
    try {
        synth::load_dataset(dir3);
        FAIL("expected parse error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("malformed") != std::string::npos);
    }
}

TEST_CASE("16-bit PGM round-trip is lossless after the first quantization") {
    const std::string dir = temp_dir("pgm16");
    Image img(6, 6);
    Rng rng(17);
    for (auto& v : img.px) v = float(rng.uniform());
    write_pgm16(dir + "/a.pgm", img);
    const Image once = read_pgm16(dir + "/a.pgm");
    write_pgm16(dir + "/b.pgm", once);
    const Image twice = read_pgm16(dir + "/b.pgm");
    CHECK(once.px == twice.px);
}
