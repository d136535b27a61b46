#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "rl4seg/evaluation.hpp"

using namespace rl4seg;

namespace {

Mask blob(int h, int w, int y0, int y1, int x0, int x1) {
    Mask m(h, w);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) m.at(y, x) = 1;
    return m;
}

}  // namespace

TEST_CASE("dice basics") {
    const Mask a = blob(8, 8, 2, 4, 2, 4);
    CHECK(eval::dice(a, a) == 1.0);
    CHECK(eval::dice(Mask(8, 8), Mask(8, 8)) == 1.0);  // both empty
    CHECK(eval::dice(a, blob(8, 8, 6, 7, 6, 7)) == 0.0);

    // |P| = |R| = 2, overlap 1 -> 0.5
    Mask p(4, 4), r(4, 4);
    p.at(0, 0) = p.at(0, 1) = 1;
    r.at(0, 1) = r.at(0, 2) = 1;
    CHECK(eval::dice(p, r) == 0.5);
    CHECK(eval::dice(r, p) == 0.5);  // symmetric
}

TEST_CASE("hausdorff basics and spacing") {
    const Mask a = blob(16, 16, 4, 8, 4, 8);
    CHECK(eval::hausdorff_mm(a, a, 1.f) == 0.0);

    Mask p(16, 16), r(16, 16);
    p.at(4, 4) = 1;
    r.at(4, 9) = 1;  // 5 px apart
    CHECK(*eval::hausdorff_mm(p, r, 1.f) == doctest::Approx(5.0));
    CHECK(*eval::hausdorff_mm(p, r, 0.5f) == doctest::Approx(2.5));
    CHECK(*eval::hausdorff_mm(p, r, 1.f) == *eval::hausdorff_mm(r, p, 1.f));

    CHECK_FALSE(eval::hausdorff_mm(Mask(16, 16), a, 1.f).has_value());
    CHECK_THROWS_AS(eval::hausdorff_mm(Mask(8, 8), a, 1.f), std::invalid_argument);
}

TEST_CASE("hausdorff equals the all-pairs oracle on random blobs") {
    Rng rng(3);
    for (int trial = 0; trial < 120; ++trial) {
        const int h = 8 + int(rng.uniform_int(25));
        const int w = 8 + int(rng.uniform_int(25));
        const Mask a = oracle::random_binary(rng, h, w, rng.uniform(0.1, 0.6));
        const Mask b = oracle::random_binary(rng, h, w, rng.uniform(0.1, 0.6));
        const auto got = eval::hausdorff_mm(a, b, 1.f);
        const auto want = oracle::hausdorff_mm(a, b, 1.f);
        REQUIRE(got.has_value() == want.has_value());
        if (got) CHECK(*got == *want);  // identical sqrt of identical integers
    }
}

TEST_CASE("postprocess keeps one component per foreground class and is idempotent") {
    Mask m(16, 16, kBG);
    for (int y = 4; y < 10; ++y)
        for (int x = 4; x < 10; ++x) m.at(y, x) = kLV;
    CHECK(eval::postprocess(m) == m);  // single component untouched

    Mask two = m;
    two.at(14, 14) = kLV;  // smaller blob removed
    const Mask cleaned = eval::postprocess(two);
    CHECK(cleaned == m);
    CHECK(eval::postprocess(cleaned) == cleaned);

    two.at(1, 1) = kMYO;
    two.at(1, 2) = kMYO;
    two.at(12, 2) = kMYO;
    const Mask cleaned2 = eval::postprocess(two);
    CHECK(cleaned2.count(kMYO) == 2);
}

TEST_CASE("uncertainty map: T=1 complement, large-T flattening, monotonicity") {
    const nets::UNet reward = nets::UNet::init(nets::reward_arch(4), 5);
    Image img(16, 16, 0.4f);
    const Mask a(16, 16, kLV);
    const ag::Tensor r = nets::reward_forward(reward, img, a);

    const ag::Tensor u1 = eval::uncertainty_map(reward, img, a, 1.0);
    for (size_t i = 0; i < r.numel(); ++i)
        CHECK(u1.data[i] == doctest::Approx(1.f - r.data[i]).epsilon(1e-5));

    const ag::Tensor uflat = eval::uncertainty_map(reward, img, a, 1e7);
    for (float v : uflat.data) CHECK(v == doctest::Approx(0.5f).epsilon(1e-3));

    // monotone decreasing in r for fixed T
    const ag::Tensor u2 = eval::uncertainty_map(reward, img, a, 2.0);
    for (size_t i = 0; i + 1 < r.numel(); ++i)
        for (size_t j = i + 1; j < std::min(r.numel(), i + 4); ++j)
            if (r.data[i] < r.data[j]) CHECK(u2.data[i] >= u2.data[j]);

    CHECK_THROWS_AS(eval::uncertainty_map(reward, img, a, 0.0), std::invalid_argument);
}

TEST_CASE("temperature fitting recovers known miscalibration") {
    // construct per-pixel probabilities p = sigmoid(z) whose true hit rate
    // is sigmoid(z / T_true); the fitted temperature must recover T_true
    auto build = [](double t_true, uint64_t seed) {
        Rng rng(seed);
        std::vector<std::pair<ag::Tensor, Mask>> pairs;
        for (int k = 0; k < 20; ++k) {
            ag::Tensor prob({32, 32});
            Mask target(32, 32);
            for (size_t i = 0; i < prob.numel(); ++i) {
                const double z = rng.normal(0.0, 2.0);
                prob.data[i] = float(1.0 / (1.0 + std::exp(-z)));
                const double p_true = 1.0 / (1.0 + std::exp(-z / t_true));
                target.px[i] = rng.uniform() < p_true ? 1 : 0;
            }
            pairs.emplace_back(std::move(prob), std::move(target));
        }
        return pairs;
    };

    const auto calibrated = build(1.0, 11);
    const double t1 = eval::fit_temperature(calibrated);
    CHECK(t1 > 0.9);
    CHECK(t1 < 1.1);

    const auto overconfident = build(2.0, 12);
    const double t2 = eval::fit_temperature(overconfident);
    CHECK(t2 > 1.8);
    CHECK(t2 < 2.2);
    // scaling reduces the validation BCE
    CHECK(eval::bce_of_pairs(overconfident, t2) <=
          eval::bce_of_pairs(overconfident, 1.0));

    CHECK_THROWS_AS(eval::fit_temperature({}), std::invalid_argument);
}

TEST_CASE("ECE: closed-form cases and an independent recomputation") {
    // perfectly sharp and correct
    std::vector<float> conf(1000, 1.0f);
    std::vector<uint8_t> correct(1000, 1);
    CHECK(eval::ece_and_reliability(conf, correct).ece == doctest::Approx(0.0));

    // one bin, conf 0.8, accuracy 0.6 -> ECE 0.2
    std::vector<float> c2(10, 0.8f);
    std::vector<uint8_t> k2{1, 1, 1, 1, 1, 1, 0, 0, 0, 0};
    const auto rep = eval::ece_and_reliability(c2, k2, 1);
    CHECK(rep.ece == doctest::Approx(0.2).epsilon(1e-6));

    // random instance vs direct recomputation
    Rng rng(9);
    std::vector<float> rc;
    std::vector<uint8_t> rk;
    for (int i = 0; i < 5000; ++i) {
        rc.push_back(float(rng.uniform()));
        rk.push_back(rng.uniform() < 0.5 ? 1 : 0);
    }
    const int bins = 10;
    const auto got = eval::ece_and_reliability(rc, rk, bins);
    double want = 0;
    for (int b = 0; b < bins; ++b) {
        double cs = 0, ks = 0;
        size_t n = 0;
        for (size_t i = 0; i < rc.size(); ++i) {
            int bi = std::min(int(rc[i] * bins), bins - 1);
            if (bi != b) continue;
            cs += rc[i];
            ks += rk[i];
            ++n;
        }
        if (n) want += double(n) / double(rc.size()) * std::abs(ks / n - cs / n);
    }
    CHECK(std::abs(got.ece - want) < 1e-12);
}

TEST_CASE("AUROC sanity") {
    //  perfect separation
    std::vector<float> s{0.1f, 0.2f, 0.8f, 0.9f};
    std::vector<uint8_t> l{0, 0, 1, 1};
    CHECK(eval::auroc(s, l) == doctest::Approx(1.0));
    // anti-separation
    std::vector<uint8_t> l2{1, 1, 0, 0};
    CHECK(eval::auroc(s, l2) == doctest::Approx(0.0));
    // uninformative scores (all ties) -> 0.5
    std::vector<float> flat(100, 0.5f);
    std::vector<uint8_t> lr;
    Rng rng(13);
    for (int i = 0; i < 100; ++i) lr.push_back(rng.uniform() < 0.4);
    CHECK(eval::auroc(flat, lr) == doctest::Approx(0.5));
}

TEST_CASE("evaluate_policy scores hand-checkable fixtures") {
    // scene whose reference is a simple ring; policy output is replaced by
    // feeding crafted masks through the metric path via a scene comparison
    auto scenes = synth::generate_dataset(3, synth::Domain::source,
                                          synth::DomainShiftConfig{}, 19, 32, 32);

    // a perfect "policy" is emulated by scoring reference against reference
    for (const auto& sc : scenes) {
        CHECK(eval::dice(eval::structure_endo(sc.mask), eval::structure_endo(sc.mask)) == 1.0);
        CHECK(*eval::hausdorff_mm(eval::structure_epi(sc.mask), eval::structure_epi(sc.mask),
                                  sc.spacing_mm) == 0.0);
    }

    // all-background prediction: zero dice, no boundary for HD, invalid
    const Mask bg(32, 32, kBG);
    CHECK(eval::dice(eval::structure_endo(bg), eval::structure_endo(scenes[0].mask)) == 0.0);
    CHECK_FALSE(eval::hausdorff_mm(eval::structure_endo(bg),
                                   eval::structure_endo(scenes[0].mask), 1.f)
                    .has_value());
    CHECK_FALSE(anatomy::assess_validity(bg, anatomy::Thresholds{}).overall_valid());

    // hand-computed fixture: 2x2 LV vs 2x2 LV shifted by one pixel
    Mask pred(8, 8, kBG), ref(8, 8, kBG);
    pred.at(2, 2) = pred.at(2, 3) = pred.at(3, 2) = pred.at(3, 3) = kLV;
    ref.at(2, 3) = ref.at(2, 4) = ref.at(3, 3) = ref.at(3, 4) = kLV;
    CHECK(eval::dice(eval::structure_endo(pred), eval::structure_endo(ref)) ==
          doctest::Approx(0.5));
    CHECK(*eval::hausdorff_mm(eval::structure_endo(pred), eval::structure_endo(ref), 1.f) ==
          doctest::Approx(1.0));
}

TEST_CASE("evaluate_policy aggregates over a real policy run") {
    auto scenes = synth::generate_dataset(6, synth::Domain::source,
                                          synth::DomainShiftConfig{}, 23, 32, 32);
    std::vector<const synth::Scene*> ptrs;
    for (auto& sc : scenes) ptrs.push_back(&sc);
    const nets::UNet policy = nets::UNet::init(nets::policy_arch(4), 29);

    std::vector<eval::PerSampleMetrics> rows;
    const auto m = eval::evaluate_policy(policy, ptrs, anatomy::Thresholds{}, &rows);
    CHECK(m.n == 6);
    CHECK(rows.size() == 6);
    CHECK(m.dice_avg == doctest::Approx(0.5 * (m.dice_endo + m.dice_epi)));
    CHECK(m.anatomical_validity >= 0.0);
    CHECK(m.anatomical_validity <= 1.0);

    const auto dir = std::filesystem::temp_directory_path() / "rl4seg_eval_csv";
    std::filesystem::create_directories(dir);
    eval::write_metrics_csv((dir / "metrics.csv").string(), rows, m);
    CHECK(std::filesystem::file_size(dir / "metrics.csv") > 100);

    eval::CalibrationReport rep;
    rep.bins = 10;
    rep.bin_conf.assign(10, 0.5);
    rep.bin_acc.assign(10, 0.5);
    rep.bin_count.assign(10, 1);
    eval::write_reliability_csv((dir / "rel.csv").string(), rep);
    eval::write_reliability_svg((dir / "rel.svg").string(), rep);
    CHECK(std::filesystem::file_size(dir / "rel.svg") > 200);
}
