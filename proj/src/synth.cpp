#include "rl4seg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "rl4seg/morphology.hpp"
#include "rl4seg/pgm.hpp"

namespace fs = std::filesystem;

namespace rl4seg::synth {

const char* to_string(Domain d) { return d == Domain::source ? "source" : "target"; }
const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

void DomainShiftConfig::validate() const {
    if (brightness_offset.degenerate() || contrast_gain.degenerate() ||
        speckle_noise_sigma.degenerate() || shape_elongation.degenerate() ||
        blur_sigma.degenerate())
        throw std::invalid_argument("shift config: every range needs lo <= hi");
}

namespace {

constexpr int kMaxRetries = 100;

struct ShapeParams {
    double cx, cy;        // LV center
    double a, b;          // semi-axes, x / y
    double exponent;      // superellipse power
    double rot;           // radians
    double myo_base;      // base band thickness, px
    double myo_amp;       // relative thickness modulation
    double myo_phase;
    bool basal_gap;
    double gap_half_deg;  // wedge half-width at the top
};

Mask rasterize(const ShapeParams& p, int h, int w) {
    Mask mask(h, w, kBG);
    Mask lv(h, w, 0);
    const double cr = std::cos(p.rot), sr = std::sin(p.rot);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dx = x - p.cx, dy = y - p.cy;
            const double u = std::abs(dx * cr + dy * sr) / p.a;
            const double v = std::abs(-dx * sr + dy * cr) / p.b;
            if (std::pow(u, p.exponent) + std::pow(v, p.exponent) <= 1.0) lv.at(y, x) = 1;
        }

    const std::vector<int64_t> d2 = morph::edt_sq(lv);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = size_t(y) * w + x;
            if (lv.px[i]) {
                mask.px[i] = kLV;
                continue;
            }
            if (d2[i] == morph::kEdtInf) continue;
            const double ang = std::atan2(double(y) - p.cy, double(x) - p.cx);
            const double t = p.myo_base * (1.0 + p.myo_amp * std::sin(ang + p.myo_phase));
            if (std::sqrt(double(d2[i])) > t) continue;
            if (p.basal_gap) {
                // wedge around "up" (-y); angle of up is -pi/2
                double d = ang + 1.5707963267948966;
                while (d > 3.14159265358979323846) d -= 2 * 3.14159265358979323846;
                while (d < -3.14159265358979323846) d += 2 * 3.14159265358979323846;
                if (std::abs(d) * 180.0 / 3.14159265358979323846 < p.gap_half_deg) continue;
            }
            mask.px[i] = kMYO;
        }
    return mask;
}

ShapeParams sample_shape(Rng& rng, Domain domain, const DomainShiftConfig& cfg, int h,
                         int w) {
    // geometry tuned at 64x64; smaller grids scale down with floors
    const double s = std::min(h, w) / 64.0;
    ShapeParams p;
    p.cx = w / 2.0 + rng.uniform(-4.0 * s, 4.0 * s);
    p.cy = h / 2.0 + rng.uniform(-4.0 * s, 4.0 * s);
    p.a = std::max(2.5, rng.uniform(8.0, 13.0) * s);
    p.b = std::max(2.5, rng.uniform(8.0, 13.0) * s);
    if (domain == Domain::target) {
        p.b = std::min(14.5 * s, p.b * cfg.shape_elongation.sample(rng));
    }
    p.exponent = rng.uniform(1.8, 2.6);
    p.rot = rng.uniform(-0.45, 0.45);
    p.myo_base = std::max(1.6, rng.uniform(4.0, 7.0) * s);
    p.myo_amp = rng.uniform(0.0, 0.2);
    p.myo_phase = rng.uniform(0.0, 6.283185307179586);
    p.basal_gap = rng.uniform() < 0.5;
    p.gap_half_deg = rng.uniform(8.0, 20.0);
    return p;
}

void gaussian_blur(Image& img, double sigma) {
    if (sigma <= 0.05) return;
    const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<float> k(size_t(radius) + 1);
    double norm = 0;
    for (int i = 0; i <= radius; ++i) {
        k[i] = float(std::exp(-0.5 * (double(i) * i) / (sigma * sigma)));
        norm += (i == 0 ? 1.0 : 2.0) * k[i];
    }
    for (auto& v : k) v = float(v / norm);

    Image tmp(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            float acc = k[0] * img.at(y, x);
            for (int i = 1; i <= radius; ++i) {
                acc += k[i] * img.at(y, std::max(0, x - i));
                acc += k[i] * img.at(y, std::min(img.w - 1, x + i));
            }
            tmp.at(y, x) = acc;
        }
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            float acc = k[0] * tmp.at(y, x);
            for (int i = 1; i <= radius; ++i) {
                acc += k[i] * tmp.at(std::max(0, y - i), x);
                acc += k[i] * tmp.at(std::min(img.h - 1, y + i), x);
            }
            img.at(y, x) = acc;
        }
}

Image render_image(const Mask& mask, Rng& rng, Domain domain,
                   const DomainShiftConfig& cfg) {
    // Class base intensities with per-scene jitter. BG sits below the
    // LV..MYO range so blurred class interfaces do not alias to BG.
    float base[3];
    base[kBG] = float(0.06 + rng.uniform(-0.02, 0.02));
    base[kLV] = float(0.18 + rng.uniform(-0.03, 0.03));
    base[kMYO] = float(0.55 + rng.uniform(-0.05, 0.05));

    double brightness = 0.0, gain = 1.0;
    double speckle = 0.08, blur = rng.uniform(0.4, 0.8);
    if (domain == Domain::target) {
        brightness = cfg.brightness_offset.sample(rng);
        gain = cfg.contrast_gain.sample(rng);
        speckle = cfg.speckle_noise_sigma.sample(rng);
        blur = cfg.blur_sigma.sample(rng);
    }

    Image img(mask.h, mask.w);
    for (size_t i = 0; i < img.size(); ++i) {
        double v = base[mask.px[i]] + brightness;
        v *= 1.0 + speckle * rng.normal();
        img.px[i] = float(v);
    }
    gaussian_blur(img, blur);
    for (auto& v : img.px) {
        double out = gain * (double(v) - 0.5) + 0.5;
        v = float(std::min(1.0, std::max(0.0, out)));
    }
    return img;
}

}  // namespace

std::vector<Scene> generate_dataset(int n, Domain domain, const DomainShiftConfig& cfg,
                                    uint64_t seed, int h, int w, float spacing_mm) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    cfg.validate();
    const anatomy::Thresholds thr;  // generator contract: defaults
    std::vector<Scene> out(static_cast<size_t>(n));

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        const uint64_t sample_seed =
            derive_seed(seed, std::string("synth/") + to_string(domain), 0, uint64_t(i));
        Mask mask;
        bool ok = false;
        for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
            Rng rng(derive_seed(sample_seed, "shape", uint64_t(attempt), 0));
            const ShapeParams p = sample_shape(rng, domain, cfg, h, w);
            mask = rasterize(p, h, w);
            if (anatomy::assess_validity(mask, thr).overall_valid()) {
                ok = true;
                break;
            }
        }
        if (!ok)
            throw std::runtime_error("generate_dataset: no valid shape after " +
                                     std::to_string(kMaxRetries) + " retries (sample " +
                                     std::to_string(i) + ")");
        Rng irng(derive_seed(sample_seed, "intensity", 0, 0));
        Scene sc;
        sc.image = render_image(mask, irng, domain, cfg);
        sc.mask = std::move(mask);
        sc.spacing_mm = spacing_mm;
        sc.domain = domain;
        sc.id = i;
        out[size_t(i)] = std::move(sc);
    }
    return out;
}

void withhold_masks(std::vector<Scene>& scenes) {
    for (auto& s : scenes) s.mask = Mask();
}

std::vector<const Scene*> Dataset::select(Domain d, Split s) const {
    std::vector<const Scene*> out;
    for (const auto& sc : scenes)
        if (sc.domain == d && sc.split == s) out.push_back(&sc);
    return out;
}

Dataset generate_full(const DatasetSpec& spec, const DomainShiftConfig& shift,
                      uint64_t master_seed) {
    Dataset ds;
    ds.spec = spec;
    ds.shift = shift;
    ds.seed = master_seed;

    const int n_src = spec.source_train + spec.source_val + spec.source_test;
    auto src = generate_dataset(n_src, Domain::source, shift,
                                derive_seed(master_seed, "dataset/source"), spec.h, spec.w,
                                spec.spacing_mm);
    for (int i = 0; i < n_src; ++i) {
        src[size_t(i)].split = i < spec.source_train ? Split::train
                               : i < spec.source_train + spec.source_val ? Split::val
                                                                         : Split::test;
    }
    const int n_tgt = spec.target_train + spec.target_test;
    auto tgt = generate_dataset(n_tgt, Domain::target, shift,
                                derive_seed(master_seed, "dataset/target"), spec.h, spec.w,
                                spec.spacing_mm);
    for (int i = 0; i < n_tgt; ++i)
        tgt[size_t(i)].split = i < spec.target_train ? Split::train : Split::test;
    // unlabeled target training data: images only
    for (auto& sc : tgt)
        if (sc.split == Split::train) sc.mask = Mask();

    ds.scenes = std::move(src);
    ds.scenes.insert(ds.scenes.end(), std::make_move_iterator(tgt.begin()),
                     std::make_move_iterator(tgt.end()));
    return ds;
}

namespace {

nlohmann::json shift_to_json(const DomainShiftConfig& c) {
    auto range = [](const Range& r) { return nlohmann::json{{"lo", r.lo}, {"hi", r.hi}}; };
    return {{"brightness_offset", range(c.brightness_offset)},
            {"contrast_gain", range(c.contrast_gain)},
            {"speckle_noise_sigma", range(c.speckle_noise_sigma)},
            {"shape_elongation", range(c.shape_elongation)},
            {"blur_sigma", range(c.blur_sigma)},
            {"seed", c.seed}};
}

DomainShiftConfig shift_from_json(const nlohmann::json& j) {
    DomainShiftConfig c;
    auto range = [&](const char* key, Range& r) {
        if (!j.contains(key)) return;
        r.lo = j.at(key).at("lo").get<double>();
        r.hi = j.at(key).at("hi").get<double>();
    };
    range("brightness_offset", c.brightness_offset);
    range("contrast_gain", c.contrast_gain);
    range("speckle_noise_sigma", c.speckle_noise_sigma);
    range("shape_elongation", c.shape_elongation);
    range("blur_sigma", c.blur_sigma);
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    return c;
}

Domain domain_from_string(const std::string& s) {
    if (s == "source") return Domain::source;
    if (s == "target") return Domain::target;
    throw std::runtime_error("manifest: unknown domain '" + s + "'");
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw std::runtime_error("manifest: unknown split '" + s + "'");
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "rl4seg-dataset";
    manifest["version"] = 1;
    manifest["h"] = ds.spec.h;
    manifest["w"] = ds.spec.w;
    manifest["spacing_mm"] = ds.spec.spacing_mm;
    manifest["seed"] = ds.seed;
    manifest["shift"] = shift_to_json(ds.shift);
    manifest["splits"] = {{"source_train", ds.spec.source_train},
                          {"source_val", ds.spec.source_val},
                          {"source_test", ds.spec.source_test},
                          {"target_train", ds.spec.target_train},
                          {"target_test", ds.spec.target_test}};
    nlohmann::json records = nlohmann::json::array();
    char name[64];
    for (size_t i = 0; i < ds.scenes.size(); ++i) {
        const Scene& sc = ds.scenes[i];
        std::snprintf(name, sizeof name, "img_%05zu.pgm", i);
        const std::string img_name = name;
        write_pgm16((fs::path(dir) / img_name).string(), sc.image);
        nlohmann::json rec = {{"id", sc.id},
                              {"domain", to_string(sc.domain)},
                              {"split", to_string(sc.split)},
                              {"image", img_name}};
        if (sc.has_mask()) {
            std::snprintf(name, sizeof name, "msk_%05zu.pgm", i);
            write_pgm8((fs::path(dir) / name).string(), sc.mask);
            rec["mask"] = name;
        }
        records.push_back(std::move(rec));
    }
    manifest["records"] = std::move(records);
    std::ofstream f(fs::path(dir) / "manifest.json");
    f << manifest.dump(2) << "\n";
    if (!f) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error("load_dataset: missing manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("load_dataset: malformed manifest.json in " + dir + ": " +
                                 e.what());
    }
    if (manifest.value("format", "") != "rl4seg-dataset")
        throw std::runtime_error("load_dataset: not a dataset manifest: " + dir);

    Dataset ds;
    ds.spec.h = manifest.at("h").get<int>();
    ds.spec.w = manifest.at("w").get<int>();
    ds.spec.spacing_mm = manifest.at("spacing_mm").get<float>();
    ds.seed = manifest.at("seed").get<uint64_t>();
    ds.shift = shift_from_json(manifest.at("shift"));
    const auto& splits = manifest.at("splits");
    ds.spec.source_train = splits.at("source_train").get<int>();
    ds.spec.source_val = splits.at("source_val").get<int>();
    ds.spec.source_test = splits.at("source_test").get<int>();
    ds.spec.target_train = splits.at("target_train").get<int>();
    ds.spec.target_test = splits.at("target_test").get<int>();

    for (const auto& rec : manifest.at("records")) {
        Scene sc;
        sc.id = rec.at("id").get<int>();
        sc.domain = domain_from_string(rec.at("domain").get<std::string>());
        sc.split = split_from_string(rec.at("split").get<std::string>());
        sc.spacing_mm = ds.spec.spacing_mm;
        sc.image = read_pgm16((fs::path(dir) / rec.at("image").get<std::string>()).string());
        if (rec.contains("mask"))
            sc.mask = read_pgm8((fs::path(dir) / rec.at("mask").get<std::string>()).string());
        ds.scenes.push_back(std::move(sc));
    }
    return ds;
}

}  // namespace rl4seg::synth
