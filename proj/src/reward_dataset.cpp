#include "rl4seg/reward_dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "rl4seg/evaluation.hpp"
#include "rl4seg/pgm.hpp"

namespace fs = std::filesystem;

namespace rl4seg::rdata {

const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::corrected_invalid: return "corrected_invalid";
        case Provenance::perturbed_weights: return "perturbed_weights";
        case Provenance::perturbed_image: return "perturbed_image";
        default: return "gold_valid";
    }
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "corrected_invalid") return Provenance::corrected_invalid;
    if (s == "perturbed_weights") return Provenance::perturbed_weights;
    if (s == "perturbed_image") return Provenance::perturbed_image;
    if (s == "gold_valid") return Provenance::gold_valid;
    throw std::runtime_error("unknown provenance '" + s + "'");
}

void PerturbationConfig::validate() const {
    if (pairs_per_axis < 1)
        throw std::invalid_argument("perturbation config: pairs_per_axis must be >= 1");
    if (!(weight_noise_sigma_rel > 0))
        throw std::invalid_argument("perturbation config: weight sigma must be > 0");
    if (brightness_delta.degenerate() || contrast_gain.degenerate())
        throw std::invalid_argument("perturbation config: range needs lo <= hi");
    if (!(contrast_gain.lo > 0))
        throw std::invalid_argument("perturbation config: contrast gain must be > 0");
}

nets::UNet perturb_weights(const nets::UNet& policy, double sigma_rel, uint64_t seed) {
    nets::UNet out = policy.clone();
    uint64_t tensor_idx = 0;
    for (auto& [name, p] : out.named_params()) {
        double sq = 0;
        for (float v : p->value.data) sq += double(v) * v;
        const double rms = std::sqrt(sq / double(p->value.data.size()));
        Rng rng(derive_seed(seed, "wperturb", 0, tensor_idx++));
        if (rms == 0) continue;
        for (auto& v : p->value.data) v += float(sigma_rel * rms * rng.normal());
    }
    return out;
}

Image perturb_image(const Image& img, double brightness_delta, double contrast_gain) {
    if (!(contrast_gain > 0)) throw std::invalid_argument("perturb_image: gain must be > 0");
    Image out(img.h, img.w);
    for (size_t i = 0; i < img.size(); ++i) {
        const double v =
            contrast_gain * (double(img.px[i]) - 0.5) + 0.5 + brightness_delta;
        out.px[i] = float(std::min(1.0, std::max(0.0, v)));
    }
    return out;
}

BuildResult build_reward_dataset(const nets::UNet& policy,
                                 const std::vector<const Image*>& target_images,
                                 const PerturbationConfig& pcfg,
                                 const anatomy::Thresholds& thr,
                                 const AblationFlags& flags, uint64_t seed) {
    if (target_images.empty())
        throw std::invalid_argument("build_reward_dataset: need at least one image");
    pcfg.validate();

    BuildResult out;
    out.gold.resize(target_images.size());
    out.triage.n_images = int(target_images.size());

    for (size_t i = 0; i < target_images.size(); ++i) {
        const Image& s = *target_images[i];
        const ag::Tensor dist = nets::policy_forward(policy, s);
        // every decoded segmentation is post-processed (stray components
        // dropped) before validity triage, mirroring evaluation
        Mask a = eval::postprocess(nets::greedy_action(dist));
        const uint64_t img_seed = derive_seed(seed, "rdata", 0, i);

        if (anatomy::assess_validity(a, thr).overall_valid()) {
            ++out.triage.n_valid;
            out.gold[i] = a;

            const bool any_perturb = flags.image_transforms || flags.weight_perturbations;
            if (any_perturb) {
                // the valid half of every perturbation pair
                RewardSample gold_sample{s, a, Mask(a.h, a.w, 1), a, Provenance::gold_valid};
                out.samples.push_back(std::move(gold_sample));
                ++out.triage.n_gold_samples;
            }
            if (flags.weight_perturbations) {
                for (int j = 0; j < pcfg.pairs_per_axis; ++j) {
                    nets::UNet noisy = perturb_weights(
                        policy, pcfg.weight_noise_sigma_rel,
                        derive_seed(img_seed, "axis/weights", uint64_t(j), 0));
                    const Mask ap =
                        eval::postprocess(nets::greedy_action(nets::policy_forward(noisy, s)));
                    out.samples.push_back(
                        {s, ap, agreement_map(ap, a), a, Provenance::perturbed_weights});
                    ++out.triage.n_perturbed_weight_samples;
                }
            }
            if (flags.image_transforms) {
                for (int j = 0; j < pcfg.pairs_per_axis; ++j) {
                    Rng rng(derive_seed(img_seed, "axis/image", uint64_t(j), 0));
                    const double delta = pcfg.brightness_delta.sample(rng);
                    const double gain = pcfg.contrast_gain.sample(rng);
                    const Image sp = perturb_image(s, delta, gain);
                    const Mask ap =
                        eval::postprocess(nets::greedy_action(nets::policy_forward(policy, sp)));
                    out.samples.push_back(
                        {s, ap, agreement_map(ap, a), a, Provenance::perturbed_image});
                    ++out.triage.n_perturbed_image_samples;
                }
            }
        } else {
            ++out.triage.n_invalid;
            if (!flags.anatomical_correction) {
                ++out.triage.n_skipped_correction_off;
                continue;
            }
            const anatomy::CorrectionResult cr = anatomy::correct(a, thr);
            if (!cr.ok()) {
                ++out.triage.n_irrecoverable;
                continue;
            }
            out.samples.push_back({s, a, agreement_map(a, cr.mask), cr.mask,
                                   Provenance::corrected_invalid});
            ++out.triage.n_corrected;
            ++out.triage.n_corrected_samples;
        }
    }
    return out;
}

namespace {

nlohmann::json triage_to_json(const TriageReport& t) {
    return {{"n_images", t.n_images},
            {"n_valid", t.n_valid},
            {"n_invalid", t.n_invalid},
            {"n_corrected", t.n_corrected},
            {"n_irrecoverable", t.n_irrecoverable},
            {"n_skipped_correction_off", t.n_skipped_correction_off},
            {"n_gold_samples", t.n_gold_samples},
            {"n_corrected_samples", t.n_corrected_samples},
            {"n_perturbed_weight_samples", t.n_perturbed_weight_samples},
            {"n_perturbed_image_samples", t.n_perturbed_image_samples}};
}

TriageReport triage_from_json(const nlohmann::json& j) {
    TriageReport t;
    t.n_images = j.value("n_images", 0);
    t.n_valid = j.value("n_valid", 0);
    t.n_invalid = j.value("n_invalid", 0);
    t.n_corrected = j.value("n_corrected", 0);
    t.n_irrecoverable = j.value("n_irrecoverable", 0);
    t.n_skipped_correction_off = j.value("n_skipped_correction_off", 0);
    t.n_gold_samples = j.value("n_gold_samples", 0);
    t.n_corrected_samples = j.value("n_corrected_samples", 0);
    t.n_perturbed_weight_samples = j.value("n_perturbed_weight_samples", 0);
    t.n_perturbed_image_samples = j.value("n_perturbed_image_samples", 0);
    return t;
}

}  // namespace

void save_reward_dataset(const std::string& dir, const std::vector<RewardSample>& samples,
                         const TriageReport& triage) {
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "rl4seg-reward-dataset";
    manifest["version"] = 1;
    manifest["triage"] = triage_to_json(triage);
    nlohmann::json records = nlohmann::json::array();
    char name[64];
    for (size_t i = 0; i < samples.size(); ++i) {
        const RewardSample& rs = samples[i];
        nlohmann::json rec;
        std::snprintf(name, sizeof name, "s_%06zu.pgm", i);
        write_pgm16((fs::path(dir) / name).string(), rs.s);
        rec["s"] = name;
        std::snprintf(name, sizeof name, "a_%06zu.pgm", i);
        write_pgm8((fs::path(dir) / name).string(), rs.a);
        rec["a"] = name;
        std::snprintf(name, sizeof name, "e_%06zu.pgm", i);
        write_pgm8((fs::path(dir) / name).string(), rs.e);
        rec["e"] = name;
        std::snprintf(name, sizeof name, "ref_%06zu.pgm", i);
        write_pgm8((fs::path(dir) / name).string(), rs.ref);
        rec["ref"] = name;
        rec["provenance"] = to_string(rs.provenance);
        records.push_back(std::move(rec));
    }
    manifest["records"] = std::move(records);
    std::ofstream f(fs::path(dir) / "provenance.json");
    f << manifest.dump(2) << "\n";
    if (!f) throw std::runtime_error("save_reward_dataset: cannot write provenance.json");
}

LoadedRewardDataset load_reward_dataset(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "provenance.json");
    if (!f)
        throw std::runtime_error("load_reward_dataset: missing provenance.json in " + dir);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("load_reward_dataset: malformed provenance.json: " +
                                 std::string(e.what()));
    }
    if (manifest.value("format", "") != "rl4seg-reward-dataset")
        throw std::runtime_error("load_reward_dataset: not a reward dataset: " + dir);

    LoadedRewardDataset out;
    out.triage = triage_from_json(manifest.at("triage"));
    size_t idx = 0;
    for (const auto& rec : manifest.at("records")) {
        RewardSample rs;
        rs.s = read_pgm16((fs::path(dir) / rec.at("s").get<std::string>()).string());
        rs.a = read_pgm8((fs::path(dir) / rec.at("a").get<std::string>()).string());
        rs.e = read_pgm8((fs::path(dir) / rec.at("e").get<std::string>()).string());
        rs.ref = read_pgm8((fs::path(dir) / rec.at("ref").get<std::string>()).string());
        rs.provenance = provenance_from_string(rec.at("provenance").get<std::string>());
        if (!(agreement_map(rs.a, rs.ref) == rs.e))
            throw std::runtime_error(
                "load_reward_dataset: agreement map invariant violated at record " +
                std::to_string(idx));
        out.samples.push_back(std::move(rs));
        ++idx;
    }
    return out;
}

}  // namespace rl4seg::rdata
