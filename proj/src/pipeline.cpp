#include "rl4seg/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rl4seg/nets.hpp"

namespace fs = std::filesystem;

namespace rl4seg::pipeline {

namespace {

Range range_from_json(const nlohmann::json& j, Range fallback) {
    if (j.is_null()) return fallback;
    return {j.at("lo").get<double>(), j.at("hi").get<double>()};
}

nlohmann::json range_to_json(const Range& r) { return {{"lo", r.lo}, {"hi", r.hi}}; }

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    c.out_dir = get_or<std::string>(j, "out_dir", c.out_dir);
    c.dataset_dir = get_or<std::string>(j, "dataset_dir", c.dataset_dir);
    c.master_seed = get_or<uint64_t>(j, "master_seed", c.master_seed);

    if (j.contains("data")) {
        const auto& d = j.at("data");
        c.data.h = get_or(d, "h", c.data.h);
        c.data.w = get_or(d, "w", c.data.w);
        c.data.spacing_mm = get_or(d, "spacing_mm", c.data.spacing_mm);
        c.data.source_train = get_or(d, "source_train", c.data.source_train);
        c.data.source_val = get_or(d, "source_val", c.data.source_val);
        c.data.source_test = get_or(d, "source_test", c.data.source_test);
        c.data.target_train = get_or(d, "target_train", c.data.target_train);
        c.data.target_test = get_or(d, "target_test", c.data.target_test);
    }
    if (j.contains("shift")) {
        const auto& s = j.at("shift");
        auto rng = [&](const char* k, Range& r) {
            if (s.contains(k)) r = range_from_json(s.at(k), r);
        };
        rng("brightness_offset", c.shift.brightness_offset);
        rng("contrast_gain", c.shift.contrast_gain);
        rng("speckle_noise_sigma", c.shift.speckle_noise_sigma);
        rng("shape_elongation", c.shift.shape_elongation);
        rng("blur_sigma", c.shift.blur_sigma);
        c.shift.seed = get_or<uint64_t>(s, "seed", c.shift.seed);
    }
    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        c.thresholds.frontier_ratio_max =
            get_or(t, "frontier_ratio_max", c.thresholds.frontier_ratio_max);
        c.thresholds.myo_thickness_ratio_min =
            get_or(t, "myo_thickness_ratio_min", c.thresholds.myo_thickness_ratio_min);
        c.thresholds.lv_myo_ratio_lo = get_or(t, "lv_myo_ratio_lo", c.thresholds.lv_myo_ratio_lo);
        c.thresholds.lv_myo_ratio_hi = get_or(t, "lv_myo_ratio_hi", c.thresholds.lv_myo_ratio_hi);
    }
    if (j.contains("net")) c.net_base_width = get_or(j.at("net"), "base_width", c.net_base_width);
    if (j.contains("pretrain")) {
        const auto& p = j.at("pretrain");
        c.pretrain_epochs = get_or(p, "epochs", c.pretrain_epochs);
        c.pretrain_lr = get_or(p, "lr", c.pretrain_lr);
        c.pretrain_batch = get_or(p, "batch", c.pretrain_batch);
    }
    if (j.contains("reward")) {
        const auto& r = j.at("reward");
        c.reward_epochs = get_or(r, "epochs", c.reward_epochs);
        c.reward_lr = get_or(r, "lr", c.reward_lr);
        c.reward_batch = get_or(r, "batch", c.reward_batch);
        c.reward_holdout_frac = get_or(r, "holdout_frac", c.reward_holdout_frac);
    }
    if (j.contains("perturb")) {
        const auto& p = j.at("perturb");
        c.perturb.weight_noise_sigma_rel =
            get_or(p, "weight_noise_sigma_rel", c.perturb.weight_noise_sigma_rel);
        if (p.contains("brightness_delta"))
            c.perturb.brightness_delta =
                range_from_json(p.at("brightness_delta"), c.perturb.brightness_delta);
        if (p.contains("contrast_gain"))
            c.perturb.contrast_gain =
                range_from_json(p.at("contrast_gain"), c.perturb.contrast_gain);
        c.perturb.pairs_per_axis = get_or(p, "pairs_per_axis", c.perturb.pairs_per_axis);
        c.perturb.seed = get_or<uint64_t>(p, "seed", c.perturb.seed);
    }
    if (j.contains("ppo")) {
        const auto& p = j.at("ppo");
        c.ppo.epsilon = get_or(p, "epsilon", c.ppo.epsilon);
        c.ppo.alpha = get_or(p, "alpha", c.ppo.alpha);
        c.ppo.beta = get_or(p, "beta", c.ppo.beta);
        c.ppo.ppo_epochs = get_or(p, "ppo_epochs", c.ppo.ppo_epochs);
        c.ppo.policy_lr = get_or(p, "policy_lr", c.ppo.policy_lr);
        c.ppo.value_lr = get_or(p, "value_lr", c.ppo.value_lr);
        c.ppo.batch_size = get_or(p, "batch_size", c.ppo.batch_size);
        c.ppo.ratio_clamp_max = get_or(p, "ratio_clamp_max", c.ppo.ratio_clamp_max);
    }
    if (j.contains("adapt")) {
        const auto& a = j.at("adapt");
        c.iterations = get_or(a, "iterations", c.iterations);
        c.subset_size = get_or(a, "subset_size", c.subset_size);
        c.value_persist = get_or(a, "value_persist", c.value_persist);
    }
    if (j.contains("ablate"))
        for (const auto& name : j.at("ablate")) c.disable_axis(name.get<std::string>());
    return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error("malformed config '" + path + "': " + e.what());
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["out_dir"] = out_dir;
    j["dataset_dir"] = dataset_dir;
    j["master_seed"] = master_seed;
    j["data"] = {{"h", data.h},
                 {"w", data.w},
                 {"spacing_mm", data.spacing_mm},
                 {"source_train", data.source_train},
                 {"source_val", data.source_val},
                 {"source_test", data.source_test},
                 {"target_train", data.target_train},
                 {"target_test", data.target_test}};
    j["shift"] = {{"brightness_offset", range_to_json(shift.brightness_offset)},
                  {"contrast_gain", range_to_json(shift.contrast_gain)},
                  {"speckle_noise_sigma", range_to_json(shift.speckle_noise_sigma)},
                  {"shape_elongation", range_to_json(shift.shape_elongation)},
                  {"blur_sigma", range_to_json(shift.blur_sigma)},
                  {"seed", shift.seed}};
    j["thresholds"] = {{"frontier_ratio_max", thresholds.frontier_ratio_max},
                       {"myo_thickness_ratio_min", thresholds.myo_thickness_ratio_min},
                       {"lv_myo_ratio_lo", thresholds.lv_myo_ratio_lo},
                       {"lv_myo_ratio_hi", thresholds.lv_myo_ratio_hi}};
    j["net"] = {{"base_width", net_base_width}};
    j["pretrain"] = {{"epochs", pretrain_epochs}, {"lr", pretrain_lr}, {"batch", pretrain_batch}};
    j["reward"] = {{"epochs", reward_epochs},
                   {"lr", reward_lr},
                   {"batch", reward_batch},
                   {"holdout_frac", reward_holdout_frac}};
    j["perturb"] = {{"weight_noise_sigma_rel", perturb.weight_noise_sigma_rel},
                    {"brightness_delta", range_to_json(perturb.brightness_delta)},
                    {"contrast_gain", range_to_json(perturb.contrast_gain)},
                    {"pairs_per_axis", perturb.pairs_per_axis},
                    {"seed", perturb.seed}};
    j["ppo"] = {{"epsilon", ppo.epsilon},
                {"alpha", ppo.alpha},
                {"beta", ppo.beta},
                {"ppo_epochs", ppo.ppo_epochs},
                {"policy_lr", ppo.policy_lr},
                {"value_lr", ppo.value_lr},
                {"batch_size", ppo.batch_size},
                {"ratio_clamp_max", ppo.ratio_clamp_max}};
    j["adapt"] = {{"iterations", iterations},
                  {"subset_size", subset_size},
                  {"value_persist", value_persist}};
    nlohmann::json ablate = nlohmann::json::array();
    if (!axes.image_transforms) ablate.push_back("image_transforms");
    if (!axes.weight_perturbations) ablate.push_back("weight_perturbations");
    if (!axes.anatomical_correction) ablate.push_back("anatomical_correction");
    j["ablate"] = std::move(ablate);
    return j;
}

void RunConfig::disable_axis(const std::string& name) {
    if (name == "image_transforms")
        axes.image_transforms = false;
    else if (name == "weight_perturbations")
        axes.weight_perturbations = false;
    else if (name == "anatomical_correction")
        axes.anatomical_correction = false;
    else
        throw config_error("unknown ablation axis '" + name +
                           "' (expected image_transforms, weight_perturbations or "
                           "anatomical_correction)");
}

void RunConfig::validate() const {
    if (iterations < 1) throw config_error("adapt.iterations must be >= 1");
    if (subset_size < 1) throw config_error("adapt.subset_size must be >= 1");
    if (iterations * subset_size > data.target_train)
        throw config_error("adapt: iterations x subset_size (" +
                           std::to_string(iterations * subset_size) +
                           ") exceeds the target train split (" +
                           std::to_string(data.target_train) + ")");
    if (net_base_width < 2) throw config_error("net.base_width must be >= 2");
    if (!(reward_holdout_frac >= 0 && reward_holdout_frac < 1))
        throw config_error("reward.holdout_frac must be in [0,1)");
    try {
        shift.validate();
        thresholds.validate();
        perturb.validate();
        ppo.validate();
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
}

// ---- manifest ----

namespace {

nlohmann::json metrics_to_json(const eval::SegMetrics& m) {
    return {{"dice_endo", m.dice_endo},
            {"dice_epi", m.dice_epi},
            {"dice_avg", m.dice_avg},
            {"dice_endo_std", m.dice_endo_std},
            {"dice_epi_std", m.dice_epi_std},
            {"hd_endo_mm", m.hd_endo_mm},
            {"hd_epi_mm", m.hd_epi_mm},
            {"hd_avg_mm", m.hd_avg_mm},
            {"hd_endo_std", m.hd_endo_std},
            {"hd_epi_std", m.hd_epi_std},
            {"anatomical_validity", m.anatomical_validity},
            {"n", m.n},
            {"hd_excluded", m.hd_excluded}};
}

eval::SegMetrics metrics_from_json(const nlohmann::json& j) {
    eval::SegMetrics m;
    m.dice_endo = j.value("dice_endo", 0.0);
    m.dice_epi = j.value("dice_epi", 0.0);
    m.dice_avg = j.value("dice_avg", 0.0);
    m.dice_endo_std = j.value("dice_endo_std", 0.0);
    m.dice_epi_std = j.value("dice_epi_std", 0.0);
    m.hd_endo_mm = j.value("hd_endo_mm", 0.0);
    m.hd_epi_mm = j.value("hd_epi_mm", 0.0);
    m.hd_avg_mm = j.value("hd_avg_mm", 0.0);
    m.hd_endo_std = j.value("hd_endo_std", 0.0);
    m.hd_epi_std = j.value("hd_epi_std", 0.0);
    m.anatomical_validity = j.value("anatomical_validity", 0.0);
    m.n = j.value("n", 0);
    m.hd_excluded = j.value("hd_excluded", 0);
    return m;
}

nlohmann::json triage_to_json(const rdata::TriageReport& t) {
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

rdata::TriageReport triage_from_json(const nlohmann::json& j) {
    rdata::TriageReport t;
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

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["format"] = "rl4seg-manifest";
    j["config"] = config;
    j["baseline"] = metrics_to_json(baseline);
    nlohmann::json its = nlohmann::json::array();
    for (const auto& it : iterations) {
        its.push_back({{"iteration", it.iteration},
                       {"target_test", metrics_to_json(it.target_test)},
                       {"triage", triage_to_json(it.triage)},
                       {"dr_total", it.dr_total},
                       {"reward_loss_first", it.reward_loss_first},
                       {"reward_loss_last", it.reward_loss_last},
                       {"gold_logp_before", it.gold_logp_before},
                       {"gold_logp_after", it.gold_logp_after},
                       {"wall_seconds", it.wall_seconds}});
    }
    j["iterations"] = std::move(its);
    j["temperature"] = temperature;
    j["holdout_ece"] = holdout_ece;
    j["checkpoints"] = {{"policy_ref", policy_ref_ckpt},
                        {"policy", policy_ckpt},
                        {"reward", reward_ckpt},
                        {"value", value_ckpt}};
    return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    RunManifest m;
    m.config = j.value("config", nlohmann::json::object());
    m.baseline = metrics_from_json(j.at("baseline"));
    for (const auto& ij : j.at("iterations")) {
        IterationMetrics it;
        it.iteration = ij.value("iteration", 0);
        it.target_test = metrics_from_json(ij.at("target_test"));
        it.triage = triage_from_json(ij.at("triage"));
        it.dr_total = ij.value("dr_total", 0);
        it.reward_loss_first = ij.value("reward_loss_first", 0.0);
        it.reward_loss_last = ij.value("reward_loss_last", 0.0);
        it.gold_logp_before = ij.value("gold_logp_before", 0.0);
        it.gold_logp_after = ij.value("gold_logp_after", 0.0);
        it.wall_seconds = ij.value("wall_seconds", 0.0);
        m.iterations.push_back(std::move(it));
    }
    m.temperature = j.value("temperature", 1.0);
    m.holdout_ece = j.value("holdout_ece", 0.0);
    if (j.contains("checkpoints")) {
        const auto& c = j.at("checkpoints");
        m.policy_ref_ckpt = c.value("policy_ref", "");
        m.policy_ckpt = c.value("policy", "");
        m.reward_ckpt = c.value("reward", "");
        m.value_ckpt = c.value("value", "");
    }
    return m;
}

void RunManifest::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write manifest '" + path + "'");
    f << to_json().dump(2) << "\n";
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open manifest '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error("malformed manifest '" + path + "': " + e.what());
    }
    if (j.value("format", "") != "rl4seg-manifest")
        throw config_error("'" + path + "' is not a run manifest");
    return from_json(j);
}

// ---- commands ----

void cmd_generate(const RunConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    synth::Dataset ds = synth::generate_full(cfg.data, cfg.shift, cfg.master_seed);
    synth::save_dataset(cfg.dataset_path(), ds);
}

namespace {

synth::Dataset load_dataset_checked(const RunConfig& cfg) {
    const std::string dir = cfg.dataset_path();
    if (!fs::exists(fs::path(dir) / "manifest.json"))
        throw config_error("no dataset at '" + dir + "' (run `rl4seg generate` first)");
    return synth::load_dataset(dir);
}

nets::UNet load_policy_checked(const std::string& path) {
    if (!fs::exists(path))
        throw config_error("no policy checkpoint at '" + path +
                           "' (run `rl4seg pretrain` first)");
    return nets::load_checkpoint(path).net;
}

struct TrainingLog {
    std::ofstream f;
    long step = 0;

    explicit TrainingLog(const std::string& path) : f(path) {
        if (!f) throw std::runtime_error("cannot write training log '" + path + "'");
        f << "step,clip_loss,entropy,mean_ratio,clip_fraction,value_bce,reward_bce\n";
    }
    void ppo_row(const ppo::StepStats& s) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,\n", step++, s.clip_loss,
                      s.entropy, s.mean_ratio, s.clip_fraction, s.value_bce);
        f << buf;
    }
    void reward_row(double bce) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%ld,,,,,,%.9g\n", step++, bce);
        f << buf;
    }
};

}  // namespace

PretrainOutcome cmd_pretrain(const RunConfig& cfg) {
    cfg.validate();
    const synth::Dataset ds = load_dataset_checked(cfg);
    fs::create_directories(fs::path(cfg.out_dir) / "checkpoints");

    nets::UNet policy = nets::UNet::init(nets::policy_arch(cfg.net_base_width),
                                         derive_seed(cfg.master_seed, "init/policy"));
    const auto train = ds.select(synth::Domain::source, synth::Split::train);
    const auto val = ds.select(synth::Domain::source, synth::Split::val);
    PretrainOutcome out;
    out.stats = ppo::pretrain_policy(policy, train, val, cfg.pretrain_epochs,
                                     cfg.pretrain_lr, cfg.pretrain_batch,
                                     derive_seed(cfg.master_seed, "pretrain"));

    const auto test = ds.select(synth::Domain::source, synth::Split::test);
    out.source_test = eval::evaluate_policy(policy, test, cfg.thresholds);

    const std::string ckpt = (fs::path(cfg.out_dir) / "checkpoints" / "policy_ref.ckpt").string();
    nets::save_checkpoint(ckpt, policy, cfg.master_seed);

    std::ofstream log(fs::path(cfg.out_dir) / "pretrain_log.csv");
    log << "epoch,cce_loss\n";
    char buf[96];
    for (size_t e = 0; e < out.stats.epoch_loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e, out.stats.epoch_loss[e]);
        log << buf;
    }
    nlohmann::json pj = {{"val_dice_avg", out.stats.val_dice_avg},
                         {"source_test", metrics_to_json(out.source_test)},
                         {"checkpoint", ckpt}};
    std::ofstream pf(fs::path(cfg.out_dir) / "pretrain.json");
    pf << pj.dump(2) << "\n";
    return out;
}

RunManifest cmd_adapt(const RunConfig& cfg) {
    cfg.validate();
    const synth::Dataset ds = load_dataset_checked(cfg);
    const std::string ref_ckpt =
        (fs::path(cfg.out_dir) / "checkpoints" / "policy_ref.ckpt").string();
    const nets::UNet policy_ref = load_policy_checked(ref_ckpt);
    if (policy_ref.arch.base != cfg.net_base_width)
        throw config_error("checkpoint width " + std::to_string(policy_ref.arch.base) +
                           " does not match config net.base_width");

    nets::UNet policy = policy_ref.clone();
    nets::UNet reward_net = nets::UNet::init(nets::reward_arch(cfg.net_base_width),
                                             derive_seed(cfg.master_seed, "init/reward"));
    nets::UNet value_net = nets::UNet::init(nets::value_arch(cfg.net_base_width),
                                            derive_seed(cfg.master_seed, "init/value"));

    const auto target_train = ds.select(synth::Domain::target, synth::Split::train);
    const auto target_test = ds.select(synth::Domain::target, synth::Split::test);
    if (int(target_train.size()) < cfg.iterations * cfg.subset_size)
        throw config_error("target train split smaller than iterations x subset_size");

    RunManifest manifest;
    manifest.config = cfg.to_json();
    manifest.policy_ref_ckpt = ref_ckpt;
    manifest.baseline = eval::evaluate_policy(policy, target_test, cfg.thresholds);

    TrainingLog log((fs::path(cfg.out_dir) / "training_log.csv").string());

    // cumulative reward dataset with a deterministic calibration holdout
    std::vector<rdata::RewardSample> dr_train, dr_holdout;
    const int holdout_stride =
        cfg.reward_holdout_frac > 0 ? std::max(2, int(1.0 / cfg.reward_holdout_frac)) : 0;
    long dr_seen = 0;
    rdata::TriageReport triage_total;

    ag::Adam policy_opt{float(cfg.ppo.policy_lr)};
    ag::Adam value_opt{float(cfg.ppo.value_lr)};

    for (int it = 0; it < cfg.iterations; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        IterationMetrics im;
        im.iteration = it;

        std::vector<const Image*> subset;
        for (int k = 0; k < cfg.subset_size; ++k)
            subset.push_back(&target_train[size_t(it) * cfg.subset_size + k]->image);

        rdata::BuildResult build = rdata::build_reward_dataset(
            policy, subset, cfg.perturb, cfg.thresholds, cfg.axes,
            derive_seed(cfg.master_seed, "rdata", uint64_t(it)));
        im.triage = build.triage;
        for (auto& s : build.samples) {
            if (holdout_stride && dr_seen % holdout_stride == 0)
                dr_holdout.push_back(std::move(s));
            else
                dr_train.push_back(std::move(s));
            ++dr_seen;
        }
        im.dr_total = int(dr_seen);

        if (!dr_train.empty()) {
            const std::vector<double> curve = ppo::train_reward_net(
                reward_net, dr_train, cfg.reward_epochs, cfg.reward_lr, cfg.reward_batch,
                derive_seed(cfg.master_seed, "reward", uint64_t(it)));
            im.reward_loss_first = curve.front();
            im.reward_loss_last = curve.back();
            for (double l : curve) log.reward_row(l);
        }

        if (!cfg.value_persist && it > 0) {
            value_net = nets::UNet::init(nets::value_arch(cfg.net_base_width),
                                         derive_seed(cfg.master_seed, "init/value", uint64_t(it)));
            value_opt = ag::Adam{float(cfg.ppo.value_lr)};
        }

        const ppo::PhaseStats phase =
            ppo::ppo_update(policy, value_net, reward_net, policy_ref, subset, build.gold,
                            cfg.ppo, policy_opt, value_opt,
                            derive_seed(cfg.master_seed, "ppo", uint64_t(it)));
        for (const auto& s : phase.steps) log.ppo_row(s);
        im.gold_logp_before = phase.gold_logp_before;
        im.gold_logp_after = phase.gold_logp_after;

        im.target_test = eval::evaluate_policy(policy, target_test, cfg.thresholds);
        im.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest.iterations.push_back(std::move(im));
    }

    // persist artifacts
    const fs::path ckdir = fs::path(cfg.out_dir) / "checkpoints";
    fs::create_directories(ckdir);
    manifest.policy_ckpt = (ckdir / "policy.ckpt").string();
    manifest.reward_ckpt = (ckdir / "reward.ckpt").string();
    manifest.value_ckpt = (ckdir / "value.ckpt").string();
    nets::save_checkpoint(manifest.policy_ckpt, policy, cfg.master_seed);
    nets::save_checkpoint(manifest.reward_ckpt, reward_net, cfg.master_seed);
    nets::save_checkpoint(manifest.value_ckpt, value_net, cfg.master_seed);

    {
        std::vector<rdata::RewardSample> all = dr_train;
        all.insert(all.end(), dr_holdout.begin(), dr_holdout.end());
        rdata::TriageReport total;
        for (const auto& it : manifest.iterations) {
            total.n_images += it.triage.n_images;
            total.n_valid += it.triage.n_valid;
            total.n_invalid += it.triage.n_invalid;
            total.n_corrected += it.triage.n_corrected;
            total.n_irrecoverable += it.triage.n_irrecoverable;
            total.n_skipped_correction_off += it.triage.n_skipped_correction_off;
            total.n_gold_samples += it.triage.n_gold_samples;
            total.n_corrected_samples += it.triage.n_corrected_samples;
            total.n_perturbed_weight_samples += it.triage.n_perturbed_weight_samples;
            total.n_perturbed_image_samples += it.triage.n_perturbed_image_samples;
        }
        rdata::save_reward_dataset((fs::path(cfg.out_dir) / "dr").string(), all, total);
    }

    // temperature from the held-out reward samples
    if (!dr_holdout.empty()) {
        std::vector<std::pair<ag::Tensor, Mask>> pairs;
        std::vector<float> conf;
        std::vector<uint8_t> correct;
        for (const auto& rs : dr_holdout) {
            ag::Tensor p = nets::reward_forward(reward_net, rs.s, rs.a);
            for (size_t i = 0; i < p.numel(); ++i) {
                conf.push_back(p.data[i]);
                correct.push_back(rs.e.px[i]);
            }
            pairs.emplace_back(std::move(p), rs.e);
        }
        manifest.temperature = eval::fit_temperature(pairs);
        eval::CalibrationReport rep = eval::ece_and_reliability(conf, correct);
        rep.temperature = manifest.temperature;
        manifest.holdout_ece = rep.ece;
        eval::write_reliability_csv((fs::path(cfg.out_dir) / "reliability.csv").string(), rep);
        eval::write_reliability_svg((fs::path(cfg.out_dir) / "reliability.svg").string(), rep);
    }

    // final per-sample metrics
    std::vector<eval::PerSampleMetrics> rows;
    const eval::SegMetrics final_metrics =
        eval::evaluate_policy(policy, target_test, cfg.thresholds, &rows);
    eval::write_metrics_csv((fs::path(cfg.out_dir) / "metrics.csv").string(), rows,
                            final_metrics);

    manifest.save((fs::path(cfg.out_dir) / "run_manifest.json").string());
    return manifest;
}

eval::SegMetrics cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint,
                              const std::string& split, const std::string& csv_out) {
    cfg.validate();
    const synth::Dataset ds = load_dataset_checked(cfg);
    const nets::UNet policy = load_policy_checked(checkpoint);

    std::vector<const synth::Scene*> scenes;
    if (split == "source_test")
        scenes = ds.select(synth::Domain::source, synth::Split::test);
    else if (split == "source_val")
        scenes = ds.select(synth::Domain::source, synth::Split::val);
    else if (split == "target_test")
        scenes = ds.select(synth::Domain::target, synth::Split::test);
    else
        throw config_error("unknown split '" + split +
                           "' (expected source_test, source_val or target_test)");

    std::vector<eval::PerSampleMetrics> rows;
    const eval::SegMetrics m = eval::evaluate_policy(policy, scenes, cfg.thresholds, &rows);
    if (!csv_out.empty()) eval::write_metrics_csv(csv_out, rows, m);
    return m;
}

CalibrationOutcome cmd_calibrate(const RunConfig& cfg) {
    cfg.validate();
    const std::string reward_ckpt =
        (fs::path(cfg.out_dir) / "checkpoints" / "reward.ckpt").string();
    if (!fs::exists(reward_ckpt))
        throw config_error("no reward checkpoint at '" + reward_ckpt +
                           "' (run `rl4seg adapt` first)");
    const std::string dr_dir = (fs::path(cfg.out_dir) / "dr").string();
    if (!fs::exists(fs::path(dr_dir) / "provenance.json"))
        throw config_error("no reward dataset at '" + dr_dir + "' (run `rl4seg adapt` first)");

    const nets::UNet reward_net = nets::load_checkpoint(reward_ckpt).net;
    const rdata::LoadedRewardDataset dr = rdata::load_reward_dataset(dr_dir);

    std::vector<std::pair<ag::Tensor, Mask>> pairs;
    std::vector<float> conf;
    std::vector<uint8_t> correct;
    for (const auto& rs : dr.samples) {
        ag::Tensor p = nets::reward_forward(reward_net, rs.s, rs.a);
        for (size_t i = 0; i < p.numel(); ++i) {
            conf.push_back(p.data[i]);
            correct.push_back(rs.e.px[i]);
        }
        pairs.emplace_back(std::move(p), rs.e);
    }
    CalibrationOutcome out;
    out.temperature = eval::fit_temperature(pairs);
    out.ece_before = eval::ece_and_reliability(conf, correct).ece;
    for (auto& [p, e] : pairs) {
        for (auto& v : p.data) {
            const double z = std::log(std::min(std::max(double(v), ag::kProbEps),
                                               1.0 - ag::kProbEps) /
                                      (1.0 - std::min(std::max(double(v), ag::kProbEps),
                                                      1.0 - ag::kProbEps)));
            const double s = z / out.temperature;
            v = float(s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s)));
        }
    }
    std::vector<float> conf_scaled;
    for (const auto& [p, e] : pairs)
        conf_scaled.insert(conf_scaled.end(), p.data.begin(), p.data.end());
    eval::CalibrationReport rep = eval::ece_and_reliability(conf_scaled, correct);
    rep.temperature = out.temperature;
    out.ece_after = rep.ece;
    eval::write_reliability_csv((fs::path(cfg.out_dir) / "reliability.csv").string(), rep);
    eval::write_reliability_svg((fs::path(cfg.out_dir) / "reliability.svg").string(), rep);
    nlohmann::json cj = {{"temperature", out.temperature},
                         {"ece_before", out.ece_before},
                         {"ece_after", out.ece_after},
                         {"n_pixels", conf.size()}};
    std::ofstream cf(fs::path(cfg.out_dir) / "calibration.json");
    cf << cj.dump(2) << "\n";
    return out;
}

void cmd_report(const std::string& manifest_path, const std::string& out_dir) {
    const RunManifest m = RunManifest::load(manifest_path);
    if (m.iterations.empty()) throw config_error("manifest has no iterations to report");
    fs::create_directories(out_dir);

    // trajectory CSV
    {
        std::ofstream f(fs::path(out_dir) / "trajectory.csv");
        f << "iteration,dice_endo,dice_epi,dice_avg,hd_endo_mm,hd_epi_mm,hd_avg_mm,"
             "anatomical_validity,dr_total\n";
        char buf[320];
        auto row = [&](const char* tag, const eval::SegMetrics& s, int dr) {
            std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", tag,
                          s.dice_endo, s.dice_epi, s.dice_avg, s.hd_endo_mm, s.hd_epi_mm,
                          s.hd_avg_mm, s.anatomical_validity, dr);
            f << buf;
        };
        row("baseline", m.baseline, 0);
        for (const auto& it : m.iterations)
            row(std::to_string(it.iteration).c_str(), it.target_test, it.dr_total);
    }

    // markdown summary
    {
        std::ofstream f(fs::path(out_dir) / "report.md");
        f << "# Adaptation run report\n\n";
        f << "Temperature: " << m.temperature << "  \n";
        f << "Reward-holdout ECE: " << m.holdout_ece << "\n\n";
        f << "| stage | Dice ENDO | Dice EPI | Dice avg | HD ENDO (mm) | HD EPI (mm) | HD "
             "avg (mm) | validity |\n";
        f << "|---|---|---|---|---|---|---|---|\n";
        char buf[320];
        auto row = [&](const std::string& tag, const eval::SegMetrics& s) {
            std::snprintf(buf, sizeof buf,
                          "| %s | %.4f | %.4f | %.4f | %.2f | %.2f | %.2f | %.3f |\n",
                          tag.c_str(), s.dice_endo, s.dice_epi, s.dice_avg, s.hd_endo_mm,
                          s.hd_epi_mm, s.hd_avg_mm, s.anatomical_validity);
            f << buf;
        };
        row("baseline (source only)", m.baseline);
        for (const auto& it : m.iterations)
            row("iteration " + std::to_string(it.iteration), it.target_test);
        f << "\nTriage per iteration (valid / corrected / irrecoverable):\n\n";
        for (const auto& it : m.iterations) {
            f << "- iteration " << it.iteration << ": " << it.triage.n_valid << " / "
              << it.triage.n_corrected << " / " << it.triage.n_irrecoverable
              << ", reward dataset size " << it.dr_total << "\n";
        }
    }

    // trajectory SVG: dice avg and validity across iterations
    {
        const int W = 480, H = 320, mrg = 48;
        std::ofstream f(fs::path(out_dir) / "trajectory.svg");
        f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
          << "'>\n<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
        f << "<rect x='" << mrg << "' y='" << mrg << "' width='" << W - 2 * mrg
          << "' height='" << H - 2 * mrg << "' fill='none' stroke='black'/>\n";
        const int n = int(m.iterations.size()) + 1;
        auto xpos = [&](int i) {
            return mrg + (n == 1 ? 0.0 : double(i) / (n - 1) * (W - 2 * mrg));
        };
        auto ypos = [&](double v) { return H - mrg - v * (H - 2 * mrg); };
        auto series = [&](auto get, const char* color) {
            std::string pts;
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.1f,%.1f ", xpos(0), ypos(get(m.baseline)));
            pts += buf;
            for (int i = 0; i < int(m.iterations.size()); ++i) {
                std::snprintf(buf, sizeof buf, "%.1f,%.1f ", xpos(i + 1),
                              ypos(get(m.iterations[size_t(i)].target_test)));
                pts += buf;
            }
            f << "<polyline points='" << pts << "' fill='none' stroke='" << color
              << "' stroke-width='2'/>\n";
        };
        series([](const eval::SegMetrics& s) { return s.dice_avg; }, "steelblue");
        series([](const eval::SegMetrics& s) { return s.anatomical_validity; }, "darkorange");
        f << "<text x='" << mrg << "' y='" << mrg - 20
          << "' font-size='12' fill='steelblue'>dice avg</text>\n";
        f << "<text x='" << mrg + 80 << "' y='" << mrg - 20
          << "' font-size='12' fill='darkorange'>anatomical validity</text>\n";
        f << "<text x='" << W / 2 - 60 << "' y='" << H - 12
          << "' font-size='12'>baseline + iterations</text>\n</svg>\n";
    }
}

}  // namespace rl4seg::pipeline
