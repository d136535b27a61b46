#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rl4seg/pgm.hpp"
#include "rl4seg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rl4seg;

namespace {

int run(int argc, char** argv) {
    CLI::App app{"rl4seg — reinforcement-learning domain adaptation for LV/MYO segmentation"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir, ablate_csv;
    uint64_t seed = 0;
    app.add_option("--config", config_path, "JSON run configuration (all fields optional)");
    auto* seed_opt = app.add_option("--seed", seed, "master seed override");
    auto* out_opt = app.add_option("--out", out_dir, "output directory override");
    app.add_option("--ablate", ablate_csv,
                   "comma list of axes to disable: image_transforms, "
                   "weight_perturbations, anatomical_correction");

    auto* gen = app.add_subcommand("generate", "generate the synthetic source/target dataset");
    auto* pre = app.add_subcommand("pretrain", "pretrain the policy on the labeled source split");
    auto* adp = app.add_subcommand("adapt", "run the adaptation loop (reward dataset -> reward net -> PPO)");

    auto* evl = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset split");
    std::string eval_ckpt, eval_split = "target_test", eval_csv;
    evl->add_option("--checkpoint", eval_ckpt, "checkpoint path (default: adapted policy)");
    evl->add_option("--split", eval_split, "source_val | source_test | target_test");
    evl->add_option("--csv", eval_csv, "write per-sample metrics CSV here");

    auto* cal = app.add_subcommand("calibrate", "fit the uncertainty temperature on the stored reward dataset");

    auto* anat = app.add_subcommand("anatomy", "anatomical validity tools");
    auto* chk = anat->add_subcommand("check", "evaluate the 10 validity rules on a mask PGM");
    std::string mask_path;
    chk->add_option("mask", mask_path, "8-bit PGM with classes 0/1/2")->required();
    anat->require_subcommand(1);

    auto* rep = app.add_subcommand("report", "emit markdown/CSV/SVG summary from a run manifest");
    std::string manifest_path;
    rep->add_option("--manifest", manifest_path, "run manifest (default: <out>/run_manifest.json)");

    CLI11_PARSE(app, argc, argv);

    pipeline::RunConfig cfg;
    if (!config_path.empty()) cfg = pipeline::RunConfig::from_json_file(config_path);
    if (*seed_opt) cfg.master_seed = seed;
    if (*out_opt) cfg.out_dir = out_dir;
    if (!ablate_csv.empty()) {
        std::stringstream ss(ablate_csv);
        std::string axis;
        while (std::getline(ss, axis, ','))
            if (!axis.empty()) cfg.disable_axis(axis);
    }

    if (gen->parsed()) {
        pipeline::cmd_generate(cfg);
        std::printf("dataset written to %s\n", cfg.dataset_path().c_str());
    } else if (pre->parsed()) {
        const auto out = pipeline::cmd_pretrain(cfg);
        std::printf("pretrain done: val dice %.4f, source-test dice %.4f, validity %.3f\n",
                    out.stats.val_dice_avg, out.source_test.dice_avg,
                    out.source_test.anatomical_validity);
    } else if (adp->parsed()) {
        const auto manifest = pipeline::cmd_adapt(cfg);
        const auto& last = manifest.iterations.back().target_test;
        std::printf("baseline:  dice %.4f  validity %.3f\n", manifest.baseline.dice_avg,
                    manifest.baseline.anatomical_validity);
        std::printf("adapted:   dice %.4f  validity %.3f  (T = %.3f)\n", last.dice_avg,
                    last.anatomical_validity, manifest.temperature);
        std::printf("manifest:  %s/run_manifest.json\n", cfg.out_dir.c_str());
    } else if (evl->parsed()) {
        if (eval_ckpt.empty())
            eval_ckpt = (fs::path(cfg.out_dir) / "checkpoints" / "policy.ckpt").string();
        const auto m = pipeline::cmd_evaluate(cfg, eval_ckpt, eval_split, eval_csv);
        std::printf("%s: dice endo/epi/avg %.4f/%.4f/%.4f  hd avg %.2f mm  validity %.3f "
                    "(n=%d, hd excluded %d)\n",
                    eval_split.c_str(), m.dice_endo, m.dice_epi, m.dice_avg, m.hd_avg_mm,
                    m.anatomical_validity, m.n, m.hd_excluded);
    } else if (cal->parsed()) {
        const auto out = pipeline::cmd_calibrate(cfg);
        std::printf("temperature %.4f, ECE %.4f -> %.4f\n", out.temperature, out.ece_before,
                    out.ece_after);
    } else if (chk->parsed()) {
        const Mask mask = read_pgm8(mask_path);
        const auto report = anatomy::assess_validity(mask, cfg.thresholds);
        std::printf("%s\n", report.to_json_string().c_str());
    } else if (rep->parsed()) {
        if (manifest_path.empty())
            manifest_path = (fs::path(cfg.out_dir) / "run_manifest.json").string();
        pipeline::cmd_report(manifest_path, cfg.out_dir);
        std::printf("report written to %s\n", cfg.out_dir.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const pipeline::config_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ag::numeric_error& e) {
        const fs::path diag = "rl4seg_diagnostics.txt";
        std::ofstream f(diag);
        f << e.what() << "\n";
        std::fprintf(stderr, "numeric abort: %s\ndiagnostics: %s\n", e.what(),
                     diag.string().c_str());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
