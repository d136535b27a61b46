#pragma once

// Experiment driver: configuration with full defaults, the iterated
// adaptation loop (reward-dataset build -> reward training -> PPO), metric
// trajectories, manifests and report emission. The CLI in tools/ is a thin
// shell over these calls.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rl4seg/anatomy.hpp"
#include "rl4seg/evaluation.hpp"
#include "rl4seg/ppo.hpp"
#include "rl4seg/reward_dataset.hpp"
#include "rl4seg/synth.hpp"

namespace rl4seg::pipeline {

// missing prerequisite artifacts or invalid configuration (CLI exit code 2)
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string out_dir = "runs/default";
    std::string dataset_dir;  // empty -> "<out_dir>/dataset"
    uint64_t master_seed = 7;

    synth::DatasetSpec data;
    synth::DomainShiftConfig shift;
    anatomy::Thresholds thresholds;
    int net_base_width = 8;

    int pretrain_epochs = 30;
    double pretrain_lr = 2e-3;
    int pretrain_batch = 8;

    int reward_epochs = 8;
    double reward_lr = 1e-3;
    int reward_batch = 8;
    double reward_holdout_frac = 0.15;

    rdata::PerturbationConfig perturb;
    ppo::PpoConfig ppo;

    int iterations = 3;
    int subset_size = 150;
    bool value_persist = true;

    rdata::AblationFlags axes;  // true = axis enabled

    std::string dataset_path() const {
        return dataset_dir.empty() ? out_dir + "/dataset" : dataset_dir;
    }

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_json_file(const std::string& path);
    nlohmann::json to_json() const;
    void validate() const;

    // names accepted by --ablate
    void disable_axis(const std::string& name);
};

struct IterationMetrics {
    int iteration = 0;
    eval::SegMetrics target_test;
    rdata::TriageReport triage;
    int dr_total = 0;  // cumulative reward-dataset size after this iteration
    double reward_loss_first = 0, reward_loss_last = 0;
    double gold_logp_before = 0, gold_logp_after = 0;
    double wall_seconds = 0;
};

struct RunManifest {
    nlohmann::json config;
    eval::SegMetrics baseline;  // source-only policy on the target test split
    std::vector<IterationMetrics> iterations;
    double temperature = 1.0;
    double holdout_ece = 0;
    std::string policy_ref_ckpt, policy_ckpt, reward_ckpt, value_ckpt;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static RunManifest load(const std::string& path);
};

// generate + save the dataset under dataset_path()
void cmd_generate(const RunConfig& cfg);

struct PretrainOutcome {
    ppo::PretrainStats stats;
    eval::SegMetrics source_test;
};

PretrainOutcome cmd_pretrain(const RunConfig& cfg);

RunManifest cmd_adapt(const RunConfig& cfg);

// checkpoint evaluated against a dataset split ("source_test" | "target_test")
eval::SegMetrics cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint,
                              const std::string& split, const std::string& csv_out);

struct CalibrationOutcome {
    double temperature = 1.0;
    double ece_before = 0, ece_after = 0;
};

CalibrationOutcome cmd_calibrate(const RunConfig& cfg);

void cmd_report(const std::string& manifest_path, const std::string& out_dir);

}  // namespace rl4seg::pipeline
