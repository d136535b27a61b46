#pragma once

// Single-timestep PPO: shaped per-pixel reward, advantage = r_psi - V_phi,
// clipped surrogate with entropy bonus, gold-standard substitution, plus
// the supervised phases (policy pretraining, reward-network training).
// Trajectories have length one, so no discounting or GAE appears anywhere.

#include <cstdint>
#include <optional>
#include <vector>

#include "rl4seg/image.hpp"
#include "rl4seg/nets.hpp"
#include "rl4seg/reward_dataset.hpp"
#include "rl4seg/synth.hpp"
#include "rl4seg/tensor.hpp"

namespace rl4seg::ppo {

struct PpoConfig {
    double epsilon = 0.2;         // clip parameter
    double alpha = 0.01;          // entropy bonus coefficient
    double beta = 0.05;           // reference-divergence penalty coefficient
    int ppo_epochs = 4;           // passes over the collected rollouts
    double policy_lr = 1e-4;
    double value_lr = 1e-3;
    int batch_size = 8;
    double ratio_clamp_max = 20.0;

    void validate() const;
};

struct Rollout {
    Image s;
    Mask a;                 // sampled action or substituted gold mask
    ag::Tensor logp_old;    // {h,w}, log pi_old(a|s)
    ag::Tensor reward_map;  // {h,w}, shaped reward (all ones for gold)
    ag::Tensor value_map;   // {h,w}, V_phi(s) at collection time
    bool is_gold = false;
};

// r = r_psi - beta * (logp_cur - logp_ref), per pixel
ag::Tensor shaped_reward(const ag::Tensor& r_psi_map, const ag::Tensor& logp_cur,
                         const ag::Tensor& logp_ref, double beta);

// A = reward - value, per pixel (no normalization)
ag::Tensor advantage(const ag::Tensor& reward_map, const ag::Tensor& value_map);

// loss = -mean( min(rho*A, clip(rho, 1-eps, 1+eps)*A) ), rho = exp(logp_new
// - logp_old) clamped to <= ratio_clamp. Gradient flows through logp_new
// only; logp_old and adv are constants.
ag::VarT<float> clipped_surrogate(ag::Tape* tape, const ag::Var& logp_new,
                                  const ag::Tensor& logp_old, const ag::Tensor& adv,
                                  double epsilon, double ratio_clamp = 20.0);

struct StepStats {
    double clip_loss = 0;
    double entropy = 0;
    double mean_ratio = 0;
    double clip_fraction = 0;
    double value_bce = 0;
};

// One optimizer step of the policy and the value net on a minibatch of
// prepared rollouts; the building block of ppo_update, exposed so crafted
// rollouts can be driven directly.
StepStats ppo_minibatch_step(nets::UNet& policy, nets::UNet& value_net,
                             const std::vector<const Rollout*>& batch,
                             const PpoConfig& cfg, ag::Adam& policy_opt,
                             ag::Adam& value_opt);

struct PhaseStats {
    std::vector<StepStats> steps;
    int n_gold = 0, n_sampled = 0;
    // mean log-probability of the gold masks under the policy, measured at
    // phase start and after the last update
    double gold_logp_before = 0, gold_logp_after = 0;
};

// One PPO phase: snapshot pi_old from the current policy, collect one
// rollout per image (substituting gold masks with all-ones reward where
// given), then run cfg.ppo_epochs of minibatch updates. V_phi is fit with
// BCE against the realized reward maps; r_psi and pi_ref stay frozen.
PhaseStats ppo_update(nets::UNet& policy, nets::UNet& value_net,
                      const nets::UNet& reward_net, const nets::UNet& policy_ref,
                      const std::vector<const Image*>& images,
                      const std::vector<std::optional<Mask>>& gold, const PpoConfig& cfg,
                      ag::Adam& policy_opt, ag::Adam& value_opt, uint64_t seed);

// BCE fit of r_psi on (s, a) -> e; returns the per-epoch mean loss curve.
std::vector<double> train_reward_net(nets::UNet& reward_net,
                                     const std::vector<rdata::RewardSample>& data,
                                     int epochs, double lr, int batch_size, uint64_t seed);

struct PretrainStats {
    std::vector<double> epoch_loss;
    double val_dice_avg = 0;  // mean of ENDO/EPI Dice on the validation split
};

// Supervised categorical cross-entropy on the labeled source split.
PretrainStats pretrain_policy(nets::UNet& policy,
                              const std::vector<const synth::Scene*>& train,
                              const std::vector<const synth::Scene*>& val, int epochs,
                              double lr, int batch_size, uint64_t seed);

}  // namespace rl4seg::ppo
