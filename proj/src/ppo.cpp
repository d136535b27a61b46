#include "rl4seg/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rl4seg/evaluation.hpp"

namespace rl4seg::ppo {

void PpoConfig::validate() const {
    if (!(epsilon > 0 && epsilon < 1))
        throw std::invalid_argument("ppo config: epsilon must be in (0,1)");
    if (alpha < 0 || beta < 0)
        throw std::invalid_argument("ppo config: alpha and beta must be >= 0");
    if (ppo_epochs < 1 || batch_size < 1)
        throw std::invalid_argument("ppo config: epochs and batch size must be >= 1");
    if (!(policy_lr > 0) || !(value_lr > 0))
        throw std::invalid_argument("ppo config: learning rates must be > 0");
    if (!(ratio_clamp_max > 1))
        throw std::invalid_argument("ppo config: ratio clamp must exceed 1");
}

ag::Tensor shaped_reward(const ag::Tensor& r_psi_map, const ag::Tensor& logp_cur,
                         const ag::Tensor& logp_ref, double beta) {
    if (!r_psi_map.same_shape(logp_cur) || !r_psi_map.same_shape(logp_ref))
        throw std::invalid_argument("shaped_reward: shape mismatch");
    ag::Tensor out(r_psi_map.shape);
    for (size_t i = 0; i < out.numel(); ++i)
        out.data[i] = r_psi_map.data[i] -
                      float(beta) * (logp_cur.data[i] - logp_ref.data[i]);
    return out;
}

ag::Tensor advantage(const ag::Tensor& reward_map, const ag::Tensor& value_map) {
    if (!reward_map.same_shape(value_map))
        throw std::invalid_argument("advantage: shape mismatch");
    ag::Tensor out(reward_map.shape);
    for (size_t i = 0; i < out.numel(); ++i)
        out.data[i] = reward_map.data[i] - value_map.data[i];
    return out;
}

ag::Var clipped_surrogate(ag::Tape* tape, const ag::Var& logp_new,
                          const ag::Tensor& logp_old, const ag::Tensor& adv,
                          double epsilon, double ratio_clamp) {
    if (!(epsilon > 0 && epsilon < 1))
        throw std::invalid_argument("clipped_surrogate: epsilon must be in (0,1)");
    using namespace ag;
    auto ratio = exp(tape, sub(tape, logp_new, make_const(Tensor(logp_old))));
    ratio = clip(tape, ratio, 0.f, float(ratio_clamp));
    auto adv_c = make_const(Tensor(adv));
    auto surr = mul(tape, ratio, adv_c);
    auto surr_clipped =
        mul(tape, clip(tape, ratio, float(1.0 - epsilon), float(1.0 + epsilon)), adv_c);
    return scale(tape, mean(tape, minimum(tape, surr, surr_clipped)), -1.f);
}

namespace {

ag::Tensor clamp01(const ag::Tensor& t) {
    ag::Tensor out(t);
    for (auto& v : out.data) v = std::min(1.f, std::max(0.f, v));
    return out;
}

double mean_of(const ag::Tensor& t) {
    double acc = 0;
    for (float v : t.data) acc += v;
    return t.numel() ? acc / double(t.numel()) : 0.0;
}

double gold_logp_mean(const nets::UNet& policy, const std::vector<const Image*>& images,
                      const std::vector<std::optional<Mask>>& gold) {
    double acc = 0;
    int n = 0;
    for (size_t i = 0; i < images.size(); ++i) {
        if (!gold[i]) continue;
        const ag::Tensor dist = nets::policy_forward(policy, *images[i]);
        acc += mean_of(nets::log_prob_map(dist, *gold[i]));
        ++n;
    }
    return n ? acc / n : 0.0;
}

}  // namespace

StepStats ppo_minibatch_step(nets::UNet& policy, nets::UNet& value_net,
                             const std::vector<const Rollout*>& batch,
                             const PpoConfig& cfg, ag::Adam& policy_opt,
                             ag::Adam& value_opt) {
    if (batch.empty()) throw std::invalid_argument("ppo_minibatch_step: empty batch");
    const float inv_b = 1.f / float(batch.size());
    const auto policy_params = policy.params();
    const auto value_params = value_net.params();

    ag::Tape tape;
    ag::Var loss;
    StepStats st;
    size_t n_px = 0, n_clipped = 0;
    for (const Rollout* ro : batch) {
        auto logits = policy.forward(&tape, ag::make_const(nets::tensor_from_image(ro->s)));
        auto probs = ag::softmax_channels(&tape, logits);
        auto logp_new = ag::gather_channel(
            &tape, ag::log(&tape, ag::clip(&tape, probs, float(ag::kProbEps), 1.f)), ro->a);
        const ag::Tensor adv = advantage(ro->reward_map, ro->value_map);
        auto surr = clipped_surrogate(&tape, logp_new, ro->logp_old, adv, cfg.epsilon,
                                      cfg.ratio_clamp_max);
        auto ent = ag::mean(&tape, ag::entropy_channels(&tape, probs));
        auto sample_loss = ag::add(&tape, surr, ag::scale(&tape, ent, -float(cfg.alpha)));
        loss = loss ? ag::add(&tape, loss, sample_loss) : sample_loss;

        st.clip_loss += surr->value.data[0];
        st.entropy += ent->value.data[0];
        for (size_t px = 0; px < ro->logp_old.numel(); ++px) {
            const double r =
                std::exp(double(logp_new->value.data[px]) - ro->logp_old.data[px]);
            st.mean_ratio += r;
            n_clipped += r < 1.0 - cfg.epsilon || r > 1.0 + cfg.epsilon;
            ++n_px;
        }
    }
    loss = ag::scale(&tape, loss, inv_b);
    if (!std::isfinite(loss->value.data[0]))
        throw ag::numeric_error("ppo_minibatch_step: non-finite policy loss");
    ag::Adam::zero_grad(policy_params);
    tape.backward(loss);
    policy_opt.step(policy_params);

    // value fit against the realized reward map
    ag::Tape vtape;
    ag::Var vloss;
    for (const Rollout* ro : batch) {
        auto v = nets::value_out(&vtape, value_net, ro->s);
        auto sample = ag::bce_mean(&vtape, v, ag::make_const(clamp01(ro->reward_map)));
        vloss = vloss ? ag::add(&vtape, vloss, sample) : sample;
    }
    vloss = ag::scale(&vtape, vloss, inv_b);
    if (!std::isfinite(vloss->value.data[0]))
        throw ag::numeric_error("ppo_minibatch_step: non-finite value loss");
    ag::Adam::zero_grad(value_params);
    vtape.backward(vloss);
    value_opt.step(value_params);

    st.clip_loss *= inv_b;
    st.entropy *= inv_b;
    st.mean_ratio = n_px ? st.mean_ratio / double(n_px) : 0;
    st.clip_fraction = n_px ? double(n_clipped) / double(n_px) : 0;
    st.value_bce = vloss->value.data[0];
    return st;
}

PhaseStats ppo_update(nets::UNet& policy, nets::UNet& value_net,
                      const nets::UNet& reward_net, const nets::UNet& policy_ref,
                      const std::vector<const Image*>& images,
                      const std::vector<std::optional<Mask>>& gold, const PpoConfig& cfg,
                      ag::Adam& policy_opt, ag::Adam& value_opt, uint64_t seed) {
    cfg.validate();
    if (images.size() != gold.size())
        throw std::invalid_argument("ppo_update: images/gold size mismatch");
    if (images.empty()) throw std::invalid_argument("ppo_update: empty batch");

    PhaseStats phase;
    phase.gold_logp_before = gold_logp_mean(policy, images, gold);

    const nets::UNet pi_old = policy.clone();

    // rollout collection under the frozen snapshot
    std::vector<Rollout> rollouts(images.size());
    for (size_t i = 0; i < images.size(); ++i) {
        const Image& s = *images[i];
        Rollout& ro = rollouts[i];
        ro.s = s;
        const ag::Tensor dist_old = nets::policy_forward(pi_old, s);
        if (gold[i]) {
            ro.a = *gold[i];
            ro.is_gold = true;
            ro.reward_map = ag::Tensor({s.h, s.w}, 1.f);
            ++phase.n_gold;
        } else {
            ro.a = nets::sample_action(dist_old, derive_seed(seed, "ppo/sample", 0, i));
            const ag::Tensor r_psi = nets::reward_forward(reward_net, s, ro.a);
            const ag::Tensor logp_ref =
                nets::log_prob_map(nets::policy_forward(policy_ref, s), ro.a);
            const ag::Tensor logp_cur = nets::log_prob_map(dist_old, ro.a);
            ro.reward_map = shaped_reward(r_psi, logp_cur, logp_ref, cfg.beta);
            ++phase.n_sampled;
        }
        ro.logp_old = nets::log_prob_map(dist_old, ro.a);
        for (float v : ro.logp_old.data)
            if (!std::isfinite(v))
                throw ag::numeric_error("ppo_update: non-finite logp_old at rollout " +
                                        std::to_string(i));
        ro.value_map = nets::value_forward(value_net, s);
    }

    std::vector<size_t> order(rollouts.size());
    std::iota(order.begin(), order.end(), size_t(0));

    for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(seed, "ppo/shuffle", uint64_t(epoch), 0));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + size_t(cfg.batch_size));
            std::vector<const Rollout*> batch;
            for (size_t k = start; k < stop; ++k) batch.push_back(&rollouts[order[k]]);
            phase.steps.push_back(
                ppo_minibatch_step(policy, value_net, batch, cfg, policy_opt, value_opt));
        }
    }

    phase.gold_logp_after = gold_logp_mean(policy, images, gold);
    return phase;
}

std::vector<double> train_reward_net(nets::UNet& reward_net,
                                     const std::vector<rdata::RewardSample>& data,
                                     int epochs, double lr, int batch_size, uint64_t seed) {
    if (data.empty()) throw std::invalid_argument("train_reward_net: empty dataset");
    if (epochs < 1 || batch_size < 1)
        throw std::invalid_argument("train_reward_net: epochs/batch must be >= 1");
    ag::Adam opt{float(lr)};
    const auto params = reward_net.params();

    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::vector<double> curve;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(seed, "reward/shuffle", uint64_t(epoch), 0));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
        double epoch_loss = 0;
        for (size_t start = 0; start < order.size(); start += size_t(batch_size)) {
            const size_t stop = std::min(order.size(), start + size_t(batch_size));
            ag::Tape tape;
            ag::Var loss;
            for (size_t k = start; k < stop; ++k) {
                const rdata::RewardSample& rs = data[order[k]];
                auto pred = nets::reward_out(&tape, reward_net, rs.s, rs.a);
                ag::Tensor target({rs.e.h, rs.e.w});
                for (size_t i = 0; i < rs.e.size(); ++i)
                    target.data[i] = float(rs.e.px[i]);
                auto sample = ag::bce_mean(&tape, pred, ag::make_const(std::move(target)));
                loss = loss ? ag::add(&tape, loss, sample) : sample;
            }
            loss = ag::scale(&tape, loss, 1.f / float(stop - start));
            if (!std::isfinite(loss->value.data[0]))
                throw ag::numeric_error("train_reward_net: non-finite loss");
            ag::Adam::zero_grad(params);
            tape.backward(loss);
            opt.step(params);
            epoch_loss += double(loss->value.data[0]) * double(stop - start);
        }
        curve.push_back(epoch_loss / double(data.size()));
    }
    return curve;
}

PretrainStats pretrain_policy(nets::UNet& policy,
                              const std::vector<const synth::Scene*>& train,
                              const std::vector<const synth::Scene*>& val, int epochs,
                              double lr, int batch_size, uint64_t seed) {
    if (train.empty()) throw std::invalid_argument("pretrain_policy: empty training set");
    ag::Adam opt{float(lr)};
    const auto params = policy.params();

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t(0));
    PretrainStats stats;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(seed, "pretrain/shuffle", uint64_t(epoch), 0));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
        double epoch_loss = 0;
        for (size_t start = 0; start < order.size(); start += size_t(batch_size)) {
            const size_t stop = std::min(order.size(), start + size_t(batch_size));
            ag::Tape tape;
            ag::Var loss;
            for (size_t k = start; k < stop; ++k) {
                const synth::Scene& sc = *train[order[k]];
                auto logits =
                    policy.forward(&tape, ag::make_const(nets::tensor_from_image(sc.image)));
                auto probs = ag::softmax_channels(&tape, logits);
                auto sample = ag::cce_mean(&tape, probs, sc.mask);
                loss = loss ? ag::add(&tape, loss, sample) : sample;
            }
            loss = ag::scale(&tape, loss, 1.f / float(stop - start));
            if (!std::isfinite(loss->value.data[0]))
                throw ag::numeric_error("pretrain_policy: non-finite loss");
            ag::Adam::zero_grad(params);
            tape.backward(loss);
            opt.step(params);
            epoch_loss += double(loss->value.data[0]) * double(stop - start);
        }
        stats.epoch_loss.push_back(epoch_loss / double(train.size()));
    }

    if (!val.empty()) {
        double acc = 0;
        for (const synth::Scene* sc : val) {
            const Mask pred = nets::greedy_action(nets::policy_forward(policy, sc->image));
            acc += 0.5 * (eval::dice(eval::structure_endo(pred), eval::structure_endo(sc->mask)) +
                          eval::dice(eval::structure_epi(pred), eval::structure_epi(sc->mask)));
        }
        stats.val_dice_avg = acc / double(val.size());
    }
    return stats;
}

}  // namespace rl4seg::ppo
