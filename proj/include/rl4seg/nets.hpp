#pragma once

// The three networks: policy (image -> per-pixel class distribution),
// reward (image + mask -> per-pixel correctness probability) and value
// (image -> per-pixel expected reward). All share one small two-level
// encoder-decoder body; the policy applies a channel softmax at use sites,
// reward/value squash their single output channel with a sigmoid.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rl4seg/image.hpp"
#include "rl4seg/rng.hpp"
#include "rl4seg/tensor.hpp"

namespace rl4seg::nets {

struct ckpt_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArchConfig {
    int in_ch = 1;
    int base = 8;   // encoder width; the deeper level uses 2x
    int out_ch = kNumClasses;

    bool operator==(const ArchConfig&) const = default;
};

// conv-relu x2, pool, conv-relu x2, upsample, skip concat, conv-relu, 1x1 head
template <typename T>
struct UNetT {
    ArchConfig arch;
    ag::VarT<T> enc1a_w, enc1a_b, enc1b_w, enc1b_b;
    ag::VarT<T> enc2a_w, enc2a_b, enc2b_w, enc2b_b;
    ag::VarT<T> dec_w, dec_b, head_w, head_b;

    static UNetT init(const ArchConfig& arch, uint64_t seed) {
        UNetT net;
        net.arch = arch;
        const int b = arch.base;
        int idx = 0;
        auto conv_param = [&](int cout, int cin, int k, double gain) {
            Rng rng(derive_seed(seed, "init", 0, uint64_t(idx++)));
            ag::TensorT<T> t({cout, cin, k, k});
            const double bound = gain * std::sqrt(3.0 / (double(cin) * k * k));
            for (auto& v : t.data) v = T(rng.uniform(-bound, bound));
            return ag::make_param(std::move(t));
        };
        auto bias_param = [&](int cout) {
            ++idx;
            return ag::make_param(ag::TensorT<T>({cout}, T(0)));
        };
        net.enc1a_w = conv_param(b, arch.in_ch, 3, 1.0);
        net.enc1a_b = bias_param(b);
        net.enc1b_w = conv_param(b, b, 3, 1.0);
        net.enc1b_b = bias_param(b);
        net.enc2a_w = conv_param(2 * b, b, 3, 1.0);
        net.enc2a_b = bias_param(2 * b);
        net.enc2b_w = conv_param(2 * b, 2 * b, 3, 1.0);
        net.enc2b_b = bias_param(2 * b);
        net.dec_w = conv_param(b, 3 * b, 3, 1.0);
        net.dec_b = bias_param(b);
        // small head gain keeps the initial policy near-uniform for exploration
        net.head_w = conv_param(arch.out_ch, b, 1, 0.1);
        net.head_b = bias_param(arch.out_ch);
        return net;
    }

    std::vector<std::pair<std::string, ag::VarT<T>>> named_params() const {
        return {{"enc1a.w", enc1a_w}, {"enc1a.b", enc1a_b}, {"enc1b.w", enc1b_w},
                {"enc1b.b", enc1b_b}, {"enc2a.w", enc2a_w}, {"enc2a.b", enc2a_b},
                {"enc2b.w", enc2b_w}, {"enc2b.b", enc2b_b}, {"dec.w", dec_w},
                {"dec.b", dec_b},     {"head.w", head_w},   {"head.b", head_b}};
    }

    std::vector<ag::VarT<T>> params() const {
        std::vector<ag::VarT<T>> out;
        for (auto& [name, p] : named_params()) out.push_back(p);
        return out;
    }

    size_t param_count() const {
        size_t n = 0;
        for (auto& p : params()) n += p->numel();
        return n;
    }

    // deep copy with fresh parameter nodes
    UNetT clone() const {
        UNetT net;
        net.arch = arch;
        auto cp = [](const ag::VarT<T>& p) { return ag::make_param(ag::TensorT<T>(p->value)); };
        net.enc1a_w = cp(enc1a_w);
        net.enc1a_b = cp(enc1a_b);
        net.enc1b_w = cp(enc1b_w);
        net.enc1b_b = cp(enc1b_b);
        net.enc2a_w = cp(enc2a_w);
        net.enc2a_b = cp(enc2a_b);
        net.enc2b_w = cp(enc2b_w);
        net.enc2b_b = cp(enc2b_b);
        net.dec_w = cp(dec_w);
        net.dec_b = cp(dec_b);
        net.head_w = cp(head_w);
        net.head_b = cp(head_b);
        return net;
    }

    // x: [in_ch, h, w] with even h, w; returns head logits [out_ch, h, w]
    ag::VarT<T> forward(ag::TapeT<T>* tape, const ag::VarT<T>& x) const {
        using namespace ag;
        auto e1 = relu(tape, conv2d(tape, x, enc1a_w, enc1a_b, 1));
        e1 = relu(tape, conv2d(tape, e1, enc1b_w, enc1b_b, 1));
        auto e2 = maxpool2(tape, e1);
        e2 = relu(tape, conv2d(tape, e2, enc2a_w, enc2a_b, 1));
        e2 = relu(tape, conv2d(tape, e2, enc2b_w, enc2b_b, 1));
        auto up = upsample2(tape, e2);
        auto d = relu(tape, conv2d(tape, concat_channels(tape, e1, up), dec_w, dec_b, 1));
        return conv2d(tape, d, head_w, head_b, 0);
    }
};

using UNet = UNetT<float>;

inline ArchConfig policy_arch(int base = 8) { return {1, base, kNumClasses}; }
inline ArchConfig reward_arch(int base = 8) { return {2, base, 1}; }
inline ArchConfig value_arch(int base = 8) { return {1, base, 1}; }

// ---- tensor bridging ----

template <typename T = float>
ag::TensorT<T> tensor_from_image(const Image& img) {
    ag::TensorT<T> t({1, img.h, img.w});
    for (size_t i = 0; i < img.size(); ++i) t.data[i] = T(img.px[i]);
    return t;
}

// mask rendered as class_index / (K-1) in a single channel
template <typename T = float>
ag::TensorT<T> tensor_from_mask(const Mask& m) {
    ag::TensorT<T> t({1, m.h, m.w});
    for (size_t i = 0; i < m.size(); ++i) t.data[i] = T(m.px[i]) / T(kNumClasses - 1);
    return t;
}

// ---- policy helpers ----

// per-pixel class distribution [K, h, w]; inference only (no tape)
ag::Tensor policy_forward(const UNet& policy, const Image& img);

// logits with graph recording, for training
ag::Var policy_logits(ag::Tape* tape, const UNet& policy, const Image& img);

Mask greedy_action(const ag::Tensor& dist);
Mask sample_action(const ag::Tensor& dist, uint64_t seed);

// plain per-pixel maps (no autograd)
ag::Tensor log_prob_map(const ag::Tensor& dist, const Mask& action);
ag::Tensor entropy_map(const ag::Tensor& dist);

// ---- reward / value helpers ----

// r_psi(s, a): per-pixel probability map {h, w}, values in (0,1)
ag::Tensor reward_forward(const UNet& reward_net, const Image& img, const Mask& action);
ag::Var reward_out(ag::Tape* tape, const UNet& reward_net, const Image& img,
                   const Mask& action);

// V_phi(s): per-pixel expected-reward map {h, w}, values in (0,1)
ag::Tensor value_forward(const UNet& value_net, const Image& img);
ag::Var value_out(ag::Tape* tape, const UNet& value_net, const Image& img);

// ---- checkpoints ----
// "RL4S" magic, u32 version, u64 header length, JSON header (architecture,
// tensor names/shapes, rng state), then raw little-endian f32 payloads in
// header order.

constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const UNet& net, uint64_t rng_state = 0);

struct Checkpoint {
    UNet net;
    uint64_t rng_state = 0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace rl4seg::nets
