#include "rl4seg/nets.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace rl4seg::nets {

ag::Tensor policy_forward(const UNet& policy, const Image& img) {
    auto x = ag::make_const(tensor_from_image(img));
    auto logits = policy.forward(nullptr, x);
    ag::Tensor probs(logits->value.shape);
    kernels::softmax_channels_forward(logits->value.data.data(), logits->value.shape[0],
                                      logits->value.shape[1], logits->value.shape[2],
                                      probs.data.data());
    return probs;
}

ag::Var policy_logits(ag::Tape* tape, const UNet& policy, const Image& img) {
    return policy.forward(tape, ag::make_const(tensor_from_image(img)));
}

Mask greedy_action(const ag::Tensor& dist) {
    const int k = dist.shape[0], h = dist.shape[1], w = dist.shape[2];
    const size_t plane = size_t(h) * w;
    Mask out(h, w);
    for (size_t i = 0; i < plane; ++i) {
        int best = 0;
        float bv = dist.data[i];
        for (int c = 1; c < k; ++c)
            if (dist.data[c * plane + i] > bv) {  // ties keep the lowest class index
                bv = dist.data[c * plane + i];
                best = c;
            }
        out.px[i] = uint8_t(best);
    }
    return out;
}

Mask sample_action(const ag::Tensor& dist, uint64_t seed) {
    const int k = dist.shape[0], h = dist.shape[1], w = dist.shape[2];
    const size_t plane = size_t(h) * w;
    Mask out(h, w);
    for (size_t i = 0; i < plane; ++i) {
        Rng rng(derive_seed(seed, "pixel", 0, i));
        const double u = rng.uniform();
        double cdf = 0;
        int pick = k - 1;
        for (int c = 0; c < k; ++c) {
            cdf += double(dist.data[c * plane + i]);
            if (u < cdf) {
                pick = c;
                break;
            }
        }
        out.px[i] = uint8_t(pick);
    }
    return out;
}

ag::Tensor log_prob_map(const ag::Tensor& dist, const Mask& action) {
    const size_t plane = size_t(dist.shape[1]) * dist.shape[2];
    if (action.size() != plane)
        throw std::invalid_argument("log_prob_map: mask/dist shape mismatch");
    ag::Tensor out({dist.shape[1], dist.shape[2]});
    for (size_t i = 0; i < plane; ++i) {
        const float p = dist.data[size_t(action.px[i]) * plane + i];
        out.data[i] = std::log(std::max(p, float(ag::kProbEps)));
    }
    return out;
}

ag::Tensor entropy_map(const ag::Tensor& dist) {
    const int k = dist.shape[0];
    const size_t plane = size_t(dist.shape[1]) * dist.shape[2];
    ag::Tensor out({dist.shape[1], dist.shape[2]});
    for (size_t i = 0; i < plane; ++i) {
        double e = 0;
        for (int c = 0; c < k; ++c) {
            const double p = std::max(double(dist.data[c * plane + i]), ag::kProbEps);
            e -= p * std::log(p);
        }
        out.data[i] = float(e);
    }
    return out;
}

namespace {

ag::Var reward_input(const UNet& net, const Image& img, const Mask& action) {
    if (img.h != action.h || img.w != action.w)
        throw std::invalid_argument("reward input: image/mask shape mismatch");
    if (net.arch.in_ch != 2)
        throw std::invalid_argument("reward net must take 2 input channels");
    ag::Tensor t({2, img.h, img.w});
    const size_t plane = img.size();
    for (size_t i = 0; i < plane; ++i) {
        t.data[i] = img.px[i];
        t.data[plane + i] = float(action.px[i]) / float(kNumClasses - 1);
    }
    return ag::make_const(std::move(t));
}

}  // namespace

ag::Var reward_out(ag::Tape* tape, const UNet& reward_net, const Image& img,
                   const Mask& action) {
    auto logits = reward_net.forward(tape, reward_input(reward_net, img, action));
    return ag::reshape(tape, ag::sigmoid(tape, logits), {img.h, img.w});
}

ag::Tensor reward_forward(const UNet& reward_net, const Image& img, const Mask& action) {
    return reward_out(nullptr, reward_net, img, action)->value;
}

ag::Var value_out(ag::Tape* tape, const UNet& value_net, const Image& img) {
    auto logits = value_net.forward(tape, ag::make_const(tensor_from_image(img)));
    return ag::reshape(tape, ag::sigmoid(tape, logits), {img.h, img.w});
}

ag::Tensor value_forward(const UNet& value_net, const Image& img) {
    return value_out(nullptr, value_net, img)->value;
}

// ---- checkpoints ----

void save_checkpoint(const std::string& path, const UNet& net, uint64_t rng_state) {
    nlohmann::json header;
    header["arch"] = {{"in_ch", net.arch.in_ch},
                      {"base", net.arch.base},
                      {"out_ch", net.arch.out_ch}};
    header["rng_state"] = rng_state;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, p] : net.named_params())
        tensors.push_back({{"name", name}, {"shape", p->value.shape}});
    header["tensors"] = std::move(tensors);
    const std::string hj = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw ckpt_error("cannot write checkpoint '" + path + "'");
    f.write("RL4S", 4);
    const uint32_t version = kCheckpointVersion;
    f.write(reinterpret_cast<const char*>(&version), 4);
    const uint64_t hlen = hj.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hj.data(), std::streamsize(hj.size()));
    for (const auto& [name, p] : net.named_params())
        f.write(reinterpret_cast<const char*>(p->value.data.data()),
                std::streamsize(p->value.data.size() * sizeof(float)));
    if (!f) throw ckpt_error("short write to checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ckpt_error("cannot open checkpoint '" + path + "'");
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "RL4S", 4) != 0)
        throw ckpt_error("'" + path + "': bad checkpoint magic (byte offset 0)");
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    if (!f || version != kCheckpointVersion)
        throw ckpt_error("'" + path + "': unsupported checkpoint version " +
                         std::to_string(version) + " (byte offset 4)");
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    if (!f || hlen > (64u << 20))
        throw ckpt_error("'" + path + "': corrupt header length (byte offset 8)");
    std::string hj(hlen, '\0');
    f.read(hj.data(), std::streamsize(hlen));
    if (!f) throw ckpt_error("'" + path + "': truncated header (byte offset 16)");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hj);
    } catch (const nlohmann::json::parse_error& e) {
        throw ckpt_error("'" + path + "': malformed header JSON: " + e.what());
    }
    ArchConfig arch;
    arch.in_ch = header.at("arch").at("in_ch").get<int>();
    arch.base = header.at("arch").at("base").get<int>();
    arch.out_ch = header.at("arch").at("out_ch").get<int>();

    Checkpoint out{UNet::init(arch, 0), header.value("rng_state", uint64_t(0))};

    auto named = out.net.named_params();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != named.size())
        throw ckpt_error("'" + path + "': tensor count mismatch vs architecture");
    for (size_t i = 0; i < named.size(); ++i) {
        const auto& rec = tensors[i];
        auto& [name, p] = named[i];
        if (rec.at("name").get<std::string>() != name)
            throw ckpt_error("'" + path + "': tensor name mismatch at index " +
                             std::to_string(i));
        if (rec.at("shape").get<std::vector<int>>() != p->value.shape)
            throw ckpt_error("'" + path + "': shape mismatch for tensor '" + name + "'");
        const size_t offset = size_t(f.tellg());
        f.read(reinterpret_cast<char*>(p->value.data.data()),
               std::streamsize(p->value.data.size() * sizeof(float)));
        if (!f)
            throw ckpt_error("'" + path + "': truncated payload for tensor '" + name +
                             "' (byte offset " + std::to_string(offset) + ")");
    }
    return out;
}

}  // namespace rl4seg::nets
