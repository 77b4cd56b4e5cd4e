#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "t2v/attention.hpp"
#include "t2v/tensor.hpp"

namespace t2v {

inline constexpr std::size_t kMaxTextTokens = 128;

enum class Modality { video, text };
enum class EncoderKind { frozen_random, trainable_small };

EncoderKind encoder_kind_from_string(const std::string& s);
std::string encoder_kind_to_string(EncoderKind k);

struct EncoderConfig {
    EncoderKind kind = EncoderKind::frozen_random;
    Modality modality = Modality::video;
    std::size_t d = 32;
    std::size_t raw_width = 64;  // video: raw feature width; text: vocab size
    std::uint64_t seed = 0;
};

struct EncodedSequence {
    Tensor local;  // [L x d]
    Tensor cls;    // [1 x d]
    Modality modality = Modality::video;
    std::size_t length = 0;
};

struct EncoderParams {
    EncoderConfig cfg;
    Tensor proj;          // video: projection [raw x d]; text: embedding table [vocab x d]
    SelfAttnParams sa;    // trainable_small only
    Tensor ln_g, ln_b;    // trainable_small only
    LinearParams cls_map;

    static EncoderParams init(const EncoderConfig& cfg);
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

EncodedSequence encode_video(const std::vector<std::vector<double>>& frames,
                             const EncoderParams& p);
EncodedSequence encode_text(const std::vector<int>& tokens, const EncoderParams& p);

}  // namespace t2v
