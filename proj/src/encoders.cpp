#include "t2v/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace t2v {

EncoderKind encoder_kind_from_string(const std::string& s) {
    if (s == "frozen_random") return EncoderKind::frozen_random;
    if (s == "trainable_small") return EncoderKind::trainable_small;
    throw std::invalid_argument("encoder kind must be frozen_random or trainable_small, got \"" +
                                s + "\"");
}

std::string encoder_kind_to_string(EncoderKind k) {
    return k == EncoderKind::frozen_random ? "frozen_random" : "trainable_small";
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg) {
    if (cfg.d < 1 || cfg.raw_width < 1)
        throw std::invalid_argument("encoder: d and raw_width must be >= 1");
    const bool trainable = cfg.kind == EncoderKind::trainable_small;
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
    Rng rng(derive_seed(cfg.seed, cfg.modality == Modality::video ? 101 : 202));

    EncoderParams p;
    p.cfg = cfg;
    p.proj = Tensor::randn({cfg.raw_width, cfg.d}, rng, scale, trainable);
    p.sa = SelfAttnParams::init(cfg.d, 1, rng, scale, trainable);
    p.ln_g = Tensor::full({1, cfg.d}, 1.0, trainable);
    p.ln_b = Tensor::zeros({1, cfg.d}, trainable);
    p.cls_map = LinearParams::init(cfg.d, cfg.d, rng, scale, trainable);
    return p;
}

void EncoderParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".proj", proj});
    if (cfg.kind == EncoderKind::trainable_small) {
        sa.collect(prefix + ".sa", out);
        out.push_back({prefix + ".ln_g", ln_g});
        out.push_back({prefix + ".ln_b", ln_b});
    }
    cls_map.collect(prefix + ".cls", out);
}

namespace {

EncodedSequence finish(Tensor local, const EncoderParams& p, Modality modality) {
    if (p.cfg.kind == EncoderKind::trainable_small) {
        local = layer_norm(add(local, self_attention(local, p.sa)), p.ln_g, p.ln_b, 1e-5);
    }
    EncodedSequence out;
    out.local = local;
    out.cls = linear(mean_rows(local), p.cls_map);
    out.modality = modality;
    out.length = local.rows();
    return out;
}

}  // namespace

EncodedSequence encode_video(const std::vector<std::vector<double>>& frames,
                             const EncoderParams& p) {
    if (p.cfg.modality != Modality::video)
        throw std::invalid_argument("encode_video: encoder is configured for text");
    if (frames.empty()) throw std::invalid_argument("encode_video: empty frame list");
    const std::size_t raw = p.cfg.raw_width;
    Tensor x = Tensor::zeros({frames.size(), raw});
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].size() != raw)
            throw std::invalid_argument("encode_video: frame " + std::to_string(i) + " has width " +
                                        std::to_string(frames[i].size()) + ", expected " +
                                        std::to_string(raw));
        for (std::size_t j = 0; j < raw; ++j) x.at(i, j) = frames[i][j];
    }
    return finish(matmul(x, p.proj), p, Modality::video);
}

EncodedSequence encode_text(const std::vector<int>& tokens, const EncoderParams& p) {
    if (p.cfg.modality != Modality::text)
        throw std::invalid_argument("encode_text: encoder is configured for video");
    if (tokens.empty()) throw std::invalid_argument("encode_text: empty token list");
    if (tokens.size() > kMaxTextTokens)
        throw std::invalid_argument("encode_text: " + std::to_string(tokens.size()) +
                                    " tokens exceed the limit of " +
                                    std::to_string(kMaxTextTokens));
    return finish(embedding_lookup(p.proj, tokens), p, Modality::text);
}

}  // namespace t2v
