#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "t2v/attention.hpp"
#include "t2v/tensor.hpp"

namespace t2v {

inline constexpr double kLayerNormEps = 1e-5;

// Decomposition tokens E_0. A single bank instance is shared by the video and
// text parsers; the parsers' layer weights are separate.
struct AdtBank {
    Tensor e0;  // [k x d]

    static AdtBank init(std::size_t k, std::size_t d, Rng& rng);
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct ParserLayerParams {
    SelfAttnParams sa;       // token self-attention
    LinearParams cq, ck, cv; // cross-attention projections
    LinearParams ff;
    Tensor ln_g, ln_b;       // norm inside the feed-forward branch

    static ParserLayerParams init(std::size_t d, std::size_t heads, Rng& rng, double scale,
                                  bool requires_grad = true);
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct ParserParams {
    std::vector<ParserLayerParams> layers;
    Tensor en_ln_g, en_ln_b;    // norm over the final token rows
    Tensor cls_ln_g, cls_ln_b;  // norm over the global row
    bool eq3_literal = false;   // plain linear residual instead of the ff branch

    static ParserParams init(std::size_t d, std::size_t n_layers, std::size_t heads, Rng& rng,
                             double scale, bool requires_grad = true);
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct MultiviewEmbedding {
    Tensor local;      // [L x d]
    Tensor adt_out;    // [k x d], token rows before the global fusion
    Tensor cls;        // [1 x d]
    Tensor multiview;  // [(L+k) x d]
};

// One parser layer: tokens self-attend, cross-attend into the features, then
// pass through the residual feed-forward branch.
Tensor parser_layer_forward(const Tensor& e_prev, const Tensor& features,
                            const ParserLayerParams& p, bool eq3_literal = false);

// Fuses the final token rows with the global row and concatenates local rows.
Tensor assemble_multiview(const Tensor& local, const Tensor& adt_out, const Tensor& cls,
                          const ParserParams& params);

MultiviewEmbedding parse(const AdtBank& bank, const Tensor& features, const Tensor& cls,
                         const ParserParams& params);

}  // namespace t2v
