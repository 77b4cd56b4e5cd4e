#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "t2v/rng.hpp"
#include "t2v/tensor.hpp"

namespace t2v {

struct LinearParams {
    Tensor w;  // [in x out]
    Tensor b;  // [1 x out]

    static LinearParams init(std::size_t in, std::size_t out, Rng& rng, double scale,
                             bool requires_grad = true);
    static LinearParams identity(std::size_t d);
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

Tensor linear(const Tensor& x, const LinearParams& p);

// q [m x dh], k/v [n x dh]; softmax(q k^T / sqrt(dh)) v
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

struct SelfAttnParams {
    LinearParams q, k, v, o;
    std::size_t heads = 1;

    static SelfAttnParams init(std::size_t d, std::size_t heads, Rng& rng, double scale,
                               bool requires_grad = true);
    static SelfAttnParams identity(std::size_t d);
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// multi-head scaled dot-product self-attention, no residual
Tensor self_attention(const Tensor& x, const SelfAttnParams& p);

}  // namespace t2v
