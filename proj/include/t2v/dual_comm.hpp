#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "t2v/attention.hpp"
#include "t2v/tensor.hpp"

namespace t2v {

struct CommParams {
    SelfAttnParams sa;
    bool parameter_free = false;  // plain softmax(x x^T / sqrt(d)) x instead of learned maps

    static CommParams init(std::size_t d, std::size_t heads, Rng& rng, double scale,
                           bool requires_grad = true);
    static CommParams identity(std::size_t d);
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// residual self-attention used on both aggregate streams
Tensor comm_self_attn(const Tensor& x, const CommParams& comm);

struct CrossAggregates {
    Tensor f_tx;  // one text aggregate per video row
    Tensor f_vx;  // one video aggregate per text row
};

// S = fv ft^T on normalized rows; each side attends over the other's rows so
// the aggregate row count matches its own side.
CrossAggregates cross_modal_aggregate(const Tensor& fv, const Tensor& ft,
                                      const CommParams& comm);

struct Pooled {
    Tensor pooled;   // [1 x d]
    Tensor weights;  // [1 x R], softmax of the rowwise similarities
};

// weights = softmax_r <f[r], cross[r]>; pooled = sum_r weights[r] f[r]
Pooled partial_alignment_pool(const Tensor& f, const Tensor& cross);

struct PooledPair {
    Tensor f_tilde_v, f_tilde_t;  // [1 x d]
    Tensor s_v, s_t;              // [1 x Rv], [1 x Rt]
    Tensor f_tx, f_vx;
};

PooledPair dual_communicate(const Tensor& fv, const Tensor& ft, const CommParams& comm);

// cosine of the pooled pair scaled by temperature; inputs must have
// L2-normalized rows
Tensor pair_similarity(const Tensor& fv, const Tensor& ft, const CommParams& comm,
                       const Tensor& temperature);
Tensor pair_similarity(const Tensor& fv, const Tensor& ft, const CommParams& comm,
                       double temperature);

}  // namespace t2v
