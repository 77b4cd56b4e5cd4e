#include "t2v/dual_comm.hpp"

#include <stdexcept>

namespace t2v {

CommParams CommParams::init(std::size_t d, std::size_t heads, Rng& rng, double scale,
                            bool requires_grad) {
    CommParams c;
    c.sa = SelfAttnParams::init(d, heads, rng, scale, requires_grad);
    return c;
}

CommParams CommParams::identity(std::size_t d) {
    CommParams c;
    c.sa = SelfAttnParams::identity(d);
    return c;
}

void CommParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    if (!parameter_free) sa.collect(prefix + ".sa", out);
}

Tensor comm_self_attn(const Tensor& x, const CommParams& comm) {
    if (comm.parameter_free) return add(x, scaled_dot_attention(x, x, x));
    return add(x, self_attention(x, comm.sa));
}

CrossAggregates cross_modal_aggregate(const Tensor& fv, const Tensor& ft,
                                      const CommParams& comm) {
    if (fv.cols() != ft.cols())
        throw std::invalid_argument("cross_modal_aggregate: width mismatch, video " +
                                    shape_str(fv.shape()) + " vs text " + shape_str(ft.shape()));
    Tensor s = matmul_nt(fv, ft);
    Tensor agg_t = matmul(softmax_rows(s), ft);             // per video row
    Tensor agg_v = matmul(softmax_rows(transpose(s)), fv);  // per text row
    CrossAggregates out;
    out.f_tx = comm_self_attn(agg_t, comm);
    out.f_vx = comm_self_attn(agg_v, comm);
    return out;
}

Pooled partial_alignment_pool(const Tensor& f, const Tensor& cross) {
    if (f.rows() != cross.rows() || f.cols() != cross.cols())
        throw std::invalid_argument("partial_alignment_pool: row mismatch, " +
                                    shape_str(f.shape()) + " vs " + shape_str(cross.shape()));
    Tensor diag = rowwise_dot(f, cross);  // [R x 1]
    Pooled p;
    p.weights = softmax_rows(transpose(diag));  // [1 x R]
    p.pooled = matmul(p.weights, f);            // [1 x d]
    return p;
}

PooledPair dual_communicate(const Tensor& fv, const Tensor& ft, const CommParams& comm) {
    CrossAggregates agg = cross_modal_aggregate(fv, ft, comm);
    Pooled pv = partial_alignment_pool(fv, agg.f_tx);
    Pooled pt = partial_alignment_pool(ft, agg.f_vx);
    PooledPair out;
    out.f_tilde_v = pv.pooled;
    out.f_tilde_t = pt.pooled;
    out.s_v = pv.weights;
    out.s_t = pt.weights;
    out.f_tx = agg.f_tx;
    out.f_vx = agg.f_vx;
    return out;
}

Tensor pair_similarity(const Tensor& fv, const Tensor& ft, const CommParams& comm,
                       const Tensor& temperature) {
    PooledPair pair = dual_communicate(fv, ft, comm);
    Tensor nv = l2_normalize_rows(pair.f_tilde_v);
    Tensor nt = l2_normalize_rows(pair.f_tilde_t);
    return mul(rowwise_dot(nv, nt), temperature);
}

Tensor pair_similarity(const Tensor& fv, const Tensor& ft, const CommParams& comm,
                       double temperature) {
    return pair_similarity(fv, ft, comm, Tensor::scalar(temperature));
}

}  // namespace t2v
