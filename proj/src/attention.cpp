#include "t2v/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace t2v {

LinearParams LinearParams::init(std::size_t in, std::size_t out, Rng& rng, double scale,
                                bool requires_grad) {
    LinearParams p;
    p.w = Tensor::randn({in, out}, rng, scale, requires_grad);
    p.b = Tensor::zeros({1, out}, requires_grad);
    return p;
}

LinearParams LinearParams::identity(std::size_t d) {
    LinearParams p;
    p.w = Tensor::zeros({d, d});
    for (std::size_t i = 0; i < d; ++i) p.w.at(i, i) = 1.0;
    p.b = Tensor::zeros({1, d});
    return p;
}

void LinearParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

Tensor linear(const Tensor& x, const LinearParams& p) { return affine(x, p.w, p.b); }

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    return matmul(softmax_rows(matmul_nt(q, k, inv)), v);
}

SelfAttnParams SelfAttnParams::init(std::size_t d, std::size_t heads, Rng& rng, double scale,
                                    bool requires_grad) {
    if (heads < 1 || d % heads != 0)
        throw std::invalid_argument("self_attention: head count " + std::to_string(heads) +
                                    " does not divide width " + std::to_string(d));
    SelfAttnParams p;
    p.q = LinearParams::init(d, d, rng, scale, requires_grad);
    p.k = LinearParams::init(d, d, rng, scale, requires_grad);
    p.v = LinearParams::init(d, d, rng, scale, requires_grad);
    p.o = LinearParams::init(d, d, rng, scale, requires_grad);
    p.heads = heads;
    return p;
}

SelfAttnParams SelfAttnParams::identity(std::size_t d) {
    SelfAttnParams p;
    p.q = LinearParams::identity(d);
    p.k = LinearParams::identity(d);
    p.v = LinearParams::identity(d);
    p.o = LinearParams::identity(d);
    p.heads = 1;
    return p;
}

void SelfAttnParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    q.collect(prefix + ".q", out);
    k.collect(prefix + ".k", out);
    v.collect(prefix + ".v", out);
    o.collect(prefix + ".o", out);
}

Tensor self_attention(const Tensor& x, const SelfAttnParams& p) {
    const std::size_t d = x.cols();
    if (p.heads < 1 || d % p.heads != 0)
        throw std::invalid_argument("self_attention: head count " + std::to_string(p.heads) +
                                    " does not divide width " + std::to_string(d));
    Tensor q = linear(x, p.q);
    Tensor k = linear(x, p.k);
    Tensor v = linear(x, p.v);
    if (p.heads == 1) return linear(scaled_dot_attention(q, k, v), p.o);

    const std::size_t dh = d / p.heads;
    std::vector<Tensor> heads;
    heads.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, dh);
        Tensor kh = slice_cols(k, h * dh, dh);
        Tensor vh = slice_cols(v, h * dh, dh);
        heads.push_back(scaled_dot_attention(qh, kh, vh));
    }
    return linear(concat_cols(heads), p.o);
}

}  // namespace t2v
