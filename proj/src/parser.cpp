#include "t2v/parser.hpp"

#include <cmath>
#include <stdexcept>

namespace t2v {

AdtBank AdtBank::init(std::size_t k, std::size_t d, Rng& rng) {
    if (k < 1) throw std::invalid_argument("adt bank: k must be >= 1");
    AdtBank b;
    b.e0 = Tensor::randn({k, d}, rng, 0.02, true);
    return b;
}

void AdtBank::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    out.push_back({prefix + ".e0", e0});
}

ParserLayerParams ParserLayerParams::init(std::size_t d, std::size_t heads, Rng& rng,
                                          double scale, bool requires_grad) {
    ParserLayerParams p;
    p.sa = SelfAttnParams::init(d, heads, rng, scale, requires_grad);
    p.cq = LinearParams::init(d, d, rng, scale, requires_grad);
    p.ck = LinearParams::init(d, d, rng, scale, requires_grad);
    p.cv = LinearParams::init(d, d, rng, scale, requires_grad);
    p.ff = LinearParams::init(d, d, rng, scale, requires_grad);
    p.ln_g = Tensor::full({1, d}, 1.0, requires_grad);
    p.ln_b = Tensor::zeros({1, d}, requires_grad);
    return p;
}

void ParserLayerParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    sa.collect(prefix + ".sa", out);
    cq.collect(prefix + ".cq", out);
    ck.collect(prefix + ".ck", out);
    cv.collect(prefix + ".cv", out);
    ff.collect(prefix + ".ff", out);
    out.push_back({prefix + ".ln_g", ln_g});
    out.push_back({prefix + ".ln_b", ln_b});
}

ParserParams ParserParams::init(std::size_t d, std::size_t n_layers, std::size_t heads, Rng& rng,
                                double scale, bool requires_grad) {
    if (n_layers < 1) throw std::invalid_argument("parser: layer count must be >= 1");
    ParserParams p;
    p.layers.reserve(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i)
        p.layers.push_back(ParserLayerParams::init(d, heads, rng, scale, requires_grad));
    p.en_ln_g = Tensor::full({1, d}, 1.0, requires_grad);
    p.en_ln_b = Tensor::zeros({1, d}, requires_grad);
    p.cls_ln_g = Tensor::full({1, d}, 1.0, requires_grad);
    p.cls_ln_b = Tensor::zeros({1, d}, requires_grad);
    return p;
}

void ParserParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
        layers[i].collect(prefix + ".layer" + std::to_string(i), out);
    out.push_back({prefix + ".en_ln_g", en_ln_g});
    out.push_back({prefix + ".en_ln_b", en_ln_b});
    out.push_back({prefix + ".cls_ln_g", cls_ln_g});
    out.push_back({prefix + ".cls_ln_b", cls_ln_b});
}

Tensor parser_layer_forward(const Tensor& e_prev, const Tensor& features,
                            const ParserLayerParams& p, bool eq3_literal) {
    if (e_prev.cols() != features.cols())
        throw std::invalid_argument("parser_layer_forward: width mismatch, tokens " +
                                    shape_str(e_prev.shape()) + " vs features " +
                                    shape_str(features.shape()));
    Tensor e_hat = add(e_prev, self_attention(e_prev, p.sa));
    Tensor q = linear(e_hat, p.cq);
    Tensor k = linear(features, p.ck);
    Tensor v = linear(features, p.cv);
    Tensor e_cross = add(e_hat, scaled_dot_attention(q, k, v));
    if (eq3_literal) return add(e_cross, linear(e_cross, p.ff));
    Tensor branch = layer_norm(gelu(linear(e_cross, p.ff)), p.ln_g, p.ln_b, kLayerNormEps);
    return add(e_cross, branch);
}

Tensor assemble_multiview(const Tensor& local, const Tensor& adt_out, const Tensor& cls,
                          const ParserParams& params) {
    Tensor en_norm = layer_norm(adt_out, params.en_ln_g, params.en_ln_b, kLayerNormEps);
    Tensor cls_norm = layer_norm(cls, params.cls_ln_g, params.cls_ln_b, kLayerNormEps);
    Tensor en_cls = add_row_broadcast(en_norm, cls_norm);
    return concat_rows(local, en_cls);
}

MultiviewEmbedding parse(const AdtBank& bank, const Tensor& features, const Tensor& cls,
                         const ParserParams& params) {
    if (params.layers.empty()) throw std::invalid_argument("parse: layer list is empty");
    Tensor e = bank.e0;
    for (const auto& layer : params.layers)
        e = parser_layer_forward(e, features, layer, params.eq3_literal);
    MultiviewEmbedding mv;
    mv.local = features;
    mv.adt_out = e;
    mv.cls = cls;
    mv.multiview = assemble_multiview(features, e, cls, params);
    return mv;
}

}  // namespace t2v
