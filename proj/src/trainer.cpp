#include "t2v/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "t2v/rng.hpp"

namespace t2v {

void zero_grads(const std::vector<NamedTensor>& params) {
    for (const auto& p : params) p.tensor.node()->grad.clear();
}

void adam_step(const std::vector<NamedTensor>& params, AdamState& state,
               const std::function<double(const std::string&)>& lr_of) {
    if (!lr_of) throw std::invalid_argument("adam_step: missing learning-rate router");
    // validate every gradient before the first write so a failure leaves the
    // parameters untouched
    for (const auto& p : params) {
        if (!p.tensor.requires_grad()) continue;
        for (double g : p.tensor.node()->grad)
            if (!std::isfinite(g))
                throw std::runtime_error("adam_step: non-finite gradient in " + p.name);
    }
    ++state.step;
    const auto t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (const auto& p : params) {
        if (!p.tensor.requires_grad()) continue;
        auto& node = *p.tensor.node();
        auto& m = state.m[p.name];
        auto& v = state.v[p.name];
        if (m.empty()) m.assign(node.values.size(), 0.0);
        if (v.empty()) v.assign(node.values.size(), 0.0);
        if (m.size() != node.values.size() || v.size() != node.values.size())
            throw std::invalid_argument("adam_step: moment shape mismatch for " + p.name);
        const bool has_grad = !node.grad.empty();
        const double lr = lr_of(p.name);
        for (std::size_t i = 0; i < node.values.size(); ++i) {
            const double g = has_grad ? node.grad[i] : 0.0;
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            node.values[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

std::function<double(const std::string&)> lr_router(const TrainConfig& cfg) {
    return [lr_enc = cfg.lr_encoder, lr_head = cfg.lr_head](const std::string& name) {
        if (name.rfind("venc.", 0) == 0 || name.rfind("tenc.", 0) == 0) return lr_enc;
        return lr_head;
    };
}

TrainOutput train_model(const TrainConfig& cfg, const SyntheticCorpus& corpus) {
    validate_config(cfg);
    if (corpus.train_ids.empty()) throw std::invalid_argument("train: corpus has no train split");

    TrainOutput out;
    out.model = Model::init(cfg, corpus.spec.raw_width, corpus.spec.vocab);
    const std::vector<NamedTensor> params = out.model.parameters();
    const auto lr_of = lr_router(cfg);

    std::vector<std::size_t> pair_queries;
    for (std::size_t vid : corpus.train_ids) {
        for (std::size_t qi = 0; qi < corpus.queries.size(); ++qi) {
            const auto& q = corpus.queries[qi];
            if (q.video != vid) continue;
            if (!cfg.doc_video_training && q.kind != QueryKind::caption) continue;
            pair_queries.push_back(qi);
        }
    }
    if (pair_queries.size() < 2)
        throw std::invalid_argument("train: fewer than two training pairs");

    for (std::size_t epoch = 0; epoch < cfg.epochs && !out.aborted; ++epoch) {
        Rng erng(derive_seed(derive_seed(cfg.seed, 0xE50C), epoch));
        std::vector<std::size_t> order = pair_queries;
        erng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            if (stop - start < 2) continue;

            // A diverging run surfaces either as a non-finite loss value or as
            // the numeric guards firing mid-forward; both abort the run while
            // the parameters still hold the last completed step.
            try {
                std::vector<Embedded> videos, texts;
                std::vector<Tensor> en_v, en_t;
                videos.reserve(stop - start);
                texts.reserve(stop - start);
                for (std::size_t i = start; i < stop; ++i) {
                    const auto& q = corpus.queries[order[i]];
                    Embedded ev = embed_video(out.model, corpus.videos[q.video].frames);
                    Embedded et = embed_text(out.model, q.tokens);
                    en_v.push_back(ev.mv.adt_out);
                    en_t.push_back(et.mv.adt_out);
                    videos.push_back(std::move(ev));
                    texts.push_back(std::move(et));
                }
                const Tensor scores = batch_scores(out.model, videos, texts);
                const LossBreakdown loss =
                    total_loss(scores, en_t, en_v, cfg.alpha, cfg.diversity_normalize_rows);
                const double total = loss.total.item();
                if (!std::isfinite(total)) {
                    out.aborted = true;
                    out.abort_reason =
                        "non-finite loss at step " + std::to_string(out.steps + 1);
                    break;
                }
                zero_grads(params);
                backward(loss.total);
                adam_step(params, out.adam, lr_of);
                ++out.steps;
                out.trace.push_back({out.steps, loss.l_v2t.item(), loss.l_t2v.item(),
                                     loss.l_align.item(), loss.l_div.item(), total});
            } catch (const std::runtime_error& e) {
                out.aborted = true;
                out.abort_reason = e.what();
                break;
            }
        }
    }
    return out;
}

}  // namespace t2v
