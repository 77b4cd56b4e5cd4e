#include "t2v/objectives.hpp"

#include <stdexcept>

namespace t2v {

AlignmentLoss alignment_loss(const Tensor& scores) {
    if (!scores.defined() || scores.ndim() != 2 || scores.rows() != scores.cols())
        throw std::invalid_argument("alignment_loss: square score matrix required, got " +
                                    (scores.defined() ? shape_str(scores.shape())
                                                      : std::string("undefined")));
    const double inv_b = -1.0 / static_cast<double>(scores.rows());
    AlignmentLoss out;
    out.l_v2t = scale(sum_all(take_diag(log_softmax_rows(scores))), inv_b);
    out.l_t2v = scale(sum_all(take_diag(log_softmax_rows(transpose(scores)))), inv_b);
    out.l_align = add(out.l_v2t, out.l_t2v);
    return out;
}

namespace {

Tensor gram_offdiag_sq(const Tensor& en, bool normalize_rows) {
    Tensor e = normalize_rows ? l2_normalize_rows(en) : en;
    Tensor m = zero_diag(matmul(e, transpose(e)));
    return sum_all(mul(m, m));
}

}  // namespace

DiversityLoss diversity_loss(const Tensor& en_t, const Tensor& en_v, bool normalize_rows) {
    DiversityLoss out;
    out.raw_t = gram_offdiag_sq(en_t, normalize_rows);
    out.raw_v = gram_offdiag_sq(en_v, normalize_rows);
    out.l_div = scale(add(out.raw_t, out.raw_v), 0.5);
    return out;
}

DiversityLoss diversity_loss_batch(const std::vector<Tensor>& en_t,
                                   const std::vector<Tensor>& en_v, bool normalize_rows) {
    if (en_t.empty() || en_t.size() != en_v.size())
        throw std::invalid_argument("diversity_loss_batch: need equal nonzero sample counts, " +
                                    std::to_string(en_t.size()) + " vs " +
                                    std::to_string(en_v.size()));
    Tensor acc_t = gram_offdiag_sq(en_t[0], normalize_rows);
    Tensor acc_v = gram_offdiag_sq(en_v[0], normalize_rows);
    for (std::size_t i = 1; i < en_t.size(); ++i) {
        acc_t = add(acc_t, gram_offdiag_sq(en_t[i], normalize_rows));
        acc_v = add(acc_v, gram_offdiag_sq(en_v[i], normalize_rows));
    }
    const double inv_n = 1.0 / static_cast<double>(en_t.size());
    DiversityLoss out;
    out.raw_t = scale(acc_t, inv_n);
    out.raw_v = scale(acc_v, inv_n);
    out.l_div = scale(add(out.raw_t, out.raw_v), 0.5);
    return out;
}

LossBreakdown total_loss(const Tensor& scores, const std::vector<Tensor>& en_t,
                         const std::vector<Tensor>& en_v, double alpha, bool normalize_rows) {
    if (alpha < 0.0) throw std::invalid_argument("total_loss: alpha must be nonnegative");
    AlignmentLoss align = alignment_loss(scores);
    DiversityLoss div = diversity_loss_batch(en_t, en_v, normalize_rows);
    LossBreakdown out;
    out.l_v2t = align.l_v2t;
    out.l_t2v = align.l_t2v;
    out.l_align = align.l_align;
    out.l_div_t = div.raw_t;
    out.l_div_v = div.raw_v;
    out.l_div = div.l_div;
    out.total = alpha == 0.0 ? align.l_align : add(align.l_align, scale(div.l_div, alpha));
    out.alpha = alpha;
    return out;
}

}  // namespace t2v
