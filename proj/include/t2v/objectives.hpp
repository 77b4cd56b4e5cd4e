#pragma once

#include <vector>

#include "t2v/tensor.hpp"

namespace t2v {

struct AlignmentLoss {
    Tensor l_v2t, l_t2v, l_align;  // scalars
};

// symmetric InfoNCE over a square score matrix whose diagonal holds the
// positive pairs
AlignmentLoss alignment_loss(const Tensor& scores);

struct DiversityLoss {
    Tensor raw_t, raw_v, l_div;  // scalars; l_div = 0.5 (raw_t + raw_v)
};

// off-diagonal Gram penalty of the token rows, one sample per modality
DiversityLoss diversity_loss(const Tensor& en_t, const Tensor& en_v, bool normalize_rows);

// batch version: arithmetic mean over samples
DiversityLoss diversity_loss_batch(const std::vector<Tensor>& en_t,
                                   const std::vector<Tensor>& en_v, bool normalize_rows);

struct LossBreakdown {
    Tensor l_v2t, l_t2v, l_align;
    Tensor l_div_t, l_div_v, l_div;
    Tensor total;
    double alpha = 0.0;
};

LossBreakdown total_loss(const Tensor& scores, const std::vector<Tensor>& en_t,
                         const std::vector<Tensor>& en_v, double alpha, bool normalize_rows);

}  // namespace t2v
