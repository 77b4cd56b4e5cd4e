#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "t2v/model.hpp"
#include "t2v/objectives.hpp"
#include "t2v/synth_data.hpp"

namespace t2v {

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;  // t, incremented once per adam_step call
    std::map<std::string, std::vector<double>> m, v;

    bool operator==(const AdamState&) const = default;
};

// Bias-corrected Adam over the named parameters sharing one global step.
// Gradients are read from each tensor; parameters without a gradient keep
// their value and zero moments. Non-finite gradients abort, naming the
// parameter.
void adam_step(const std::vector<NamedTensor>& params, AdamState& state,
               const std::function<double(const std::string& name)>& lr_of);

void zero_grads(const std::vector<NamedTensor>& params);

// Learning-rate routing: encoder parameters ("venc." / "tenc." prefixes) get
// lr_encoder, everything else lr_head.
std::function<double(const std::string&)> lr_router(const TrainConfig& cfg);

struct LossTracePoint {
    std::size_t step = 0;
    double l_v2t = 0.0, l_t2v = 0.0, l_align = 0.0, l_div = 0.0, total = 0.0;
};

struct TrainOutput {
    Model model;
    AdamState adam;
    std::vector<LossTracePoint> trace;
    std::size_t steps = 0;
    bool aborted = false;       // hit a non-finite loss; model holds the last good state
    std::string abort_reason;
};

TrainOutput train_model(const TrainConfig& cfg, const SyntheticCorpus& corpus);

}  // namespace t2v
