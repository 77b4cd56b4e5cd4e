#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "t2v/tensor.hpp"

namespace t2v {

enum class ScoreMethod { t2vparser, global_mean, tokenwise_max };

ScoreMethod score_method_from_string(const std::string& s);
std::string to_string(ScoreMethod m);

// Similarity between one query embedding matrix and one candidate embedding
// matrix (rows are token/view vectors). Returns a plain score.
using PairScorer = std::function<double(const Tensor& query, const Tensor& candidate)>;

// Cosine similarity of the mean-pooled rows.
double global_mean_score(const Tensor& query, const Tensor& candidate);

// Mean over query rows of the max cosine against any candidate row.
double tokenwise_max_score(const Tensor& query, const Tensor& candidate);

// Assembles the full [Q x C] matrix; gradients are never recorded.
Tensor score_matrix(const std::vector<Tensor>& queries, const std::vector<Tensor>& candidates,
                    const PairScorer& scorer);

// Percentage of queries whose correct candidate ranks in the top k.
// Ties are broken by lower candidate index.
double recall_at_k(const Tensor& scores, const std::vector<std::size_t>& ground_truth,
                   std::size_t k);

// Median of the correct candidates' 1-based ranks; even count averages the
// middle two.
double median_rank(const Tensor& scores, const std::vector<std::size_t>& ground_truth);

// Elementwise product of the row-softmax and column-softmax of the
// temperature-scaled matrix.
Tensor dual_softmax_rescore(const Tensor& scores, double row_temperature = 1.0,
                            double col_temperature = 1.0);

struct RetrievalReport {
    std::string method;
    bool dsl_applied = false;
    std::map<int, double> r_at;  // k in {1, 5, 10}, clamped to the candidate count
    double median_rank = 0.0;
    Tensor score_matrix;
};

RetrievalReport evaluate_matrix(const Tensor& scores, const std::vector<std::size_t>& ground_truth,
                                const std::string& method, bool dsl);

// One-line JSON: {method, dsl, r1, r5, r10, medr, seed, corpus_manifest_hash}.
std::string report_json(const RetrievalReport& report, std::uint64_t seed,
                        const std::string& corpus_manifest_hash);

}  // namespace t2v
