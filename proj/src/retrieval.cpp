#include "t2v/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace t2v {

namespace {

double row_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> mean_pool(const Tensor& x) {
    std::vector<double> out(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x.at(i, j);
    for (double& v : out) v /= static_cast<double>(x.rows());
    return out;
}

std::vector<double> row_of(const Tensor& x, std::size_t i) {
    std::vector<double> out(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] = x.at(i, j);
    return out;
}

void check_pair(const Tensor& q, const Tensor& c, const char* who) {
    if (!q.defined() || !c.defined() || q.rows() == 0 || c.rows() == 0)
        throw std::invalid_argument(std::string(who) + ": empty embedding matrix");
    if (q.cols() != c.cols())
        throw std::invalid_argument(std::string(who) + ": width mismatch, query has " +
                                    std::to_string(q.cols()) + " columns, candidate has " +
                                    std::to_string(c.cols()));
}

// 1-based rank of each query's correct candidate, ties resolved toward the
// lower candidate index.
std::vector<std::size_t> truth_ranks(const Tensor& scores,
                                     const std::vector<std::size_t>& ground_truth) {
    if (!scores.defined() || scores.rows() == 0 || scores.cols() == 0)
        throw std::invalid_argument("ranking: empty score matrix");
    if (ground_truth.size() != scores.rows())
        throw std::invalid_argument("ranking: ground truth has " +
                                    std::to_string(ground_truth.size()) + " entries for " +
                                    std::to_string(scores.rows()) + " queries");
    std::vector<std::size_t> ranks(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const std::size_t t = ground_truth[i];
        if (t >= scores.cols())
            throw std::invalid_argument("ranking: ground truth index " + std::to_string(t) +
                                        " out of range for " + std::to_string(scores.cols()) +
                                        " candidates");
        const double st = scores.at(i, t);
        std::size_t rank = 1;
        for (std::size_t j = 0; j < scores.cols(); ++j) {
            if (j == t) continue;
            const double sj = scores.at(i, j);
            if (sj > st || (sj == st && j < t)) ++rank;
        }
        ranks[i] = rank;
    }
    return ranks;
}

}  // namespace

ScoreMethod score_method_from_string(const std::string& s) {
    if (s == "t2vparser") return ScoreMethod::t2vparser;
    if (s == "global_mean") return ScoreMethod::global_mean;
    if (s == "tokenwise_max") return ScoreMethod::tokenwise_max;
    throw std::invalid_argument("unknown scoring method \"" + s + "\"");
}

std::string to_string(ScoreMethod m) {
    switch (m) {
        case ScoreMethod::t2vparser: return "t2vparser";
        case ScoreMethod::global_mean: return "global_mean";
        case ScoreMethod::tokenwise_max: return "tokenwise_max";
    }
    throw std::invalid_argument("unknown scoring method");
}

double global_mean_score(const Tensor& query, const Tensor& candidate) {
    check_pair(query, candidate, "global_mean_score");
    return row_cosine(mean_pool(query), mean_pool(candidate));
}

double tokenwise_max_score(const Tensor& query, const Tensor& candidate) {
    check_pair(query, candidate, "tokenwise_max_score");
    double total = 0.0;
    for (std::size_t i = 0; i < query.rows(); ++i) {
        const auto qr = row_of(query, i);
        double best = -2.0;
        for (std::size_t j = 0; j < candidate.rows(); ++j)
            best = std::max(best, row_cosine(qr, row_of(candidate, j)));
        total += best;
    }
    return total / static_cast<double>(query.rows());
}

Tensor score_matrix(const std::vector<Tensor>& queries, const std::vector<Tensor>& candidates,
                    const PairScorer& scorer) {
    if (queries.empty() || candidates.empty())
        throw std::invalid_argument("score_matrix: empty query or candidate set");
    if (!scorer) throw std::invalid_argument("score_matrix: missing scorer");
    Tensor out = Tensor::zeros({queries.size(), candidates.size()});
    NoGradGuard guard;
    for (std::size_t i = 0; i < queries.size(); ++i)
        for (std::size_t j = 0; j < candidates.size(); ++j)
            out.at(i, j) = scorer(queries[i], candidates[j]);
    return out;
}

double recall_at_k(const Tensor& scores, const std::vector<std::size_t>& ground_truth,
                   std::size_t k) {
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
    if (scores.defined() && k > scores.cols())
        throw std::invalid_argument("recall_at_k: k " + std::to_string(k) + " exceeds " +
                                    std::to_string(scores.cols()) + " candidates");
    const auto ranks = truth_ranks(scores, ground_truth);
    std::size_t hits = 0;
    for (std::size_t r : ranks)
        if (r <= k) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double median_rank(const Tensor& scores, const std::vector<std::size_t>& ground_truth) {
    auto ranks = truth_ranks(scores, ground_truth);
    std::sort(ranks.begin(), ranks.end());
    const std::size_t n = ranks.size();
    if (n % 2 == 1) return static_cast<double>(ranks[n / 2]);
    return 0.5 * (static_cast<double>(ranks[n / 2 - 1]) + static_cast<double>(ranks[n / 2]));
}

Tensor dual_softmax_rescore(const Tensor& scores, double row_temperature,
                            double col_temperature) {
    if (!scores.defined() || scores.rows() == 0 || scores.cols() == 0)
        throw std::invalid_argument("dual_softmax_rescore: empty score matrix");
    NoGradGuard guard;
    const Tensor row_sm = softmax_rows(scale(scores, row_temperature));
    const Tensor col_sm =
        transpose(softmax_rows(scale(transpose(scores), col_temperature)));
    return mul(row_sm, col_sm);
}

RetrievalReport evaluate_matrix(const Tensor& scores, const std::vector<std::size_t>& ground_truth,
                                const std::string& method, bool dsl) {
    RetrievalReport report;
    report.method = method;
    report.dsl_applied = dsl;
    report.score_matrix = dsl ? dual_softmax_rescore(scores) : scores;
    for (int k : {1, 5, 10}) {
        const std::size_t eff = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                      report.score_matrix.cols());
        report.r_at[k] = recall_at_k(report.score_matrix, ground_truth, eff);
    }
    report.median_rank = t2v::median_rank(report.score_matrix, ground_truth);
    return report;
}

std::string report_json(const RetrievalReport& report, std::uint64_t seed,
                        const std::string& corpus_manifest_hash) {
    nlohmann::json j{{"method", report.method},
                     {"dsl", report.dsl_applied},
                     {"r1", report.r_at.at(1)},
                     {"r5", report.r_at.at(5)},
                     {"r10", report.r_at.at(10)},
                     {"medr", report.median_rank},
                     {"seed", seed},
                     {"corpus_manifest_hash", corpus_manifest_hash}};
    return j.dump();
}

}  // namespace t2v
