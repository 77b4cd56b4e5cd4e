#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "t2v/dual_comm.hpp"
#include "t2v/retrieval.hpp"
#include "t2v/rng.hpp"

using namespace t2v;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Tensor t = Tensor::zeros({r, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t.at(i, j) = rng.normal();
    return t;
}

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> tensor_row(const Tensor& t, std::size_t i) {
    std::vector<double> out(t.cols());
    for (std::size_t j = 0; j < t.cols(); ++j) out[j] = t.at(i, j);
    return out;
}

// rank by descending score with stable ties toward the lower index
std::size_t oracle_rank(const Tensor& scores, std::size_t query, std::size_t truth) {
    std::vector<std::size_t> order(scores.cols());
    for (std::size_t j = 0; j < scores.cols(); ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores.at(query, a) > scores.at(query, b);
    });
    const auto pos = std::find(order.begin(), order.end(), truth) - order.begin();
    return static_cast<std::size_t>(pos) + 1;
}

double oracle_recall(const Tensor& scores, const std::vector<std::size_t>& truth, std::size_t k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < scores.rows(); ++i)
        if (oracle_rank(scores, i, truth[i]) <= k) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(scores.rows());
}

double oracle_median(const Tensor& scores, const std::vector<std::size_t>& truth) {
    std::vector<std::size_t> ranks;
    for (std::size_t i = 0; i < scores.rows(); ++i)
        ranks.push_back(oracle_rank(scores, i, truth[i]));
    std::sort(ranks.begin(), ranks.end());
    const std::size_t n = ranks.size();
    return n % 2 ? static_cast<double>(ranks[n / 2])
                 : 0.5 * static_cast<double>(ranks[n / 2 - 1] + ranks[n / 2]);
}

}  // namespace

TEST_CASE("global mean scorer is self-similar and matches a loop oracle") {
    const Tensor x = Tensor::from({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.5, 2.0});
    CHECK(global_mean_score(x, x) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(11);
    const Tensor q = random_matrix(3, 4, rng);
    const Tensor c = random_matrix(5, 4, rng);
    std::vector<double> qm(4, 0.0), cm(4, 0.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) qm[j] += q.at(i, j) / 3.0;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) cm[j] += c.at(i, j) / 5.0;
    CHECK(global_mean_score(q, c) == doctest::Approx(oracle_cosine(qm, cm)).epsilon(1e-12));

    CHECK_THROWS_AS((void)global_mean_score(Tensor(), c), std::invalid_argument);
    CHECK_THROWS_AS((void)global_mean_score(random_matrix(2, 3, rng), c),
                    std::invalid_argument);
}

TEST_CASE("tokenwise max scorer saturates on subset rows and matches a loop oracle") {
    const Tensor cand = Tensor::from({3, 2}, {1.0, 0.0, 0.0, 1.0, 1.0, 1.0});
    const Tensor query = Tensor::from({2, 2}, {0.0, 1.0, 1.0, 1.0});
    CHECK(tokenwise_max_score(query, cand) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(12);
    const Tensor q = random_matrix(4, 3, rng);
    const Tensor c = random_matrix(6, 3, rng);
    double expect = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        double best = -2.0;
        for (std::size_t j = 0; j < 6; ++j)
            best = std::max(best, oracle_cosine(tensor_row(q, i), tensor_row(c, j)));
        expect += best / 4.0;
    }
    CHECK(tokenwise_max_score(q, c) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("score matrix equals per-pair scorer calls for all three scorers") {
    Rng rng(13);
    std::vector<Tensor> queries, candidates;
    for (int i = 0; i < 3; ++i) queries.push_back(l2_normalize_rows(random_matrix(2, 4, rng)));
    for (int i = 0; i < 3; ++i) candidates.push_back(l2_normalize_rows(random_matrix(5, 4, rng)));

    const CommParams comm = CommParams::identity(4);
    const PairScorer parser_scorer = [&](const Tensor& q, const Tensor& c) {
        return pair_similarity(c, q, comm, 1.0).item();
    };
    const std::vector<PairScorer> scorers = {
        parser_scorer,
        [](const Tensor& q, const Tensor& c) { return global_mean_score(q, c); },
        [](const Tensor& q, const Tensor& c) { return tokenwise_max_score(q, c); },
    };
    for (const auto& scorer : scorers) {
        const Tensor m = score_matrix(queries, candidates, scorer);
        REQUIRE(m.rows() == 3);
        REQUIRE(m.cols() == 3);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(m.at(i, j) == doctest::Approx(scorer(queries[i], candidates[j]))
                                        .epsilon(1e-12));
    }
    CHECK_THROWS_AS((void)score_matrix({}, candidates, parser_scorer), std::invalid_argument);
    CHECK_THROWS_AS((void)score_matrix(queries, {}, parser_scorer), std::invalid_argument);
}

TEST_CASE("recall handles diagonal, worst case, and explicit ties") {
    Tensor eye = Tensor::zeros({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
    const std::vector<std::size_t> diag_truth = {0, 1, 2, 3};
    CHECK(recall_at_k(eye, diag_truth, 1) == doctest::Approx(100.0));
    CHECK(median_rank(eye, diag_truth) == doctest::Approx(1.0));

    Tensor anti = Tensor::zeros({10, 10});
    for (std::size_t i = 0; i < 10; ++i) anti.at(i, 9 - i) = 1.0;
    std::vector<std::size_t> truth10(10);
    for (std::size_t i = 0; i < 10; ++i) truth10[i] = i;
    CHECK(recall_at_k(anti, truth10, 1) == doctest::Approx(0.0));

    const Tensor tied = Tensor::from({1, 3}, {1.0, 1.0, 0.0});
    CHECK(recall_at_k(tied, {0}, 1) == doctest::Approx(100.0));
    CHECK(recall_at_k(tied, {1}, 1) == doctest::Approx(0.0));
    CHECK(recall_at_k(tied, {1}, 2) == doctest::Approx(100.0));
    CHECK(median_rank(tied, {1}) == doctest::Approx(2.0));

    CHECK_THROWS_AS((void)recall_at_k(tied, {0}, 0), std::invalid_argument);
    CHECK_THROWS_AS((void)recall_at_k(tied, {0}, 4), std::invalid_argument);
    CHECK_THROWS_AS((void)recall_at_k(tied, {3}, 1), std::invalid_argument);
    CHECK_THROWS_AS((void)recall_at_k(tied, {0, 1}, 1), std::invalid_argument);
}

TEST_CASE("metrics agree with a sort oracle on 100 random matrices") {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor scores = random_matrix(8, 8, rng);
        std::vector<std::size_t> truth(8);
        for (auto& t : truth) t = static_cast<std::size_t>(rng.uniform_int(0, 7));
        for (std::size_t k = 1; k <= 8; ++k)
            CHECK(recall_at_k(scores, truth, k) == doctest::Approx(oracle_recall(scores, truth, k)));
        CHECK(median_rank(scores, truth) == doctest::Approx(oracle_median(scores, truth)));
    }
    Rng rng6(22);
    const Tensor six = random_matrix(6, 6, rng6);
    std::vector<std::size_t> truth6(6);
    for (auto& t : truth6) t = static_cast<std::size_t>(rng6.uniform_int(0, 5));
    CHECK(median_rank(six, truth6) == doctest::Approx(oracle_median(six, truth6)));
}

TEST_CASE("median rank averages the middle pair and hits the worst case") {
    Tensor last = Tensor::zeros({3, 5});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) last.at(i, j) = (j == 4) ? -1.0 : static_cast<double>(j);
    CHECK(median_rank(last, {4, 4, 4}) == doctest::Approx(5.0));

    // ranks 1 and 4 -> 2.5
    Tensor two = Tensor::from({2, 4}, {9.0, 0.0, 0.0, 0.0, 5.0, 4.0, 3.0, 2.0});
    CHECK(median_rank(two, {0, 3}) == doctest::Approx(2.5));
}

TEST_CASE("dual softmax matches direct computation") {
    const Tensor one = dual_softmax_rescore(Tensor::from({1, 1}, {3.7}));
    CHECK(one.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor constant = Tensor::zeros({3, 4});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) constant.at(i, j) = 0.25;
    const Tensor flat = dual_softmax_rescore(constant);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(flat.at(i, j) == doctest::Approx(1.0 / 12.0).epsilon(1e-12));

    const Tensor m = Tensor::from({2, 2}, {2.0, 1.0, 1.0, 2.0});
    const Tensor r = dual_softmax_rescore(m);
    const double p = std::exp(2.0) / (std::exp(2.0) + std::exp(1.0));
    const double q = std::exp(1.0) / (std::exp(2.0) + std::exp(1.0));
    CHECK(r.at(0, 0) == doctest::Approx(p * p).epsilon(1e-12));
    CHECK(r.at(0, 1) == doctest::Approx(q * q).epsilon(1e-12));
    CHECK(r.at(1, 0) == doctest::Approx(q * q).epsilon(1e-12));
    CHECK(r.at(1, 1) == doctest::Approx(p * p).epsilon(1e-12));
    // diagonal margin is amplified relative to the raw margin
    CHECK(r.at(0, 0) / r.at(0, 1) > m.at(0, 0) / m.at(0, 1));
}

TEST_CASE("dual softmax keeps the diagonal on top across a symmetric family") {
    for (double a = 0.2; a <= 3.01; a += 0.4) {
        for (double b = -1.0; b < a - 1e-9; b += 0.3) {
            for (double temp : {0.5, 1.0, 2.0}) {
                const Tensor m = Tensor::from({2, 2}, {a, b, b, a});
                const Tensor r = dual_softmax_rescore(m, temp, temp);
                CHECK(r.at(0, 0) > r.at(0, 1));
                CHECK(r.at(1, 1) > r.at(1, 0));
                CHECK(r.at(0, 0) > r.at(1, 0));
                CHECK(r.at(1, 1) > r.at(0, 1));
            }
        }
    }
}

TEST_CASE("ranking metrics are invariant under strictly increasing maps") {
    Rng rng(31);
    const Tensor scores = random_matrix(7, 9, rng);
    std::vector<std::size_t> truth(7);
    for (auto& t : truth) t = static_cast<std::size_t>(rng.uniform_int(0, 8));

    const auto apply = [&](double (*f)(double)) {
        Tensor out = Tensor::zeros({7, 9});
        for (std::size_t i = 0; i < 7; ++i)
            for (std::size_t j = 0; j < 9; ++j) out.at(i, j) = f(scores.at(i, j));
        return out;
    };
    const std::vector<Tensor> variants = {
        apply([](double x) { return 2.0 * x + 3.0; }),
        apply([](double x) { return std::tanh(x); }),
        apply([](double x) { return std::exp(x); }),
    };
    for (const auto& v : variants) {
        for (std::size_t k = 1; k <= 9; ++k)
            CHECK(recall_at_k(v, truth, k) == doctest::Approx(recall_at_k(scores, truth, k)));
        CHECK(median_rank(v, truth) == doctest::Approx(median_rank(scores, truth)));
    }
}

TEST_CASE("recall is monotone nondecreasing in k") {
    Rng rng(41);
    const Tensor scores = random_matrix(6, 11, rng);
    std::vector<std::size_t> truth(6);
    for (auto& t : truth) t = static_cast<std::size_t>(rng.uniform_int(0, 10));
    double prev = 0.0;
    for (std::size_t k = 1; k <= 11; ++k) {
        const double r = recall_at_k(scores, truth, k);
        CHECK(r >= prev);
        prev = r;
    }
    CHECK(prev == doctest::Approx(100.0));
}

TEST_CASE("report respects invariants, clamps k, and serializes") {
    Rng rng(51);
    const Tensor scores = random_matrix(5, 3, rng);
    const std::vector<std::size_t> truth = {0, 1, 2, 0, 1};
    const RetrievalReport rep = evaluate_matrix(scores, truth, "global_mean", false);
    CHECK(rep.r_at.at(1) <= rep.r_at.at(5));
    CHECK(rep.r_at.at(5) <= rep.r_at.at(10));
    CHECK(rep.r_at.at(10) <= 100.0);
    CHECK(rep.r_at.at(10) == doctest::Approx(100.0));  // k clamps to 3 candidates
    CHECK(rep.median_rank >= 1.0);
    CHECK_FALSE(rep.dsl_applied);

    const RetrievalReport dsl = evaluate_matrix(scores, truth, "t2vparser", true);
    CHECK(dsl.dsl_applied);
    CHECK(dsl.median_rank >= 1.0);

    const std::string j = report_json(rep, 7, "abc123");
    for (const char* key : {"\"method\":\"global_mean\"", "\"dsl\":false", "\"r1\":", "\"r5\":",
                            "\"r10\":", "\"medr\":", "\"seed\":7",
                            "\"corpus_manifest_hash\":\"abc123\""})
        CHECK(j.find(key) != std::string::npos);

    CHECK(to_string(score_method_from_string("tokenwise_max")) == "tokenwise_max");
    CHECK_THROWS_AS((void)score_method_from_string("bogus"), std::invalid_argument);
}
