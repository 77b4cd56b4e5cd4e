#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "t2v/objectives.hpp"

using namespace t2v;

namespace {

Tensor rand_mat(std::size_t m, std::size_t n, Rng& rng, bool rg = false) {
    Tensor t = Tensor::zeros({m, n}, rg);
    for (auto& v : t.values()) v = rng.uniform(-1.5, 1.5);
    return t;
}

}  // namespace

TEST_CASE("alignment loss degenerate and closed-form cases") {
    AlignmentLoss single = alignment_loss(Tensor::from({1, 1}, {3.7}));
    CHECK(single.l_v2t.item() == 0.0);
    CHECK(single.l_t2v.item() == 0.0);
    CHECK(single.l_align.item() == 0.0);

    AlignmentLoss eye = alignment_loss(Tensor::from({2, 2}, {1, 0, 0, 1}));
    const double want = std::log(1.0 + std::exp(-1.0));
    CHECK(eye.l_v2t.item() == doctest::Approx(want).epsilon(1e-12));
    CHECK(eye.l_t2v.item() == doctest::Approx(want).epsilon(1e-12));
    CHECK(std::abs(eye.l_align.item() - 0.62652) < 1e-5);
    CHECK(eye.l_align.item() == doctest::Approx(2.0 * want).epsilon(1e-12));

    CHECK_THROWS_AS(alignment_loss(Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST_CASE("alignment loss symmetry, shift invariance, nonnegativity") {
    Rng rng(61);
    Tensor sym = Tensor::zeros({4, 4});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i; j < 4; ++j) {
            const double v = rng.uniform(-2.0, 2.0);
            sym.at(i, j) = v;
            sym.at(j, i) = v;
        }
    AlignmentLoss s = alignment_loss(sym);
    CHECK(s.l_v2t.item() == s.l_t2v.item());

    Tensor x = rand_mat(5, 5, rng);
    AlignmentLoss base = alignment_loss(x);
    CHECK(base.l_align.item() >= 0.0);
    Tensor shifted = Tensor::zeros({5, 5});
    for (std::size_t i = 0; i < 25; ++i) shifted.values()[i] = x.values()[i] + 7.5;
    AlignmentLoss sh = alignment_loss(shifted);
    CHECK(sh.l_v2t.item() == doctest::Approx(base.l_v2t.item()).epsilon(1e-12));
    CHECK(sh.l_t2v.item() == doctest::Approx(base.l_t2v.item()).epsilon(1e-12));
}

TEST_CASE("diversity loss trivial and hand-computed cases") {
    Tensor ortho = Tensor::from({2, 2}, {1, 0, 0, 1});
    DiversityLoss o = diversity_loss(ortho, ortho, false);
    CHECK(o.l_div.item() == 0.0);

    Tensor single = Tensor::from({1, 3}, {0.3, -2, 1});
    DiversityLoss k1 = diversity_loss(single, single, true);
    CHECK(k1.l_div.item() == 0.0);

    Tensor dup = Tensor::from({2, 2}, {1, 0, 1, 0});
    DiversityLoss d = diversity_loss(dup, dup, false);
    CHECK(d.raw_t.item() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(d.raw_v.item() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(std::abs(d.l_div.item() - 2.0) < 1e-9);
}

TEST_CASE("diversity loss row-permutation invariance and normalized bound") {
    Rng rng(62);
    const std::size_t k = 5, d = 7;
    Tensor e = rand_mat(k, d, rng);
    DiversityLoss base = diversity_loss(e, e, true);

    const std::size_t order[k] = {3, 0, 4, 1, 2};
    Tensor p = Tensor::zeros({k, d});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < d; ++j) p.at(i, j) = e.at(order[i], j);
    DiversityLoss perm = diversity_loss(p, p, true);
    CHECK(perm.l_div.item() == doctest::Approx(base.l_div.item()).epsilon(1e-12));

    CHECK(base.raw_t.item() <= static_cast<double>(k * (k - 1)) + 1e-9);
    CHECK(base.raw_t.item() >= 0.0);
}

TEST_CASE("batch diversity is the sample mean") {
    Tensor collapsed = Tensor::from({2, 2}, {1, 0, 1, 0});  // raw 2
    Tensor ortho = Tensor::from({2, 2}, {1, 0, 0, 1});      // raw 0
    DiversityLoss d = diversity_loss_batch({collapsed, ortho}, {ortho, ortho}, false);
    CHECK(d.raw_t.item() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(d.raw_v.item() == 0.0);
    CHECK(d.l_div.item() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(diversity_loss_batch({}, {}, false), std::invalid_argument);
    CHECK_THROWS_AS(diversity_loss_batch({ortho}, {ortho, ortho}, false),
                    std::invalid_argument);
}

TEST_CASE("total loss composition") {
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor dup = Tensor::from({2, 2}, {1, 0, 1, 0});

    LossBreakdown off = total_loss(eye, {dup}, {dup}, 0.0, false);
    CHECK(off.total.item() == off.l_align.item());

    LossBreakdown on = total_loss(eye, {dup}, {dup}, 0.1, false);
    CHECK(std::abs(on.total.item() - 0.82652) < 1e-5);
    CHECK(on.total.item() ==
          doctest::Approx(on.l_align.item() + 0.1 * on.l_div.item()).epsilon(1e-12));
    CHECK(on.alpha == 0.1);

    Tensor ortho = Tensor::from({2, 2}, {1, 0, 0, 1});
    LossBreakdown zd = total_loss(eye, {ortho}, {ortho}, 0.1, false);
    CHECK(zd.total.item() == doctest::Approx(zd.l_align.item()).epsilon(1e-14));

    CHECK_THROWS_AS(total_loss(eye, {dup}, {dup}, -0.5, false), std::invalid_argument);
}

TEST_CASE("total loss gradients pass the finite-difference check") {
    Rng rng(63);
    Tensor scores = rand_mat(3, 3, rng, true);
    Tensor et0 = rand_mat(2, 4, rng, true);
    Tensor ev0 = rand_mat(2, 4, rng, true);
    Tensor et1 = rand_mat(2, 4, rng, true);
    Tensor ev1 = rand_mat(2, 4, rng, true);

    auto loss = [&] { return total_loss(scores, {et0, et1}, {ev0, ev1}, 0.1, true).total; };
    auto rep = grad_check(loss,
                          {{"scores", scores}, {"et0", et0}, {"ev0", ev0}, {"et1", et1},
                           {"ev1", ev1}},
                          1e-5, 1e-4);
    INFO("worst ", rep.worst_param, "[", rep.worst_index, "] analytic ", rep.analytic,
         " numeric ", rep.numeric, " rel ", rep.max_rel_err);
    CHECK(rep.passed);
}
