#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "t2v/trainer.hpp"

using namespace t2v;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.d = 8;
    c.k = 2;
    c.parser_layers = 1;
    c.heads = 2;
    c.batch_size = 4;
    c.epochs = 2;
    c.seed = 3;
    return c;
}

CorpusSpec tiny_spec() {
    CorpusSpec s;
    s.videos = 8;
    s.train_videos = 6;
    s.a_count = 3;
    s.frames = 6;
    s.aspect_pool = 8;
    s.raw_width = 16;
    s.vocab = 48;
    s.phrase_len = 2;
    s.frame_noise = 0.05;
    s.seed = 5;
    return s;
}

NamedTensor named_param(const std::string& name, std::vector<double> vals) {
    Tensor t = Tensor::from({1, vals.size()}, vals);
    t.set_requires_grad(true);
    return {name, t};
}

}  // namespace

TEST_CASE("adam leaves parameters alone on zero gradient or zero lr") {
    auto p = named_param("head.w", {1.0, 2.0});
    AdamState state;
    adam_step({p}, state, [](const std::string&) { return 0.1; });
    CHECK(state.step == 1);
    CHECK(p.tensor.values() == std::vector<double>{1.0, 2.0});
    for (double m : state.m.at("head.w")) CHECK(m == 0.0);
    for (double v : state.v.at("head.w")) CHECK(v == 0.0);

    p.tensor.node()->grad = {5.0, -5.0};
    adam_step({p}, state, [](const std::string&) { return 0.0; });
    CHECK(p.tensor.values() == std::vector<double>{1.0, 2.0});
    CHECK(state.m.at("head.w")[0] != 0.0);
}

TEST_CASE("first adam step moves by about lr in the gradient direction") {
    auto p = named_param("head.w", {1.0, 2.0});
    p.tensor.node()->grad = {2.0, -3.0};
    AdamState state;
    adam_step({p}, state, [](const std::string&) { return 0.01; });
    CHECK(p.tensor.values()[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-7));
    CHECK(p.tensor.values()[1] == doctest::Approx(2.0 + 0.01).epsilon(1e-7));

    // closed form for the second step with the same gradient
    const double g = 2.0;
    const double after_first = 1.0 - 0.01 * g / (std::sqrt(g * g) + 1e-8);
    double m = 0.1 * g, v = 0.001 * g * g;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - 0.9 * 0.9);
    const double vhat = v / (1.0 - 0.999 * 0.999);
    const double expect = after_first - 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
    p.tensor.node()->grad = {2.0, -3.0};
    adam_step({p}, state, [](const std::string&) { return 0.01; });
    CHECK(p.tensor.values()[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("learning-rate router splits encoder and head groups") {
    TrainConfig cfg = tiny_config();
    cfg.lr_encoder = 0.5;
    cfg.lr_head = 0.25;
    const auto lr_of = lr_router(cfg);
    CHECK(lr_of("venc.proj") == 0.5);
    CHECK(lr_of("tenc.sa.q.w") == 0.5);
    CHECK(lr_of("adt.e0") == 0.25);
    CHECK(lr_of("vparser.layer0.ff.w") == 0.25);
    CHECK(lr_of("logit_scale") == 0.25);

    auto enc = named_param("venc.p", {0.0});
    auto head = named_param("adt.e0", {0.0});
    enc.tensor.node()->grad = {1.0};
    head.tensor.node()->grad = {1.0};
    AdamState state;
    adam_step({enc, head}, state, lr_of);
    CHECK(enc.tensor.values()[0] == doctest::Approx(-0.5).epsilon(1e-7));
    CHECK(head.tensor.values()[0] == doctest::Approx(-0.25).epsilon(1e-7));
}

TEST_CASE("non-finite gradients abort before any write and name the parameter") {
    auto a = named_param("head.a", {1.0});
    auto b = named_param("venc.b", {2.0});
    a.tensor.node()->grad = {1.0};
    b.tensor.node()->grad = {std::numeric_limits<double>::quiet_NaN()};
    AdamState state;
    try {
        adam_step({a, b}, state, [](const std::string&) { return 0.1; });
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("venc.b") != std::string::npos);
    }
    CHECK(a.tensor.values()[0] == 1.0);
    CHECK(b.tensor.values()[0] == 2.0);
    CHECK(state.step == 0);
}

TEST_CASE("training is deterministic and records a complete trace") {
    const SyntheticCorpus corpus = generate_corpus(tiny_spec());
    const TrainConfig cfg = tiny_config();
    const TrainOutput a = train_model(cfg, corpus);
    const TrainOutput b = train_model(cfg, corpus);

    CHECK_FALSE(a.aborted);
    // 6 train videos x (3 captions + 1 document) = 24 pairs, batches of 4
    CHECK(a.steps == 2 * 24 / 4);
    REQUIRE(a.trace.size() == a.steps);
    REQUIRE(b.trace.size() == a.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].total == b.trace[i].total);
        CHECK(a.trace[i].l_align ==
              doctest::Approx(a.trace[i].l_v2t + a.trace[i].l_t2v).epsilon(1e-12));
        CHECK(a.trace[i].total ==
              doctest::Approx(a.trace[i].l_align + cfg.alpha * a.trace[i].l_div).epsilon(1e-9));
        CHECK(std::isfinite(a.trace[i].total));
    }
    const auto pa = a.model.parameters();
    const auto pb = b.model.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(pa[i].tensor.values() == pb[i].tensor.values());
    CHECK(a.adam == b.adam);
}

TEST_CASE("document queries join the pair pool only when enabled") {
    const SyntheticCorpus corpus = generate_corpus(tiny_spec());
    TrainConfig cfg = tiny_config();
    cfg.epochs = 1;
    const TrainOutput with_docs = train_model(cfg, corpus);
    CHECK(with_docs.steps == 24 / 4);

    cfg.doc_video_training = false;
    const TrainOutput captions_only = train_model(cfg, corpus);
    // 6 x 3 captions = 18 pairs, last partial batch of 2 still trains
    CHECK(captions_only.steps == 5);
    CHECK(with_docs.trace.front().total != captions_only.trace.front().total);
}

TEST_CASE("loss decreases across a few epochs on a small corpus") {
    CorpusSpec spec = tiny_spec();
    spec.videos = 22;
    spec.train_videos = 20;
    const SyntheticCorpus corpus = generate_corpus(spec);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 3;  // 20 x 4 = 80 pairs, 20 steps per epoch
    const TrainOutput out = train_model(cfg, corpus);
    REQUIRE(out.steps == 60);

    std::vector<double> ma;
    for (std::size_t end = 10; end <= out.trace.size(); ++end) {
        double acc = 0.0;
        for (std::size_t i = end - 10; i < end; ++i) acc += out.trace[i].total;
        ma.push_back(acc / 10.0);
    }
    CHECK(ma.back() < ma.front());
    for (double v : ma) CHECK(std::isfinite(v));
}

TEST_CASE("first epoch on the default corpus keeps a finite, net-decreasing trace") {
    const SyntheticCorpus corpus = generate_corpus(CorpusSpec{});
    TrainConfig cfg;
    cfg.epochs = 1;
    const TrainOutput out = train_model(cfg, corpus);
    REQUIRE(!out.aborted);
    REQUIRE(out.steps == 88);  // 200 videos x 7 queries, batch 16

    std::vector<double> ma;
    for (std::size_t end = 10; end <= out.trace.size(); ++end) {
        double acc = 0.0;
        for (std::size_t i = end - 10; i < end; ++i) acc += out.trace[i].total;
        ma.push_back(acc / 10.0);
    }
    for (double v : ma) REQUIRE(std::isfinite(v));
    // the 10-step moving average ends the epoch below where it started;
    // step-to-step wiggles are expected of stochastic batches
    CHECK(ma.back() <= ma.front());
}

TEST_CASE("a poisoned batch aborts training with the last good state retained") {
    SyntheticCorpus corpus = generate_corpus(tiny_spec());
    for (auto& video : corpus.videos)
        for (auto& frame : video.frames) frame[0] = 1e200;
    const TrainConfig cfg = tiny_config();
    const TrainOutput out = train_model(cfg, corpus);
    CHECK(out.aborted);
    CHECK(out.steps == 0);
    CHECK_FALSE(out.abort_reason.empty());

    const Model fresh = Model::init(cfg, corpus.spec.raw_width, corpus.spec.vocab);
    const auto pa = out.model.parameters();
    const auto pf = fresh.parameters();
    REQUIRE(pa.size() == pf.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(pa[i].tensor.values() == pf[i].tensor.values());
}

TEST_CASE("training rejects corpora without a train split") {
    SyntheticCorpus corpus = generate_corpus(tiny_spec());
    corpus.train_ids.clear();
    CHECK_THROWS_AS((void)train_model(tiny_config(), corpus), std::invalid_argument);
}
