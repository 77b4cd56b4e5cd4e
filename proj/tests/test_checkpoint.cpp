#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <sstream>
#include <string>

#include "t2v/checkpoint.hpp"

using namespace t2v;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.d = 8;
    c.k = 2;
    c.parser_layers = 1;
    c.heads = 2;
    c.batch_size = 4;
    c.epochs = 1;
    c.seed = 9;
    return c;
}

CorpusSpec tiny_spec() {
    CorpusSpec s;
    s.videos = 6;
    s.train_videos = 4;
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

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out << bytes;
}

}  // namespace

TEST_CASE("checkpoint round-trips the trained state bit-exactly") {
    const SyntheticCorpus corpus = generate_corpus(tiny_spec());
    const TrainOutput trained = train_model(tiny_config(), corpus);
    REQUIRE_FALSE(trained.aborted);

    const std::string path = "ckpt_roundtrip.bin";
    const std::string hash = manifest_hash(corpus);
    save_checkpoint(trained.model, trained.adam, trained.steps, hash, path);

    const LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.step == trained.steps);
    CHECK(loaded.manifest_hash == hash);
    CHECK(loaded.model.cfg == trained.model.cfg);
    CHECK(loaded.model.raw_width == trained.model.raw_width);
    CHECK(loaded.model.vocab == trained.model.vocab);
    CHECK(loaded.adam == trained.adam);

    const auto pa = trained.model.parameters();
    const auto pb = loaded.model.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(pa[i].tensor.values() == pb[i].tensor.values());
    }

    // evaluation must be bit-identical through the round trip
    EvalSpec spec;
    const RetrievalReport before = run_retrieval(trained.model, corpus, spec);
    const RetrievalReport after = run_retrieval(loaded.model, corpus, spec);
    CHECK(before.score_matrix.values() == after.score_matrix.values());

    // a second save of the loaded state is byte-identical
    const std::string path2 = "ckpt_roundtrip2.bin";
    save_checkpoint(loaded.model, loaded.adam, loaded.step, loaded.manifest_hash, path2);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("fresh models checkpoint without optimizer moments") {
    const SyntheticCorpus corpus = generate_corpus(tiny_spec());
    const Model m = Model::init(tiny_config(), corpus.spec.raw_width, corpus.spec.vocab);
    const std::string path = "ckpt_fresh.bin";
    save_checkpoint(m, AdamState{}, 0, manifest_hash(corpus), path);
    const LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.step == 0);
    CHECK(loaded.adam.m.empty());
    CHECK(loaded.adam.v.empty());
    CHECK(loaded.adam.step == 0);
    const auto pa = m.parameters();
    const auto pb = loaded.model.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(pa[i].tensor.values() == pb[i].tensor.values());
}

TEST_CASE("checkpoint loader rejects damaged files") {
    const SyntheticCorpus corpus = generate_corpus(tiny_spec());
    const Model m = Model::init(tiny_config(), corpus.spec.raw_width, corpus.spec.vocab);
    const std::string path = "ckpt_damage.bin";
    save_checkpoint(m, AdamState{}, 0, manifest_hash(corpus), path);
    const std::string bytes = slurp(path);

    CHECK_THROWS_AS((void)load_checkpoint("no_such_file.bin"), std::runtime_error);

    spit(path, bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_WITH_AS((void)load_checkpoint(path), doctest::Contains("truncated"),
                         std::runtime_error);

    const std::size_t at = bytes.find("\"format_version\":1");
    REQUIRE(at != std::string::npos);
    std::string versioned = bytes;
    versioned.replace(at, 18, "\"format_version\":9");
    spit(path, versioned);
    CHECK_THROWS_WITH_AS((void)load_checkpoint(path), doctest::Contains("incompatible"),
                         std::runtime_error);

    spit(path, "garbage header\n" + bytes.substr(bytes.find('\n') + 1));
    CHECK_THROWS_WITH_AS((void)load_checkpoint(path), doctest::Contains("malformed"),
                         std::runtime_error);
}
