#include "t2v/model.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "t2v/rng.hpp"

namespace t2v {

using nlohmann::json;

void validate_config(const TrainConfig& cfg) {
    auto fail = [](const std::string& msg) {
        throw std::invalid_argument("train config: " + msg);
    };
    if (cfg.d == 0 || cfg.heads == 0 || cfg.d % cfg.heads != 0)
        fail("width " + std::to_string(cfg.d) + " must be a positive multiple of heads " +
             std::to_string(cfg.heads));
    if (cfg.k < 1) fail("k must be >= 1");
    if (cfg.parser_layers < 1) fail("parser_layers must be >= 1");
    if (cfg.alpha < 0.0) fail("alpha must be nonnegative");
    if (cfg.temperature_init <= 0.0) fail("temperature_init must be positive");
    if (cfg.batch_size < 2) fail("batch_size must be >= 2 for contrastive training");
    if (cfg.epochs < 1) fail("epochs must be >= 1");
    if (cfg.lr_encoder < 0.0 || cfg.lr_head < 0.0) fail("learning rates must be nonnegative");
}

namespace {

json config_to_json(const TrainConfig& c) {
    return json{{"d", c.d},
                {"k", c.k},
                {"parser_layers", c.parser_layers},
                {"heads", c.heads},
                {"alpha", c.alpha},
                {"temperature_init", c.temperature_init},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"lr_encoder", c.lr_encoder},
                {"lr_head", c.lr_head},
                {"seed", c.seed},
                {"diversity_normalize_rows", c.diversity_normalize_rows},
                {"eq3_literal", c.eq3_literal},
                {"doc_video_training", c.doc_video_training}};
}

TrainConfig config_from_json(const json& j) {
    static const char* kFields[] = {"d",
                                    "k",
                                    "parser_layers",
                                    "heads",
                                    "alpha",
                                    "temperature_init",
                                    "batch_size",
                                    "epochs",
                                    "lr_encoder",
                                    "lr_head",
                                    "seed",
                                    "diversity_normalize_rows",
                                    "eq3_literal",
                                    "doc_video_training"};
    if (!j.is_object()) throw std::invalid_argument("train config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool known = false;
        for (const char* f : kFields) known = known || key == f;
        if (!known) throw std::invalid_argument("train config: unknown key \"" + key + "\"");
    }
    TrainConfig c;
    try {
        c.d = j.at("d").get<std::size_t>();
        c.k = j.at("k").get<std::size_t>();
        c.parser_layers = j.at("parser_layers").get<std::size_t>();
        c.heads = j.at("heads").get<std::size_t>();
        c.alpha = j.at("alpha").get<double>();
        c.temperature_init = j.at("temperature_init").get<double>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.lr_encoder = j.at("lr_encoder").get<double>();
        c.lr_head = j.at("lr_head").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.diversity_normalize_rows = j.at("diversity_normalize_rows").get<bool>();
        c.eq3_literal = j.at("eq3_literal").get<bool>();
        c.doc_video_training = j.at("doc_video_training").get<bool>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("train config: ") + e.what());
    }
    validate_config(c);
    return c;
}

}  // namespace

TrainConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("train config: invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

std::string config_to_json_text(const TrainConfig& cfg) { return config_to_json(cfg).dump(); }

Model Model::init(const TrainConfig& cfg, std::size_t raw_width, std::size_t vocab) {
    validate_config(cfg);
    if (raw_width == 0 || vocab == 0)
        throw std::invalid_argument("model: raw_width and vocab must be positive");
    Model m;
    m.cfg = cfg;
    m.raw_width = raw_width;
    m.vocab = vocab;

    EncoderConfig vc;
    vc.kind = EncoderKind::trainable_small;
    vc.modality = Modality::video;
    vc.d = cfg.d;
    vc.raw_width = raw_width;
    vc.seed = cfg.seed;
    m.venc = EncoderParams::init(vc);

    EncoderConfig tc = vc;
    tc.modality = Modality::text;
    tc.raw_width = vocab;
    m.tenc = EncoderParams::init(tc);

    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
    Rng bank_rng(derive_seed(cfg.seed, 11));
    m.bank = AdtBank::init(cfg.k, cfg.d, bank_rng);
    Rng vrng(derive_seed(cfg.seed, 12));
    m.vparser = ParserParams::init(cfg.d, cfg.parser_layers, cfg.heads, vrng, scale);
    m.vparser.eq3_literal = cfg.eq3_literal;
    Rng trng(derive_seed(cfg.seed, 13));
    m.tparser = ParserParams::init(cfg.d, cfg.parser_layers, cfg.heads, trng, scale);
    m.tparser.eq3_literal = cfg.eq3_literal;
    Rng crng(derive_seed(cfg.seed, 14));
    m.comm = CommParams::init(cfg.d, cfg.heads, crng, scale);

    m.logit_scale = Tensor::scalar(std::log(cfg.temperature_init));
    m.logit_scale.set_requires_grad(true);
    return m;
}

std::vector<NamedTensor> Model::parameters() const {
    std::vector<NamedTensor> out;
    venc.collect("venc", out);
    tenc.collect("tenc", out);
    bank.collect("adt", out);
    vparser.collect("vparser", out);
    tparser.collect("tparser", out);
    comm.collect("comm", out);
    out.push_back({"logit_scale", logit_scale});
    return out;
}

Tensor Model::temperature() const { return clamp_max(exp(logit_scale), 100.0); }

Embedded embed_video(const Model& m, const std::vector<std::vector<double>>& frames) {
    const EncodedSequence es = encode_video(frames, m.venc);
    Embedded out;
    out.mv = parse(m.bank, es.local, es.cls, m.vparser);
    out.rows = l2_normalize_rows(out.mv.multiview);
    return out;
}

Embedded embed_text(const Model& m, const std::vector<int>& tokens) {
    const EncodedSequence es = encode_text(tokens, m.tenc);
    Embedded out;
    out.mv = parse(m.bank, es.local, es.cls, m.tparser);
    out.rows = l2_normalize_rows(out.mv.multiview);
    return out;
}

Tensor batch_scores(const Model& m, const std::vector<Embedded>& videos,
                    const std::vector<Embedded>& texts) {
    if (videos.empty() || texts.empty())
        throw std::invalid_argument("batch_scores: empty video or text batch");
    const Tensor temp = m.temperature();
    std::vector<Tensor> cells;
    cells.reserve(videos.size() * texts.size());
    for (const auto& v : videos)
        for (const auto& t : texts) cells.push_back(pair_similarity(v.rows, t.rows, m.comm, temp));
    return stack_scalars(cells, videos.size(), texts.size());
}

double multiview_similarity_stat(const Model& m, const SyntheticCorpus& corpus,
                                 const std::vector<std::size_t>& video_ids) {
    if (video_ids.empty())
        throw std::invalid_argument("multiview_similarity_stat: empty video set");
    if (m.cfg.k < 2) return 0.0;
    NoGradGuard guard;
    double total = 0.0;
    for (std::size_t id : video_ids) {
        if (id >= corpus.videos.size())
            throw std::invalid_argument("multiview_similarity_stat: video id " +
                                        std::to_string(id) + " out of range");
        const Embedded e = embed_video(m, corpus.videos[id].frames);
        const Tensor& en = e.mv.adt_out;
        const std::size_t k = en.rows();
        double acc = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) {
                double dot = 0.0, ni = 0.0, nj = 0.0;
                for (std::size_t c = 0; c < en.cols(); ++c) {
                    dot += en.at(i, c) * en.at(j, c);
                    ni += en.at(i, c) * en.at(i, c);
                    nj += en.at(j, c) * en.at(j, c);
                }
                acc += dot / (std::sqrt(ni) * std::sqrt(nj));
                ++pairs;
            }
        }
        total += acc / static_cast<double>(pairs);
    }
    return total / static_cast<double>(video_ids.size());
}

EmbeddingVariant embedding_variant_from_string(const std::string& s) {
    if (s == "multiview") return EmbeddingVariant::multiview;
    if (s == "global") return EmbeddingVariant::global;
    if (s == "local") return EmbeddingVariant::local;
    throw std::invalid_argument("unknown embedding variant \"" + s + "\"");
}

std::string to_string(EmbeddingVariant v) {
    switch (v) {
        case EmbeddingVariant::multiview: return "multiview";
        case EmbeddingVariant::global: return "global";
        case EmbeddingVariant::local: return "local";
    }
    throw std::invalid_argument("unknown embedding variant");
}

namespace {

Tensor variant_rows(const Embedded& e, EmbeddingVariant v) {
    switch (v) {
        case EmbeddingVariant::multiview: return e.rows;
        case EmbeddingVariant::global: return l2_normalize_rows(e.mv.cls);
        case EmbeddingVariant::local: return l2_normalize_rows(e.mv.local);
    }
    throw std::invalid_argument("unknown embedding variant");
}

}  // namespace

RetrievalReport run_retrieval(const Model& m, const SyntheticCorpus& corpus,
                              const EvalSpec& spec) {
    if (corpus.test_ids.empty())
        throw std::invalid_argument("run_retrieval: corpus has no test split");
    NoGradGuard guard;

    std::vector<Tensor> candidates;
    candidates.reserve(corpus.test_ids.size());
    for (std::size_t id : corpus.test_ids)
        candidates.push_back(variant_rows(embed_video(m, corpus.videos[id].frames), spec.variant));

    std::vector<Tensor> queries;
    std::vector<std::size_t> truth;
    for (std::size_t ci = 0; ci < corpus.test_ids.size(); ++ci) {
        const std::size_t vid = corpus.test_ids[ci];
        for (const auto& q : corpus.queries) {
            if (q.video != vid || q.kind != QueryKind::document) continue;
            SyntheticQuery used = q;
            if (spec.noise_ratio > 0.0)
                used = inject_caption_noise(q, corpus, spec.noise_ratio, corpus.spec.seed);
            queries.push_back(variant_rows(embed_text(m, used.tokens), spec.variant));
            truth.push_back(ci);
        }
    }
    if (queries.empty())
        throw std::invalid_argument("run_retrieval: test split has no document queries");

    PairScorer scorer;
    switch (spec.method) {
        case ScoreMethod::t2vparser: {
            const double temp = m.temperature().item();
            scorer = [&m, temp](const Tensor& q, const Tensor& c) {
                return pair_similarity(c, q, m.comm, temp).item();
            };
            break;
        }
        case ScoreMethod::global_mean:
            scorer = [](const Tensor& q, const Tensor& c) { return global_mean_score(q, c); };
            break;
        case ScoreMethod::tokenwise_max:
            scorer = [](const Tensor& q, const Tensor& c) { return tokenwise_max_score(q, c); };
            break;
    }
    const Tensor scores = score_matrix(queries, candidates, scorer);
    return evaluate_matrix(scores, truth, to_string(spec.method), spec.dsl);
}

}  // namespace t2v
