#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "t2v/dual_comm.hpp"
#include "t2v/encoders.hpp"
#include "t2v/parser.hpp"
#include "t2v/retrieval.hpp"
#include "t2v/synth_data.hpp"

namespace t2v {

struct TrainConfig {
    std::size_t d = 32;
    std::size_t k = 8;
    std::size_t parser_layers = 8;
    std::size_t heads = 1;
    double alpha = 0.1;
    double temperature_init = 1.0 / 0.07;
    std::size_t batch_size = 16;
    std::size_t epochs = 30;
    double lr_encoder = 1e-4;
    double lr_head = 1e-3;
    std::uint64_t seed = 1;
    bool diversity_normalize_rows = true;
    bool eq3_literal = false;
    bool doc_video_training = true;

    bool operator==(const TrainConfig&) const = default;
};

void validate_config(const TrainConfig& cfg);

// Strict JSON round-trip: every field present, unknown keys rejected.
TrainConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const TrainConfig& cfg);

struct Model {
    TrainConfig cfg;
    std::size_t raw_width = 0;
    std::size_t vocab = 0;
    EncoderParams venc, tenc;  // small trainable encoders
    AdtBank bank;              // decomposition tokens shared by both parsers
    ParserParams vparser, tparser;
    CommParams comm;
    Tensor logit_scale;  // [1 x 1], temperature = min(exp(logit_scale), 100)

    static Model init(const TrainConfig& cfg, std::size_t raw_width, std::size_t vocab);
    std::vector<NamedTensor> parameters() const;
    Tensor temperature() const;
};

struct Embedded {
    MultiviewEmbedding mv;
    Tensor rows;  // L2-normalized multiview rows, the dual-comm input
};

Embedded embed_video(const Model& m, const std::vector<std::vector<double>>& frames);
Embedded embed_text(const Model& m, const std::vector<int>& tokens);

// scores[i][j] = temperature-scaled similarity of (video i, text j)
Tensor batch_scores(const Model& m, const std::vector<Embedded>& videos,
                    const std::vector<Embedded>& texts);

// Mean over the given videos of the mean off-diagonal pairwise cosine among
// the k decomposition-token output rows. k=1 yields 0.
double multiview_similarity_stat(const Model& m, const SyntheticCorpus& corpus,
                                 const std::vector<std::size_t>& video_ids);

enum class EmbeddingVariant { multiview, global, local };

EmbeddingVariant embedding_variant_from_string(const std::string& s);
std::string to_string(EmbeddingVariant v);

struct EvalSpec {
    ScoreMethod method = ScoreMethod::t2vparser;
    EmbeddingVariant variant = EmbeddingVariant::multiview;
    bool dsl = false;
    double noise_ratio = 0.0;
};

// Ranks test-split videos against their test-split document queries.
RetrievalReport run_retrieval(const Model& m, const SyntheticCorpus& corpus,
                              const EvalSpec& spec);

}  // namespace t2v
