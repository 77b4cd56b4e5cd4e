#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace t2v {

struct CorpusSpec {
    std::size_t videos = 250;
    std::size_t train_videos = 200;
    std::size_t a_count = 6;   // distinct aspects per video
    std::size_t frames = 12;   // L
    std::size_t aspect_pool = 32;
    std::size_t raw_width = 64;
    std::size_t vocab = 256;
    std::size_t phrase_len = 4;
    double frame_noise = 0.1;
    std::uint64_t seed = 1;

    bool operator==(const CorpusSpec&) const = default;
};

struct Aspect {
    std::size_t id = 0;
    std::vector<double> latent;  // unit vector, length raw_width
    std::vector<int> phrase;     // token ids, length phrase_len

    bool operator==(const Aspect&) const = default;
};

struct SyntheticVideo {
    std::size_t id = 0;
    std::vector<std::size_t> aspects;          // temporal order, a_count entries
    std::vector<std::vector<double>> frames;   // L rows of raw_width

    bool operator==(const SyntheticVideo&) const = default;
};

enum class QueryKind { caption, document };

struct SyntheticQuery {
    std::size_t id = 0;
    std::size_t video = 0;
    QueryKind kind = QueryKind::caption;
    std::vector<int> tokens;
    std::vector<std::size_t> covered;  // aspect ids, segment order for documents

    bool operator==(const SyntheticQuery&) const = default;
};

struct SyntheticCorpus {
    CorpusSpec spec;
    std::vector<Aspect> aspects;
    std::vector<SyntheticVideo> videos;
    std::vector<SyntheticQuery> queries;
    std::vector<std::size_t> train_ids, test_ids;

    bool operator==(const SyntheticCorpus&) const = default;
};

// Deterministic aspect-structured corpus with controllable partial alignment:
// captions cover one aspect each, the document covers ceil(0.75 a_count)
// aspects in temporal order, aspects are reused across videos.
SyntheticCorpus generate_corpus(const CorpusSpec& spec);

// Replaces round(ratio * segments) document segments with phrases sampled
// from other videos' aspects; covered metadata tracks the change.
SyntheticQuery inject_caption_noise(const SyntheticQuery& doc, const SyntheticCorpus& corpus,
                                    double ratio, std::uint64_t seed);

CorpusSpec spec_from_json_text(const std::string& text);  // strict: all fields, no extras
std::string spec_to_json_text(const CorpusSpec& spec);

std::string manifest_json(const SyntheticCorpus& corpus);  // single line, no newline
std::string manifest_hash(const SyntheticCorpus& corpus);  // fnv1a64 hex of the manifest line
std::uint64_t fnv1a64(const std::string& s);

std::string serialize_corpus(const SyntheticCorpus& corpus);
SyntheticCorpus parse_corpus(const std::string& text);
void save_corpus(const SyntheticCorpus& corpus, const std::string& path);
SyntheticCorpus load_corpus(const std::string& path);

}  // namespace t2v
