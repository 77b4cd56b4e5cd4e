#include "t2v/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "t2v/rng.hpp"

namespace t2v {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;
constexpr double kAspectCosineCap = 0.3;

void validate_spec(const CorpusSpec& s) {
    auto fail = [](const std::string& msg) {
        throw std::invalid_argument("corpus spec: " + msg);
    };
    if (s.videos < 2) fail("videos must be >= 2");
    if (s.train_videos < 1 || s.train_videos >= s.videos)
        fail("train_videos must be in [1, videos-1]");
    if (s.a_count < 2 || s.a_count > 16) fail("a_count must be in [2, 16]");
    if (s.frames < s.a_count)
        fail("frames " + std::to_string(s.frames) + " < a_count " + std::to_string(s.a_count));
    if (s.aspect_pool < s.a_count) fail("aspect_pool must be >= a_count");
    if (s.phrase_len < 1) fail("phrase_len must be >= 1");
    if (s.vocab < s.aspect_pool * s.phrase_len)
        fail("vocab " + std::to_string(s.vocab) + " too small for " +
             std::to_string(s.aspect_pool) + " disjoint phrases of length " +
             std::to_string(s.phrase_len));
    if (s.raw_width < 2) fail("raw_width must be >= 2");
    if (s.frame_noise < 0.0) fail("frame_noise must be nonnegative");
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::size_t doc_cover_count(std::size_t a_count) { return (3 * a_count + 3) / 4; }

}  // namespace

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

SyntheticCorpus generate_corpus(const CorpusSpec& spec) {
    validate_spec(spec);
    SyntheticCorpus c;
    c.spec = spec;

    Rng arng(derive_seed(spec.seed, 1));
    std::vector<int> token_deck(spec.vocab);
    std::iota(token_deck.begin(), token_deck.end(), 0);
    arng.shuffle(token_deck);

    c.aspects.reserve(spec.aspect_pool);
    for (std::size_t a = 0; a < spec.aspect_pool; ++a) {
        Aspect asp;
        asp.id = a;
        asp.phrase.assign(token_deck.begin() + static_cast<std::ptrdiff_t>(a * spec.phrase_len),
                          token_deck.begin() +
                              static_cast<std::ptrdiff_t>((a + 1) * spec.phrase_len));
        bool placed = false;
        for (int tries = 0; tries < 20000 && !placed; ++tries) {
            std::vector<double> cand(spec.raw_width);
            double norm = 0.0;
            for (double& v : cand) {
                v = arng.normal();
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (double& v : cand) v /= norm;
            placed = true;
            for (const auto& prev : c.aspects) {
                if (cosine(cand, prev.latent) >= kAspectCosineCap) {
                    placed = false;
                    break;
                }
            }
            if (placed) asp.latent = std::move(cand);
        }
        if (!placed)
            throw std::runtime_error("corpus generation: could not sample " +
                                     std::to_string(spec.aspect_pool) +
                                     " aspects with pairwise cosine < 0.3 at width " +
                                     std::to_string(spec.raw_width));
        c.aspects.push_back(std::move(asp));
    }

    std::size_t qid = 0;
    std::vector<std::size_t> pool_ids(spec.aspect_pool);
    std::iota(pool_ids.begin(), pool_ids.end(), 0);
    for (std::size_t v = 0; v < spec.videos; ++v) {
        Rng vrng(derive_seed(spec.seed, 1000 + v));
        SyntheticVideo video;
        video.id = v;
        std::vector<std::size_t> deck = pool_ids;
        vrng.shuffle(deck);
        video.aspects.assign(deck.begin(), deck.begin() + static_cast<std::ptrdiff_t>(spec.a_count));

        const std::size_t base = spec.frames / spec.a_count;
        const std::size_t rem = spec.frames % spec.a_count;
        video.frames.reserve(spec.frames);
        for (std::size_t s = 0; s < spec.a_count; ++s) {
            const std::size_t seg_len = base + (s < rem ? 1 : 0);
            const auto& latent = c.aspects[video.aspects[s]].latent;
            for (std::size_t f = 0; f < seg_len; ++f) {
                std::vector<double> frame(spec.raw_width);
                for (std::size_t j = 0; j < spec.raw_width; ++j)
                    frame[j] = latent[j] + spec.frame_noise * vrng.normal();
                video.frames.push_back(std::move(frame));
            }
        }

        for (std::size_t s = 0; s < spec.a_count; ++s) {
            SyntheticQuery q;
            q.id = qid++;
            q.video = v;
            q.kind = QueryKind::caption;
            q.tokens = c.aspects[video.aspects[s]].phrase;
            q.covered = {video.aspects[s]};
            c.queries.push_back(std::move(q));
        }

        std::vector<std::size_t> slots(spec.a_count);
        std::iota(slots.begin(), slots.end(), 0);
        vrng.shuffle(slots);
        slots.resize(doc_cover_count(spec.a_count));
        std::sort(slots.begin(), slots.end());
        SyntheticQuery doc;
        doc.id = qid++;
        doc.video = v;
        doc.kind = QueryKind::document;
        for (std::size_t s : slots) {
            const auto& phrase = c.aspects[video.aspects[s]].phrase;
            doc.tokens.insert(doc.tokens.end(), phrase.begin(), phrase.end());
            doc.covered.push_back(video.aspects[s]);
        }
        c.queries.push_back(std::move(doc));
        c.videos.push_back(std::move(video));
    }

    c.train_ids.resize(spec.train_videos);
    std::iota(c.train_ids.begin(), c.train_ids.end(), 0);
    c.test_ids.resize(spec.videos - spec.train_videos);
    std::iota(c.test_ids.begin(), c.test_ids.end(), spec.train_videos);
    return c;
}

SyntheticQuery inject_caption_noise(const SyntheticQuery& doc, const SyntheticCorpus& corpus,
                                    double ratio, std::uint64_t seed) {
    if (doc.kind != QueryKind::document)
        throw std::invalid_argument("inject_caption_noise: query " + std::to_string(doc.id) +
                                    " is not a document");
    if (ratio < 0.0 || ratio > 1.0)
        throw std::invalid_argument("inject_caption_noise: ratio must lie in [0, 1]");
    const std::size_t plen = corpus.spec.phrase_len;
    if (plen == 0 || doc.tokens.size() != doc.covered.size() * plen)
        throw std::invalid_argument(
            "inject_caption_noise: document does not decompose into phrase segments");
    const std::size_t segments = doc.covered.size();
    const auto replace = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(segments)));
    if (replace == 0) return doc;
    if (corpus.videos.size() < 2)
        throw std::invalid_argument(
            "inject_caption_noise: need at least two videos to sample foreign segments");

    Rng rng(derive_seed(seed, doc.id));
    std::vector<std::size_t> slots(segments);
    std::iota(slots.begin(), slots.end(), 0);
    rng.shuffle(slots);
    slots.resize(replace);
    std::sort(slots.begin(), slots.end());

    const auto& own = corpus.videos[doc.video].aspects;
    std::set<std::size_t> own_set(own.begin(), own.end());

    SyntheticQuery out = doc;
    for (std::size_t slot : slots) {
        std::size_t aspect_id = 0;
        for (int tries = 0; tries < 100; ++tries) {
            auto w = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(corpus.videos.size()) - 2));
            if (w >= doc.video) ++w;
            const auto& foreign = corpus.videos[w].aspects;
            const auto pick = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(foreign.size()) - 1));
            aspect_id = foreign[pick];
            if (!own_set.count(aspect_id)) break;
        }
        const auto& phrase = corpus.aspects[aspect_id].phrase;
        for (std::size_t j = 0; j < plen; ++j) out.tokens[slot * plen + j] = phrase[j];
        out.covered[slot] = aspect_id;
    }
    return out;
}

namespace {

json spec_to_json(const CorpusSpec& s) {
    return json{{"videos", s.videos},     {"train_videos", s.train_videos},
                {"a_count", s.a_count},   {"frames", s.frames},
                {"aspect_pool", s.aspect_pool}, {"raw_width", s.raw_width},
                {"vocab", s.vocab},       {"phrase_len", s.phrase_len},
                {"frame_noise", s.frame_noise}, {"seed", s.seed}};
}

CorpusSpec spec_from_json(const json& j) {
    CorpusSpec s;
    s.videos = j.at("videos").get<std::size_t>();
    s.train_videos = j.at("train_videos").get<std::size_t>();
    s.a_count = j.at("a_count").get<std::size_t>();
    s.frames = j.at("frames").get<std::size_t>();
    s.aspect_pool = j.at("aspect_pool").get<std::size_t>();
    s.raw_width = j.at("raw_width").get<std::size_t>();
    s.vocab = j.at("vocab").get<std::size_t>();
    s.phrase_len = j.at("phrase_len").get<std::size_t>();
    s.frame_noise = j.at("frame_noise").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

}  // namespace

CorpusSpec spec_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("corpus spec: not valid json: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("corpus spec: top level must be an object");
    static const char* known[] = {"videos", "train_videos", "a_count",    "frames",
                                  "aspect_pool", "raw_width", "vocab",    "phrase_len",
                                  "frame_noise", "seed"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw std::invalid_argument("corpus spec: unknown field \"" + key + "\"");
    }
    try {
        return spec_from_json(j);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("corpus spec: ") + e.what());
    }
}

std::string spec_to_json_text(const CorpusSpec& spec) { return spec_to_json(spec).dump(); }

std::string manifest_json(const SyntheticCorpus& c) {
    std::size_t captions = 0, documents = 0;
    for (const auto& q : c.queries)
        (q.kind == QueryKind::caption ? captions : documents) += 1;
    json m{{"format_version", kFormatVersion},
           {"kind", "manifest"},
           {"seed", c.spec.seed},
           {"spec", spec_to_json(c.spec)},
           {"counts",
            {{"videos", c.videos.size()},
             {"aspects", c.aspects.size()},
             {"captions", captions},
             {"documents", documents}}},
           {"splits", {{"train", c.train_ids}, {"test", c.test_ids}}}};
    return m.dump();
}

std::string manifest_hash(const SyntheticCorpus& c) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(manifest_json(c));
    return os.str();
}

std::string serialize_corpus(const SyntheticCorpus& c) {
    std::string out = manifest_json(c);
    out.push_back('\n');
    for (const auto& a : c.aspects) {
        json j{{"type", "aspect"}, {"id", a.id}, {"latent", a.latent}, {"phrase", a.phrase}};
        out += j.dump();
        out.push_back('\n');
    }
    for (const auto& v : c.videos) {
        json j{{"type", "video"}, {"id", v.id}, {"aspects", v.aspects}, {"frames", v.frames}};
        out += j.dump();
        out.push_back('\n');
    }
    for (const auto& q : c.queries) {
        json j{{"type", "query"},
               {"id", q.id},
               {"video", q.video},
               {"kind", q.kind == QueryKind::caption ? "caption" : "document"},
               {"tokens", q.tokens},
               {"covered", q.covered}};
        out += j.dump();
        out.push_back('\n');
    }
    return out;
}

SyntheticCorpus parse_corpus(const std::string& text) {
    SyntheticCorpus c;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool have_manifest = false;
    std::size_t want_videos = 0, want_aspects = 0, want_queries = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            throw std::runtime_error("corpus parse error at line " + std::to_string(line_no));
        }
        try {
            if (!have_manifest) {
                if (!j.contains("format_version") || j.value("kind", "") != "manifest")
                    throw std::runtime_error("corpus parse error at line " +
                                             std::to_string(line_no) +
                                             ": manifest must be the first line");
                const int ver = j.at("format_version").get<int>();
                if (ver != kFormatVersion)
                    throw std::runtime_error("incompatible corpus format version " +
                                             std::to_string(ver) + " (expected " +
                                             std::to_string(kFormatVersion) + ")");
                c.spec = spec_from_json(j.at("spec"));
                c.train_ids = j.at("splits").at("train").get<std::vector<std::size_t>>();
                c.test_ids = j.at("splits").at("test").get<std::vector<std::size_t>>();
                want_videos = j.at("counts").at("videos").get<std::size_t>();
                want_aspects = j.at("counts").at("aspects").get<std::size_t>();
                want_queries = j.at("counts").at("captions").get<std::size_t>() +
                               j.at("counts").at("documents").get<std::size_t>();
                have_manifest = true;
                continue;
            }
            const std::string type = j.at("type").get<std::string>();
            if (type == "aspect") {
                Aspect a;
                a.id = j.at("id").get<std::size_t>();
                a.latent = j.at("latent").get<std::vector<double>>();
                a.phrase = j.at("phrase").get<std::vector<int>>();
                c.aspects.push_back(std::move(a));
            } else if (type == "video") {
                SyntheticVideo v;
                v.id = j.at("id").get<std::size_t>();
                v.aspects = j.at("aspects").get<std::vector<std::size_t>>();
                v.frames = j.at("frames").get<std::vector<std::vector<double>>>();
                c.videos.push_back(std::move(v));
            } else if (type == "query") {
                SyntheticQuery q;
                q.id = j.at("id").get<std::size_t>();
                q.video = j.at("video").get<std::size_t>();
                const std::string kind = j.at("kind").get<std::string>();
                if (kind != "caption" && kind != "document")
                    throw std::runtime_error("corpus parse error at line " +
                                             std::to_string(line_no) + ": unknown query kind \"" +
                                             kind + "\"");
                q.kind = kind == "caption" ? QueryKind::caption : QueryKind::document;
                q.tokens = j.at("tokens").get<std::vector<int>>();
                q.covered = j.at("covered").get<std::vector<std::size_t>>();
                c.queries.push_back(std::move(q));
            } else {
                throw std::runtime_error("corpus parse error at line " + std::to_string(line_no) +
                                         ": unknown record type \"" + type + "\"");
            }
        } catch (const json::exception&) {
            throw std::runtime_error("corpus parse error at line " + std::to_string(line_no));
        }
    }
    if (!have_manifest) throw std::runtime_error("corpus parse error at line 1: missing manifest");
    if (c.videos.size() != want_videos || c.aspects.size() != want_aspects ||
        c.queries.size() != want_queries)
        throw std::runtime_error("corpus truncated after line " + std::to_string(line_no) +
                                 ": record counts do not match the manifest");
    return c;
}

void save_corpus(const SyntheticCorpus& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << serialize_corpus(c);
    if (!out) throw std::runtime_error("write failed for " + path);
}

SyntheticCorpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_corpus(buf.str());
}

}  // namespace t2v
