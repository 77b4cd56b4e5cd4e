#include "t2v/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace t2v {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

struct ArrayRef {
    std::string name;
    std::size_t rows = 0, cols = 0;
    const double* data = nullptr;
};

void write_block(std::ofstream& out, const double* data, std::size_t count) {
    static_assert(sizeof(double) == 8);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &data[i], 8);
        unsigned char buf[8];
        for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>(bits >> (8 * b));
        out.write(reinterpret_cast<const char*>(buf), 8);
    }
}

void read_block(std::ifstream& in, double* data, std::size_t count, const std::string& name) {
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char buf[8];
        in.read(reinterpret_cast<char*>(buf), 8);
        if (!in)
            throw std::runtime_error("checkpoint: truncated data block for array \"" + name +
                                     "\"");
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
        std::memcpy(&data[i], &bits, 8);
    }
}

}  // namespace

void save_checkpoint(const Model& model, const AdamState& adam, std::size_t step,
                     const std::string& manifest_hash, const std::string& path) {
    const std::vector<NamedTensor> params = model.parameters();
    std::vector<ArrayRef> arrays;
    for (const auto& p : params)
        arrays.push_back({p.name, p.tensor.rows(), p.tensor.cols(), p.tensor.values().data()});
    for (const auto& p : params) {
        const auto mit = adam.m.find(p.name);
        if (mit != adam.m.end())
            arrays.push_back({"adam_m." + p.name, 1, mit->second.size(), mit->second.data()});
        const auto vit = adam.v.find(p.name);
        if (vit != adam.v.end())
            arrays.push_back({"adam_v." + p.name, 1, vit->second.size(), vit->second.data()});
    }

    json header{{"format_version", kFormatVersion},
                {"config", json::parse(config_to_json_text(model.cfg))},
                {"manifest_hash", manifest_hash},
                {"step", step},
                {"raw_width", model.raw_width},
                {"vocab", model.vocab},
                {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps},
                          {"step", adam.step}}}};
    json arr = json::array();
    for (const auto& a : arrays) arr.push_back({{"name", a.name}, {"rows", a.rows}, {"cols", a.cols}});
    header["arrays"] = arr;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out << header.dump() << '\n';
    for (const auto& a : arrays) write_block(out, a.data, a.rows * a.cols);
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::runtime_error("checkpoint: missing header line in " + path);
    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::exception&) {
        throw std::runtime_error("checkpoint: malformed header in " + path);
    }

    LoadedCheckpoint out;
    try {
        const int ver = header.at("format_version").get<int>();
        if (ver != kFormatVersion)
            throw std::runtime_error("checkpoint: incompatible format version " +
                                     std::to_string(ver) + " (expected " +
                                     std::to_string(kFormatVersion) + ")");
        const TrainConfig cfg = config_from_json_text(header.at("config").dump());
        out.model = Model::init(cfg, header.at("raw_width").get<std::size_t>(),
                                header.at("vocab").get<std::size_t>());
        out.step = header.at("step").get<std::size_t>();
        out.manifest_hash = header.at("manifest_hash").get<std::string>();
        out.adam.beta1 = header.at("adam").at("beta1").get<double>();
        out.adam.beta2 = header.at("adam").at("beta2").get<double>();
        out.adam.eps = header.at("adam").at("eps").get<double>();
        out.adam.step = header.at("adam").at("step").get<std::size_t>();
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: bad header field: ") + e.what());
    }

    std::map<std::string, Tensor> by_name;
    std::map<std::string, bool> assigned;
    for (const auto& p : out.model.parameters()) {
        by_name.emplace(p.name, p.tensor);
        assigned[p.name] = false;
    }

    for (const auto& a : header.at("arrays")) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        try {
            name = a.at("name").get<std::string>();
            rows = a.at("rows").get<std::size_t>();
            cols = a.at("cols").get<std::size_t>();
        } catch (const json::exception& e) {
            throw std::runtime_error(std::string("checkpoint: bad array entry: ") + e.what());
        }
        const std::size_t count = rows * cols;
        if (name.rfind("adam_m.", 0) == 0 || name.rfind("adam_v.", 0) == 0) {
            const bool is_m = name.rfind("adam_m.", 0) == 0;
            const std::string pname = name.substr(7);
            if (!by_name.count(pname))
                throw std::runtime_error("checkpoint: moment array \"" + name +
                                         "\" has no matching parameter");
            std::vector<double> buf(count);
            read_block(in, buf.data(), count, name);
            (is_m ? out.adam.m : out.adam.v)[pname] = std::move(buf);
            continue;
        }
        const auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint: unknown parameter array \"" + name + "\"");
        Tensor& t = it->second;
        if (t.rows() != rows || t.cols() != cols)
            throw std::runtime_error("checkpoint: shape mismatch for \"" + name + "\": file has [" +
                                     std::to_string(rows) + "x" + std::to_string(cols) +
                                     "], model expects [" + std::to_string(t.rows()) + "x" +
                                     std::to_string(t.cols()) + "]");
        read_block(in, t.node()->values.data(), count, name);
        assigned[name] = true;
    }
    for (const auto& [name, ok] : assigned)
        if (!ok) throw std::runtime_error("checkpoint: parameter \"" + name + "\" missing from file");
    return out;
}

}  // namespace t2v
