#include "lmk/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lmk/errors.hpp"

using nlohmann::json;

namespace lmk {

namespace {
constexpr char kMagic[8] = {'L', 'M', 'K', 'C', 'K', 'P', 'T', '\0'};

long long shape_product(const std::vector<int>& shape) {
    long long p = 1;
    for (int s : shape) p *= s;
    return p;
}
}  // namespace

const NamedArray& Checkpoint::array(const std::string& name) const {
    for (const NamedArray& a : arrays)
        if (a.name == name) return a;
    throw CorruptCheckpoint("checkpoint: missing array " + name);
}

void save_checkpoint(const std::string& path, const std::vector<NamedArray>& arrays,
                     const Config& config_snapshot) {
    json manifest;
    manifest["version"] = kCheckpointVersion;
    json cfg = json::object();
    for (const auto& [k, v] : config_snapshot.entries()) cfg[k] = v;
    manifest["config"] = cfg;
    manifest["arrays"] = json::array();
    long long offset = 0;
    for (const NamedArray& a : arrays) {
        const long long n = shape_product(a.shape);
        if (n != (long long)a.data.size())
            throw std::invalid_argument("save_checkpoint: shape does not match data for " + a.name);
        manifest["arrays"].push_back(
            {{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"nbytes", n * 4}});
        offset += n * 4;
    }
    const std::string mtext = manifest.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f.write(kMagic, 8);
    const uint64_t mlen = mtext.size();
    f.write(reinterpret_cast<const char*>(&mlen), 8);
    f.write(mtext.data(), std::streamsize(mtext.size()));
    for (const NamedArray& a : arrays)
        f.write(reinterpret_cast<const char*>(a.data.data()),
                std::streamsize(a.data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw CorruptCheckpoint("load_checkpoint: bad magic in " + path);
    uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), 8);
    if (!f || mlen == 0 || mlen > (1ull << 30))
        throw CorruptCheckpoint("load_checkpoint: bad manifest length");
    std::string mtext(mlen, '\0');
    f.read(mtext.data(), std::streamsize(mlen));
    if (!f) throw CorruptCheckpoint("load_checkpoint: truncated manifest");

    json manifest;
    try {
        manifest = json::parse(mtext);
    } catch (const json::exception& e) {
        throw CorruptCheckpoint(std::string("load_checkpoint: manifest parse: ") + e.what());
    }
    Checkpoint ckpt;
    ckpt.version = manifest.value("version", "");
    if (ckpt.version != kCheckpointVersion)
        throw UnsupportedVersion("load_checkpoint: version " + ckpt.version + " not supported");
    for (auto& [k, v] : manifest.at("config").items()) ckpt.config.set(k, v.get<std::string>());

    const std::streampos blob_start = f.tellg();
    f.seekg(0, std::ios::end);
    const long long blob_bytes = (long long)(f.tellg() - blob_start);

    for (const json& ja : manifest.at("arrays")) {
        NamedArray a;
        a.name = ja.at("name").get<std::string>();
        a.shape = ja.at("shape").get<std::vector<int>>();
        const long long offset = ja.at("offset").get<long long>();
        const long long nbytes = ja.at("nbytes").get<long long>();
        if (nbytes != shape_product(a.shape) * 4)
            throw CorruptCheckpoint("load_checkpoint: index/shape mismatch for " + a.name);
        if (offset < 0 || offset + nbytes > blob_bytes)
            throw CorruptCheckpoint("load_checkpoint: truncated blob for " + a.name);
        a.data.resize(size_t(nbytes / 4));
        f.seekg(blob_start + std::streampos(offset));
        f.read(reinterpret_cast<char*>(a.data.data()), nbytes);
        if (!f) throw CorruptCheckpoint("load_checkpoint: read failed for " + a.name);
        ckpt.arrays.push_back(std::move(a));
    }
    return ckpt;
}

void save_encoder_checkpoint(EncoderState& state, const std::string& path, Config extra) {
    std::vector<NamedArray> arrays;
    for (auto& p : state.query.params())
        arrays.push_back({"query." + p.name, {int(p.value->size())}, *p.value});
    for (auto& p : state.key.params())
        arrays.push_back({"key." + p.name, {int(p.value->size())}, *p.value});
    NamedArray q;
    q.name = "queue";
    q.shape = {state.queue_size(), state.embed_dim()};
    q.data.assign(state.queue.data(), state.queue.data() + state.queue.size());
    arrays.push_back(std::move(q));

    extra.set("ckpt.backbone", state.query.spec().name);
    extra.set("ckpt.momentum_m", std::to_string(state.momentum_m));
    extra.set("ckpt.tau_nce", std::to_string(state.tau_nce));
    extra.set("ckpt.queue_head", std::to_string(state.queue_head));
    save_checkpoint(path, arrays, extra);
}

EncoderState encoder_from_checkpoint(const Checkpoint& ckpt) {
    const std::string preset = ckpt.config.get_str("ckpt.backbone");
    if (preset.empty()) throw CorruptCheckpoint("encoder checkpoint: missing backbone preset");
    const NamedArray& queue = ckpt.array("queue");
    if (queue.shape.size() != 2) throw CorruptCheckpoint("encoder checkpoint: bad queue shape");

    EncoderState state(backbone_spec(preset), queue.shape[0], 0);
    state.momentum_m = ckpt.config.get_real("ckpt.momentum_m", state.momentum_m);
    state.tau_nce = ckpt.config.get_real("ckpt.tau_nce", state.tau_nce);
    state.queue_head = ckpt.config.get_int("ckpt.queue_head", 0);
    std::memcpy(state.queue.data(), queue.data.data(), queue.data.size() * sizeof(float));

    auto restore = [&](Backbone& net, const std::string& prefix) {
        for (auto& p : net.params()) {
            const NamedArray& a = ckpt.array(prefix + p.name);
            if (a.data.size() != p.value->size())
                throw CorruptCheckpoint("encoder checkpoint: shape mismatch for " + a.name);
            *p.value = a.data;
        }
    };
    restore(state.query, "query.");
    restore(state.key, "key.");
    return state;
}

EncoderState load_encoder_checkpoint(const std::string& path) {
    return encoder_from_checkpoint(load_checkpoint(path));
}

void save_projector_checkpoint(const Projector& proj, const std::string& path, Config extra) {
    std::vector<NamedArray> arrays;
    arrays.push_back({"w", {proj.input_dim, proj.output_dim}, proj.w});
    extra.set("ckpt.proj_tau", std::to_string(proj.tau));
    save_checkpoint(path, arrays, extra);
}

Projector load_projector_checkpoint(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    const NamedArray& w = ckpt.array("w");
    if (w.shape.size() != 2) throw CorruptCheckpoint("projector checkpoint: bad weight shape");
    Projector proj;
    proj.input_dim = w.shape[0];
    proj.output_dim = w.shape[1];
    proj.tau = ckpt.config.get_real("ckpt.proj_tau", 1.0 / 7.0);
    proj.w = w.data;
    return proj;
}

}  // namespace lmk
