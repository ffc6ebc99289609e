// Checkpoint container: "HTLC" magic, format version, a JSON header with
// the model config and tensor index, then raw little-endian float32 blobs
// guarded by a CRC.

#include <cstring>
#include <fstream>

#include <zlib.h>

#include "histo/errors.hpp"
#include "histo/model_zoo.hpp"

using json = nlohmann::json;

namespace histo {

namespace {

constexpr char kMagic[4] = {'H', 'T', 'L', 'C'};
constexpr std::uint32_t kFormatVersion = 1;

struct Header {
    json doc;
    std::uint64_t blob_offset = 0;
};

Header read_header(std::ifstream& in, const std::filesystem::path& path) {
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t json_len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&json_len), sizeof(json_len));
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("not a checkpoint file: " + path.string());
    if (version != kFormatVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                              " in " + path.string());
    std::string header(json_len, '\0');
    in.read(header.data(), std::streamsize(json_len));
    if (!in)
        throw CheckpointError("truncated checkpoint header: " + path.string());
    Header h;
    try {
        h.doc = json::parse(header);
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt checkpoint header in " + path.string() + ": " +
                              e.what());
    }
    h.blob_offset = 4 + sizeof(version) + sizeof(json_len) + json_len;
    return h;
}

} // namespace

void save_checkpoint(ModelHandle& model, const std::filesystem::path& path) {
    auto params = model.graph().params();
    json tensors = json::array();
    std::uint64_t blob_bytes = 0;
    for (const nn::Param* p : params) {
        tensors.push_back({{"name", p->name},
                           {"shape", p->value.shape},
                           {"offset", blob_bytes}});
        blob_bytes += p->value.numel() * sizeof(float);
    }
    uLong crc = crc32(0L, Z_NULL, 0);
    for (const nn::Param* p : params)
        crc = crc32(crc, reinterpret_cast<const Bytef*>(p->value.ptr()),
                    uInt(p->value.numel() * sizeof(float)));

    json doc = {
        {"model_config", model.config().to_json()},
        {"tensors", tensors},
        {"blob_bytes", blob_bytes},
        {"blob_crc32", std::uint32_t(crc)},
    };
    const std::string header = doc.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw CheckpointError("cannot write checkpoint: " + path.string());
    out.write(kMagic, 4);
    const std::uint32_t version = kFormatVersion;
    const std::uint64_t json_len = header.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&json_len), sizeof(json_len));
    out.write(header.data(), std::streamsize(header.size()));
    for (const nn::Param* p : params)
        out.write(reinterpret_cast<const char*>(p->value.ptr()),
                  std::streamsize(p->value.numel() * sizeof(float)));
    if (!out)
        throw CheckpointError("checkpoint write failed: " + path.string());
}

ModelHandle load_checkpoint(const std::filesystem::path& path,
                            const std::optional<ModelConfig>& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError("cannot open checkpoint: " + path.string());
    Header h = read_header(in, path);

    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_json(h.doc.at("model_config"));
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt checkpoint config in " + path.string() + ": " +
                              e.what());
    }
    if (expected && !expected->same_architecture(cfg))
        throw CheckpointError("checkpoint " + path.string() +
                              " was saved for a different architecture (" +
                              backbone_name(cfg.backbone) + ", " +
                              std::to_string(cfg.n_classes) + " classes)");

    // Rebuild with this config but skip any external weight pack; every
    // tensor comes from the blob.
    ModelConfig build_cfg = cfg;
    build_cfg.weights_path.clear();
    ModelHandle model = build_model(build_cfg);
    model.config_ = cfg;

    auto params = model.graph().params();
    const auto& tensors = h.doc.at("tensors");
    if (tensors.size() != params.size())
        throw CheckpointError("checkpoint tensor count mismatch in " + path.string());

    uLong crc = crc32(0L, Z_NULL, 0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = tensors[i];
        if (entry.at("name").get<std::string>() != params[i]->name ||
            entry.at("shape").get<std::vector<int>>() != params[i]->value.shape)
            throw CheckpointError("checkpoint tensor \"" +
                                  entry.at("name").get<std::string>() +
                                  "\" does not match the model in " + path.string());
        in.read(reinterpret_cast<char*>(params[i]->value.ptr()),
                std::streamsize(params[i]->value.numel() * sizeof(float)));
        if (!in)
            throw CheckpointError("truncated checkpoint blob: " + path.string());
        crc = crc32(crc, reinterpret_cast<const Bytef*>(params[i]->value.ptr()),
                    uInt(params[i]->value.numel() * sizeof(float)));
    }
    if (std::uint32_t(crc) != h.doc.at("blob_crc32").get<std::uint32_t>())
        throw CheckpointError("checkpoint blob CRC mismatch (corrupt file): " + path.string());
    return model;
}

namespace detail {

// Weight packs reuse the checkpoint container; any stored tensor whose name
// and shape match a model parameter is loaded (a converted backbone pack
// typically covers only backbone tensors, leaving the head at its seeded
// initialization).
void load_weight_pack(ModelHandle& model, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw WeightLoadError("pretrained weights not found: " + path.string());
    Header h;
    try {
        h = read_header(in, path);
    } catch (const CheckpointError& e) {
        throw WeightLoadError(e.what());
    }

    std::size_t loaded = 0;
    auto params = model.graph().params();
    for (const auto& entry : h.doc.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<int>>();
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        for (nn::Param* p : params) {
            if (p->name != name)
                continue;
            if (p->value.shape != shape)
                throw WeightLoadError("weight tensor \"" + name + "\" has shape " +
                                      nn::shape_str(shape) + ", model expects " +
                                      nn::shape_str(p->value.shape));
            in.seekg(std::streamoff(h.blob_offset + offset));
            in.read(reinterpret_cast<char*>(p->value.ptr()),
                    std::streamsize(p->value.numel() * sizeof(float)));
            if (!in)
                throw WeightLoadError("truncated weight pack: " + path.string());
            ++loaded;
            break;
        }
    }
    if (loaded == 0)
        throw WeightLoadError("weight pack " + path.string() +
                              " contains no tensors matching this model");
}

} // namespace detail

} // namespace histo
