#include "recat/checkpoint.hpp"

#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "recat/binary_io.hpp"
#include "recat/error.hpp"

namespace recat {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'R', 'C', 'V', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc32_of(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), chunk);
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

struct Group {
    const char* prefix;
    const ParamSet* set;
};

}  // namespace

std::string encode_checkpoint(const TinyUNetParams& params, const AdamWState& optimizer,
                              const RunConfig& config) {
    AdamWState opt = optimizer;
    if (opt.m.size() == 0) opt = AdamWState{params.tensors.zeros_like(), params.tensors.zeros_like(), optimizer.step};
    if (!params.tensors.same_layout(opt.m) || !params.tensors.same_layout(opt.v))
        throw ShapeMismatch("checkpoint: optimizer moments do not mirror the parameters");

    json manifest = json::array();
    std::ostringstream payload;
    std::uint64_t offset = 0;
    for (const Group& g : {Group{"param", &params.tensors}, Group{"adam_m", &opt.m}, Group{"adam_v", &opt.v}}) {
        for (const auto& t : g.set->tensors()) {
            manifest.push_back({{"group", g.prefix}, {"name", t.name}, {"shape", t.shape}, {"offset", offset}});
            for (double v : t.values) bin::put_f64(payload, v);
            offset += 8 * t.values.size();
        }
    }
    json header = {
        {"config", json::parse(config_to_json(config))},
        {"model",
         {{"C", params.config.latent_channels},
          {"F", params.config.features},
          {"temb_dim", params.config.temb_dim},
          {"groups", params.config.groups},
          {"timesteps", params.config.timesteps}}},
        {"step", opt.step},
        {"tensors", manifest},
    };
    const std::string head = header.dump();

    std::ostringstream os;
    bin::put_bytes(os, std::string_view(kMagic, 4));
    bin::put_u32(os, kVersion);
    bin::put_u64(os, head.size());
    bin::put_bytes(os, head);
    bin::put_bytes(os, payload.str());
    std::string body = os.str();
    std::ostringstream tail;
    bin::put_u32(tail, crc32_of(body));
    return body + tail.str();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 20) throw FormatError("checkpoint is truncated");
    const std::string_view body(bytes.data(), bytes.size() - 4);
    std::istringstream crc_in(bytes.substr(bytes.size() - 4));
    const std::uint32_t stored = bin::get_u32(crc_in, "crc");

    std::istringstream is(std::string(body), std::ios::binary);
    if (bin::get_bytes(is, 4, "magic") != std::string_view(kMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
    const std::uint32_t version = bin::get_u32(is, "version");
    if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t head_len = bin::get_u64(is, "header length");
    if (head_len > body.size()) throw FormatError("checkpoint header length exceeds file size");
    if (crc32_of(body) != stored) throw CrcMismatch("checkpoint CRC32 mismatch");
    const std::string head = bin::get_bytes(is, static_cast<std::size_t>(head_len), "header");

    Checkpoint ck;
    try {
        const json header = json::parse(head);
        ck.config = parse_config(header.at("config").dump());
        const json& m = header.at("model");
        TinyUNetConfig mc;
        mc.latent_channels = m.at("C").get<std::size_t>();
        mc.features = m.at("F").get<std::size_t>();
        mc.temb_dim = m.at("temb_dim").get<std::size_t>();
        mc.groups = m.at("groups").get<std::size_t>();
        mc.timesteps = m.at("timesteps").get<int>();
        ck.params = TinyUNetParams::zeros(mc);
        ck.optimizer = AdamWState::zeros_like(ck.params.tensors);
        ck.optimizer.step = header.at("step").get<std::int64_t>();

        const std::size_t payload_start = 16 + static_cast<std::size_t>(head_len);
        const std::size_t n = ck.params.tensors.size();
        const auto& manifest = header.at("tensors");
        if (manifest.size() != 3 * n) throw FormatError("checkpoint manifest has the wrong tensor count");
        ParamSet* sets[3] = {&ck.params.tensors, &ck.optimizer.m, &ck.optimizer.v};
        const char* groups[3] = {"param", "adam_m", "adam_v"};
        std::uint64_t expect = 0;
        for (std::size_t i = 0; i < manifest.size(); ++i) {
            const json& e = manifest[i];
            Tensor& t = (*sets[i / n])[i % n];
            if (e.at("group").get<std::string>() != groups[i / n] || e.at("name").get<std::string>() != t.name ||
                e.at("shape").get<std::vector<std::size_t>>() != t.shape)
                throw FormatError("checkpoint tensor '" + e.at("name").get<std::string>() +
                                  "' does not match the model layout");
            if (e.at("offset").get<std::uint64_t>() != expect) throw FormatError("checkpoint tensor offsets are not contiguous");
            expect += 8 * t.values.size();
        }
        if (payload_start + expect != body.size()) throw FormatError("checkpoint payload size mismatch");
        for (auto* set : sets)
            for (auto& t : set->tensors())
                for (auto& v : t.values) v = bin::get_f64(is, "tensor payload");
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    } catch (const ValidationError& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
    return ck;
}

void save_checkpoint(const TinyUNetParams& params, const AdamWState& optimizer, const RunConfig& config,
                     const std::string& path) {
    bin::write_file(path, encode_checkpoint(params, optimizer, config));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(bin::read_file(path)); }

}  // namespace recat
