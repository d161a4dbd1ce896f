#include "sdm/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "sdm/errors.hpp"

namespace sdm {
namespace {

using nlohmann::json;

constexpr char kMagic[] = "SDMCKPT 1\n";
constexpr size_t kMagicLen = sizeof(kMagic) - 1;
constexpr int kFormatVersion = 1;

void append_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f32(std::string& out, float v) {
    char bytes[4];
    std::memcpy(bytes, &v, 4);
    out.append(bytes, 4);
}

std::uint32_t crc_of(const std::string& bytes) {
    return static_cast<std::uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size())));
}

}  // namespace

void save_checkpoint(const HybridModel& model, const CheckpointMeta& meta,
                     const std::string& path) {
    if (static_cast<Index>(meta.vocab.size()) != model.species_count()) {
        throw ParameterError("checkpoint vocab lists " +
                             std::to_string(meta.vocab.size()) +
                             " species, model predicts " +
                             std::to_string(model.species_count()));
    }
    json config_echo;
    try {
        config_echo = json::parse(meta.config_echo);
    } catch (const json::parse_error& e) {
        throw ParameterError(std::string("checkpoint config echo is not valid JSON: ") +
                             e.what());
    }

    const CapacityPlan& plan = model.plan();
    const HashGridConfig& grid = model.grid_config();
    std::vector<NamedParam> params = model.parameters();

    json header;
    header["version"] = kFormatVersion;
    header["plan"] = {{"total_dim", plan.total_dim},
                      {"implicitness", plan.implicitness},
                      {"implicit_dim", plan.implicit_dim},
                      {"levels", plan.levels},
                      {"features_per_level", plan.features_per_level}};
    header["grid"] = {{"r_min", grid.r_min},
                      {"r_max", grid.r_max},
                      {"table_size", grid.table_size},
                      {"wrap_lon", grid.wrap_lon},
                      {"hash_mul1", HashGridEncoder::kHashMul1},
                      {"hash_mul2", HashGridEncoder::kHashMul2}};
    header["dropout_p"] = model.dropout_p();
    header["species"] = meta.vocab;
    header["seed"] = meta.seed;
    header["config"] = config_echo;
    json blocks = json::array();
    for (const NamedParam& p : params) {
        blocks.push_back({{"name", p.name},
                          {"rows", p.value.rows()},
                          {"cols", p.value.cols()}});
    }
    header["blocks"] = blocks;

    std::string bytes;
    bytes.append(kMagic, kMagicLen);
    std::string header_text = header.dump();
    append_u64(bytes, header_text.size());
    bytes += header_text;
    for (const NamedParam& p : params) {
        for (double v : p.value.values()) append_f32(bytes, static_cast<float>(v));
    }
    std::uint32_t crc = crc_of(bytes);
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((crc >> (8 * i)) & 0xff));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    auto fail = [&](const std::string& what) -> IoError {
        return IoError(path + ": " + what);
    };

    if (bytes.size() < kMagicLen + 8 + 4) throw fail("truncated checkpoint");
    if (std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
        throw fail("bad magic, not a checkpoint file");
    }
    std::uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i) {
        stored_crc |= static_cast<std::uint32_t>(
                          static_cast<unsigned char>(bytes[bytes.size() - 4 + i]))
                      << (8 * i);
    }
    std::string body = bytes.substr(0, bytes.size() - 4);
    if (crc_of(body) != stored_crc) {
        throw fail("integrity digest mismatch (file truncated or corrupted)");
    }

    std::uint64_t header_len = 0;
    for (int i = 0; i < 8; ++i) {
        header_len |= static_cast<std::uint64_t>(
                          static_cast<unsigned char>(body[kMagicLen + i]))
                      << (8 * i);
    }
    size_t header_start = kMagicLen + 8;
    if (body.size() < header_start + header_len) throw fail("truncated header");

    json header;
    try {
        header = json::parse(body.substr(header_start, header_len));
    } catch (const json::parse_error& e) {
        throw fail(std::string("unparseable header: ") + e.what());
    }

    try {
        if (header.at("version").get<int>() != kFormatVersion) {
            throw fail("unsupported format version " +
                       header.at("version").dump());
        }
        const json& jplan = header.at("plan");
        CapacityPlan plan;
        plan.total_dim = jplan.at("total_dim").get<Index>();
        plan.implicitness = jplan.at("implicitness").get<double>();
        plan.implicit_dim = jplan.at("implicit_dim").get<Index>();
        plan.levels = jplan.at("levels").get<Index>();
        plan.features_per_level = jplan.at("features_per_level").get<Index>();

        const json& jgrid = header.at("grid");
        HashGridConfig grid;
        grid.r_min = jgrid.at("r_min").get<double>();
        grid.r_max = jgrid.at("r_max").get<double>();
        grid.table_size = jgrid.at("table_size").get<Index>();
        grid.wrap_lon = jgrid.at("wrap_lon").get<bool>();
        if (jgrid.at("hash_mul1").get<std::uint64_t>() != HashGridEncoder::kHashMul1 ||
            jgrid.at("hash_mul2").get<std::uint64_t>() != HashGridEncoder::kHashMul2) {
            throw fail("hash constants do not match this build");
        }

        CheckpointMeta meta;
        meta.vocab = header.at("species").get<std::vector<std::string>>();
        meta.seed = header.at("seed").get<std::uint64_t>();
        meta.config_echo = header.at("config").dump();
        if (meta.vocab.empty()) throw fail("empty species vocab");

        Rng scratch(meta.seed);
        HybridModel model(plan, static_cast<Index>(meta.vocab.size()), grid,
                          header.at("dropout_p").get<double>(), scratch);

        std::vector<NamedParam> params = model.parameters();
        const json& blocks = header.at("blocks");
        if (blocks.size() != params.size()) {
            throw fail("header lists " + std::to_string(blocks.size()) +
                       " blocks, model has " + std::to_string(params.size()));
        }
        size_t offset = header_start + header_len;
        for (size_t b = 0; b < params.size(); ++b) {
            const json& block = blocks[b];
            const std::string name = block.at("name").get<std::string>();
            Index rows = block.at("rows").get<Index>();
            Index cols = block.at("cols").get<Index>();
            NamedParam& p = params[b];
            if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
                throw fail("block '" + name + "' (" + std::to_string(rows) + "x" +
                           std::to_string(cols) + ") does not match model block '" +
                           p.name + "' (" + std::to_string(p.value.rows()) + "x" +
                           std::to_string(p.value.cols()) + ")");
            }
            size_t count = static_cast<size_t>(rows) * static_cast<size_t>(cols);
            if (body.size() < offset + count * 4) {
                throw fail("block '" + name + "' runs past end of file");
            }
            std::span<double> values = p.value.values();
            for (size_t i = 0; i < count; ++i) {
                float v = 0.0f;
                std::memcpy(&v, body.data() + offset + i * 4, 4);
                values[i] = static_cast<double>(v);
            }
            offset += count * 4;
        }
        if (offset != body.size()) {
            throw fail("unexpected " + std::to_string(body.size() - offset) +
                       " trailing bytes after parameter blocks");
        }
        return {std::move(model), std::move(meta)};
    } catch (const json::exception& e) {
        throw fail(std::string("malformed header field: ") + e.what());
    }
}

}  // namespace sdm
