#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pwt/network.hpp"

// Checkpoint file layout:
//   bytes 0..7    magic "PWTCKPT1"
//   bytes 8..15   little-endian u64, JSON header length in bytes
//   header JSON   precision, epoch, pruned percentage, per-layer filter
//                 masks and a tensor directory (name, shape, element offset)
//   payload       the directory's tensors as raw little-endian scalars

namespace pwt {

inline constexpr char kCheckpointMagic[8] = {'P', 'W', 'T', 'C', 'K', 'P', 'T', '1'};

namespace detail {

template <typename T>
void append_scalar_le(std::vector<std::uint8_t>& out, T v) {
    if constexpr (sizeof(T) == 4) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
    } else {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
    }
}

inline double read_scalar_le(const std::uint8_t* p, std::size_t elem_size) {
    if (elem_size == 4) {
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        return static_cast<double>(std::bit_cast<float>(bits));
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace detail

struct CheckpointEntry {
    std::vector<std::size_t> shape;
    std::size_t offset_bytes = 0;
    std::size_t count = 0;
};

struct CheckpointData {
    nlohmann::json header;
    std::vector<std::uint8_t> payload;
    std::map<std::string, CheckpointEntry> entries;
    std::size_t elem_size = 4;

    const std::uint8_t* tensor_bytes(const std::string& name) const {
        auto it = entries.find(name);
        if (it == entries.end()) throw std::runtime_error("checkpoint: no tensor named " + name);
        return payload.data() + it->second.offset_bytes;
    }

    std::vector<double> tensor_values(const std::string& name) const {
        const auto& e = entries.at(name);
        std::vector<double> v(e.count);
        const std::uint8_t* p = payload.data() + e.offset_bytes;
        for (std::size_t i = 0; i < e.count; ++i) v[i] = detail::read_scalar_le(p + i * elem_size, elem_size);
        return v;
    }
};

template <typename T>
void write_checkpoint(const std::filesystem::path& path, const Network<T>& net, int epoch, double pruned_percent) {
    nlohmann::json header;
    header["format"] = "pwt-checkpoint";
    header["version"] = 1;
    header["precision"] = sizeof(T) == 4 ? "f32" : "f64";
    header["epoch"] = epoch;
    header["pruned_percent"] = pruned_percent;

    nlohmann::json masks = nlohmann::json::array();
    for (const auto& l : net.conv_layers()) {
        nlohmann::json m = nlohmann::json::array();
        for (auto v : l.filter_mask) m.push_back(static_cast<int>(v));
        masks.push_back(m);
    }
    header["masks"] = masks;

    std::vector<std::uint8_t> payload;
    nlohmann::json dir = nlohmann::json::array();
    auto add_tensor = [&](const std::string& name, const Tensor<T>& t) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape();
        e["offset_bytes"] = payload.size();
        e["count"] = t.numel();
        dir.push_back(e);
        for (std::size_t i = 0; i < t.numel(); ++i) detail::append_scalar_le(payload, t[i]);
    };
    for (std::size_t i = 0; i < net.conv_layers().size(); ++i) {
        const auto& l = net.conv_layers()[i];
        std::string p = "conv" + std::to_string(i) + ".";
        add_tensor(p + "weights", l.weights);
        add_tensor(p + "bias", l.bias);
        add_tensor(p + "bn_gamma", l.bn_gamma);
        add_tensor(p + "bn_beta", l.bn_beta);
        add_tensor(p + "bn_running_mean", l.bn_running_mean);
        add_tensor(p + "bn_running_var", l.bn_running_var);
    }
    for (std::size_t i = 0; i < net.linear_layers().size(); ++i) {
        const auto& l = net.linear_layers()[i];
        std::string p = "linear" + std::to_string(i) + ".";
        add_tensor(p + "weights", l.weights);
        add_tensor(p + "bias", l.bias);
    }
    header["tensors"] = dir;

    std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(kCheckpointMagic, 8);
    std::uint64_t hlen = header_str.size();
    char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<char>((hlen >> (8 * i)) & 0xff);
    out.write(lenb, 8);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

inline CheckpointData read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing checkpoint file: " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 16 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
        throw std::runtime_error(path.string() + ": not a checkpoint file");
    std::uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i) hlen |= static_cast<std::uint64_t>(buf[8 + i]) << (8 * i);
    if (buf.size() < 16 + hlen) throw std::runtime_error(path.string() + ": truncated checkpoint header");

    CheckpointData d;
    d.header = nlohmann::json::parse(buf.begin() + 16, buf.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
    d.elem_size = d.header.at("precision").get<std::string>() == "f32" ? 4 : 8;
    d.payload.assign(buf.begin() + 16 + static_cast<std::ptrdiff_t>(hlen), buf.end());
    for (const auto& e : d.header.at("tensors")) {
        CheckpointEntry entry;
        entry.shape = e.at("shape").get<std::vector<std::size_t>>();
        entry.count = e.at("count").get<std::size_t>();
        entry.offset_bytes = e.at("offset_bytes").get<std::size_t>();
        d.entries[e.at("name").get<std::string>()] = entry;
    }
    for (const auto& [name, e] : d.entries)
        if (e.offset_bytes + e.count * d.elem_size > d.payload.size())
            throw std::runtime_error(path.string() + ": truncated checkpoint payload at tensor " + name);
    return d;
}

}  // namespace pwt
