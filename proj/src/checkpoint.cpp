#include "colormamba/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <unordered_map>

namespace colormamba {

namespace {

constexpr char kMagic[4] = {'C', 'M', 'B', 'K'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}

double get_f64(std::istream& is) {
    uint64_t bits = get_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void write_array_container(const std::string& path, const std::vector<ArrayEntry>& entries) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(kMagic, 4);
    put_u32(os, kCheckpointVersion);
    put_u32(os, static_cast<uint32_t>(entries.size()));
    put_u32(os, 0);
    for (const ArrayEntry& e : entries) {
        if (numel(e.shape) != static_cast<int64_t>(e.data.size()))
            throw ShapeError("checkpoint entry " + e.name + ": shape/data mismatch");
        put_u32(os, static_cast<uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(os, static_cast<uint32_t>(e.shape.size()));
        for (int64_t d : e.shape) put_u64(os, static_cast<uint64_t>(d));
        for (double v : e.data) put_f64(os, v);
    }
    if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<ArrayEntry> read_array_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": not a checkpoint container");
    uint32_t version = get_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error(path + ": unsupported container version " +
                                 std::to_string(version));
    uint32_t count = get_u32(is);
    get_u32(is);  // reserved
    std::vector<ArrayEntry> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        ArrayEntry e;
        uint32_t name_len = get_u32(is);
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        uint32_t ndim = get_u32(is);
        e.shape.resize(ndim);
        for (uint32_t d = 0; d < ndim; ++d) e.shape[d] = static_cast<int64_t>(get_u64(is));
        int64_t n = numel(e.shape);
        e.data.resize(static_cast<size_t>(n));
        for (int64_t k = 0; k < n; ++k) e.data[static_cast<size_t>(k)] = get_f64(is);
        if (!is) throw std::runtime_error(path + ": truncated container");
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<ArrayEntry> params_to_entries(const NamedParams& params) {
    std::vector<ArrayEntry> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) {
        ArrayEntry e;
        e.name = name;
        e.shape = t.shape();
        e.data.assign(t.values().begin(), t.values().end());
        out.push_back(std::move(e));
    }
    return out;
}

void load_params_from_entries(NamedParams params, const std::vector<ArrayEntry>& entries) {
    std::unordered_map<std::string, const ArrayEntry*> by_name;
    for (const ArrayEntry& e : entries) by_name[e.name] = &e;
    for (auto& [name, t] : params) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint is missing parameter " + name);
        const ArrayEntry& e = *it->second;
        if (e.shape != t.shape())
            throw ShapeError("checkpoint parameter " + name + " has shape " + shape_str(e.shape) +
                             ", model expects " + shape_str(t.shape()));
        auto& dst = t.raw_values();
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<real>(e.data[i]);
    }
}

}  // namespace colormamba
