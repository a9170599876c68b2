#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "avdt/tensor.hpp"

namespace avdt {

// "AVDT" tensor container: magic, version, entry table (name, dtype, shape,
// offset, size), then raw little-endian payloads. Round-trips bit-exactly.
namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
}

} // namespace detail

struct ContainerEntry {
    std::string name;
    Dtype dtype = Dtype::Bytes;
    Shape shape;                    // empty for raw byte entries
    std::vector<std::uint8_t> payload;
};

class Container {
  public:
    static constexpr std::uint32_t kVersion = 1;

    void add_f32(const std::string& name, const Tensor<float>& t) {
        ContainerEntry e;
        e.name = name;
        e.dtype = Dtype::F32;
        e.shape = t.shape();
        e.payload.reserve(t.numel() * 4);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(t[i]);
            detail::put_u32(e.payload, bits);
        }
        add_entry(std::move(e));
    }

    void add_f64(const std::string& name, const Tensor<double>& t) {
        ContainerEntry e;
        e.name = name;
        e.dtype = Dtype::F64;
        e.shape = t.shape();
        e.payload.reserve(t.numel() * 8);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(t[i]);
            detail::put_u64(e.payload, bits);
        }
        add_entry(std::move(e));
    }

    void add_bytes(const std::string& name, const std::string& bytes) {
        ContainerEntry e;
        e.name = name;
        e.dtype = Dtype::Bytes;
        e.payload.assign(bytes.begin(), bytes.end());
        add_entry(std::move(e));
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const ContainerEntry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw IoError("container: no entry named " + name);
        return entries_[it->second];
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& e : entries_) out.push_back(e.name);
        return out;
    }

    Tensor<float> get_f32(const std::string& name) const {
        const ContainerEntry& e = entry(name);
        if (e.dtype != Dtype::F32) throw IoError("container: " + name + " is not f32");
        std::size_t n = e.payload.size() / 4;
        std::vector<float> data(n);
        for (std::size_t i = 0; i < n; ++i)
            data[i] = std::bit_cast<float>(detail::get_u32(e.payload.data() + 4 * i));
        return Tensor<float>(e.shape, std::move(data));
    }

    Tensor<double> get_f64(const std::string& name) const {
        const ContainerEntry& e = entry(name);
        if (e.dtype != Dtype::F64) throw IoError("container: " + name + " is not f64");
        std::size_t n = e.payload.size() / 8;
        std::vector<double> data(n);
        for (std::size_t i = 0; i < n; ++i)
            data[i] = std::bit_cast<double>(detail::get_u64(e.payload.data() + 8 * i));
        return Tensor<double>(e.shape, std::move(data));
    }

    std::string get_bytes(const std::string& name) const {
        const ContainerEntry& e = entry(name);
        return std::string(e.payload.begin(), e.payload.end());
    }

    void save(const std::string& path) const {
        std::vector<std::uint8_t> head;
        head.push_back('A');
        head.push_back('V');
        head.push_back('D');
        head.push_back('T');
        detail::put_u32(head, kVersion);
        detail::put_u32(head, std::uint32_t(entries_.size()));

        // Entry table size must be known before offsets can be assigned.
        std::size_t table_bytes = 0;
        for (const auto& e : entries_)
            table_bytes += 4 + e.name.size() + 1 + 4 + 8 * e.shape.size() + 8 + 8;

        std::uint64_t offset = head.size() + table_bytes;
        for (const auto& e : entries_) {
            detail::put_u32(head, std::uint32_t(e.name.size()));
            head.insert(head.end(), e.name.begin(), e.name.end());
            head.push_back(std::uint8_t(e.dtype));
            detail::put_u32(head, std::uint32_t(e.shape.size()));
            for (std::size_t d : e.shape) detail::put_u64(head, d);
            detail::put_u64(head, offset);
            detail::put_u64(head, e.payload.size());
            offset += e.payload.size();
        }

        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + path);
        f.write(reinterpret_cast<const char*>(head.data()), std::streamsize(head.size()));
        for (const auto& e : entries_)
            f.write(reinterpret_cast<const char*>(e.payload.data()), std::streamsize(e.payload.size()));
        if (!f) throw IoError("write failed: " + path);
    }

    static Container load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open: " + path);
        std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                      std::istreambuf_iterator<char>());
        if (buf.size() < 12 || std::memcmp(buf.data(), "AVDT", 4) != 0)
            throw IoError("not an AVDT container: " + path);
        std::uint32_t version = detail::get_u32(buf.data() + 4);
        if (version != kVersion) throw IoError("unsupported container version");
        std::uint32_t count = detail::get_u32(buf.data() + 8);

        Container c;
        std::size_t pos = 12;
        std::uint64_t prev_end = 0;
        auto need = [&](std::size_t n) {
            if (pos + n > buf.size()) throw IoError("truncated container: " + path);
        };
        for (std::uint32_t i = 0; i < count; ++i) {
            need(4);
            std::uint32_t name_len = detail::get_u32(buf.data() + pos);
            pos += 4;
            need(name_len + 1 + 4);
            ContainerEntry e;
            e.name.assign(reinterpret_cast<const char*>(buf.data() + pos), name_len);
            pos += name_len;
            e.dtype = Dtype(buf[pos]);
            pos += 1;
            std::uint32_t ndim = detail::get_u32(buf.data() + pos);
            pos += 4;
            need(8 * ndim + 16);
            for (std::uint32_t d = 0; d < ndim; ++d) {
                e.shape.push_back(std::size_t(detail::get_u64(buf.data() + pos)));
                pos += 8;
            }
            std::uint64_t off = detail::get_u64(buf.data() + pos);
            pos += 8;
            std::uint64_t len = detail::get_u64(buf.data() + pos);
            pos += 8;
            if (off < prev_end || off + len > buf.size())
                throw IoError("overlapping or out-of-bounds entry in " + path);
            prev_end = off + len;
            e.payload.assign(buf.begin() + std::ptrdiff_t(off), buf.begin() + std::ptrdiff_t(off + len));
            c.add_entry(std::move(e));
        }
        return c;
    }

  private:
    void add_entry(ContainerEntry e) {
        if (index_.count(e.name)) throw IoError("duplicate container entry " + e.name);
        index_[e.name] = entries_.size();
        entries_.push_back(std::move(e));
    }

    std::vector<ContainerEntry> entries_;
    std::map<std::string, std::size_t> index_;
};

} // namespace avdt
