#include "quatnn/serialization.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "container format assumes a little-endian host");

namespace quatnn {

namespace {

constexpr char kArrayMagic[8] = {'Q', 'A', 'R', 'R', '0', '0', '0', '1'};
constexpr char kCkptMagic[8] = {'Q', 'C', 'K', 'P', 'T', '0', '0', '1'};

template <typename T>
void put(std::string& out, const T& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    out.append(p, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw std::runtime_error("container truncated");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("short write to '" + path + "'");
}

}  // namespace

std::string serialize_arrays(const std::vector<NamedArray>& arrays) {
    std::string out;
    out.append(kArrayMagic, sizeof(kArrayMagic));
    put<std::uint64_t>(out, arrays.size());
    for (const NamedArray& a : arrays) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
        out.append(a.name);
        put<std::uint8_t>(out, a.is_f64() ? 0 : 1);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
        for (std::size_t d : a.shape) put<std::uint64_t>(out, d);
        const std::size_t n = a.element_count();
        if (a.is_f64()) {
            if (a.f64().size() != n) {
                throw std::runtime_error("array '" + a.name + "': payload does not match shape");
            }
            out.append(reinterpret_cast<const char*>(a.f64().data()), n * sizeof(double));
        } else {
            if (a.i64().size() != n) {
                throw std::runtime_error("array '" + a.name + "': payload does not match shape");
            }
            out.append(reinterpret_cast<const char*>(a.i64().data()),
                       n * sizeof(std::int64_t));
        }
    }
    return out;
}

std::vector<NamedArray> deserialize_arrays(const std::string& bytes, std::size_t offset) {
    std::size_t off = offset;
    if (bytes.size() < off + sizeof(kArrayMagic) ||
        std::memcmp(bytes.data() + off, kArrayMagic, sizeof(kArrayMagic)) != 0) {
        throw std::runtime_error("not an array container (bad magic)");
    }
    off += sizeof(kArrayMagic);
    const auto count = take<std::uint64_t>(bytes, off);
    std::vector<NamedArray> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedArray a;
        const auto name_len = take<std::uint32_t>(bytes, off);
        if (off + name_len > bytes.size()) throw std::runtime_error("container truncated");
        a.name.assign(bytes.data() + off, name_len);
        off += name_len;
        const auto dtype = take<std::uint8_t>(bytes, off);
        const auto ndim = take<std::uint32_t>(bytes, off);
        a.shape.resize(ndim);
        for (auto& d : a.shape) d = static_cast<std::size_t>(take<std::uint64_t>(bytes, off));
        const std::size_t n = a.element_count();
        if (dtype == 0) {
            std::vector<double> v(n);
            if (off + n * sizeof(double) > bytes.size())
                throw std::runtime_error("container truncated");
            std::memcpy(v.data(), bytes.data() + off, n * sizeof(double));
            off += n * sizeof(double);
            a.values = std::move(v);
        } else if (dtype == 1) {
            std::vector<std::int64_t> v(n);
            if (off + n * sizeof(std::int64_t) > bytes.size())
                throw std::runtime_error("container truncated");
            std::memcpy(v.data(), bytes.data() + off, n * sizeof(std::int64_t));
            off += n * sizeof(std::int64_t);
            a.values = std::move(v);
        } else {
            throw std::runtime_error("unknown dtype tag in container");
        }
        out.push_back(std::move(a));
    }
    return out;
}

void write_array_container(const std::string& path, const std::vector<NamedArray>& arrays) {
    write_file(path, serialize_arrays(arrays));
}

std::vector<NamedArray> read_array_container(const std::string& path) {
    return deserialize_arrays(read_file(path));
}

void write_checkpoint(const std::string& path, const nlohmann::json& header,
                      const std::vector<NamedArray>& arrays) {
    std::string out;
    out.append(kCkptMagic, sizeof(kCkptMagic));
    const std::string js = header.dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(js.size()));
    out.append(js);
    out.append(serialize_arrays(arrays));
    write_file(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < sizeof(kCkptMagic) ||
        std::memcmp(bytes.data(), kCkptMagic, sizeof(kCkptMagic)) != 0) {
        throw std::runtime_error("'" + path + "' is not a checkpoint (bad magic)");
    }
    std::size_t off = sizeof(kCkptMagic);
    const auto js_len = take<std::uint32_t>(bytes, off);
    if (off + js_len > bytes.size()) throw std::runtime_error("checkpoint truncated");
    Checkpoint ck;
    ck.header = nlohmann::json::parse(bytes.substr(off, js_len));
    off += js_len;
    ck.arrays = deserialize_arrays(bytes, off);
    return ck;
}

}  // namespace quatnn
