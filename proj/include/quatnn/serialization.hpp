#pragma once

// On-disk containers.
//
// Array container (.qar): little-endian binary of named arrays.
//   magic "QARR0001" | u64 count | per array:
//     u32 name_len | name bytes | u8 dtype (0 = f64, 1 = i64) |
//     u32 ndim | u64 dims[ndim] | payload
// Quaternion tensors are stored as one f64 array with a leading plane
// dimension of 4, planes in a, b, c, d order. Round trips are bit exact.
//
// Checkpoint (.qckpt): magic "QCKPT001" | u32 json_len | config/state JSON |
// embedded array container with the parameters (and, for resumable
// checkpoints, the optimizer accumulators under "opt.").

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "quatnn/layers.hpp"
#include "quatnn/vendor_json.hpp"

namespace quatnn {

struct NamedArray {
    std::string name;
    std::vector<std::size_t> shape;
    std::variant<std::vector<double>, std::vector<std::int64_t>> values;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return n;
    }
    bool is_f64() const { return values.index() == 0; }
    const std::vector<double>& f64() const { return std::get<0>(values); }
    const std::vector<std::int64_t>& i64() const { return std::get<1>(values); }
};

void write_array_container(const std::string& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_array_container(const std::string& path);

// In-memory (de)serialization used when embedding a container in another file.
std::string serialize_arrays(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> deserialize_arrays(const std::string& bytes, std::size_t offset = 0);

void write_checkpoint(const std::string& path, const nlohmann::json& header,
                      const std::vector<NamedArray>& arrays);
struct Checkpoint {
    nlohmann::json header;
    std::vector<NamedArray> arrays;
};
Checkpoint read_checkpoint(const std::string& path);

// Captures every parameter of a visitable model as named f64 arrays.
template <typename Model>
std::vector<NamedArray> snapshot_params(Model& m, const std::string& prefix = "") {
    std::vector<NamedArray> out;
    visit_params(m, [&](const ParamRef& p) {
        NamedArray a;
        a.name = prefix + p.name;
        a.shape = p.shape;
        a.values = std::vector<double>(p.data, p.data + p.size);
        out.push_back(std::move(a));
    });
    return out;
}

// Writes named arrays back into a visitable model; throws on any missing
// name or shape mismatch.
template <typename Model>
void restore_params(Model& m, const std::vector<NamedArray>& arrays,
                    const std::string& prefix = "") {
    std::map<std::string, const NamedArray*> index;
    for (const auto& a : arrays) index[a.name] = &a;
    visit_params(m, [&](const ParamRef& p) {
        auto it = index.find(prefix + p.name);
        if (it == index.end()) {
            throw std::runtime_error("checkpoint is missing array '" + prefix + p.name + "'");
        }
        const NamedArray& a = *it->second;
        if (!a.is_f64() || a.f64().size() != p.size) {
            throw std::runtime_error("checkpoint array '" + a.name + "' has wrong size");
        }
        for (std::size_t j = 0; j < p.size; ++j) p.data[j] = a.f64()[j];
    });
}

}  // namespace quatnn
