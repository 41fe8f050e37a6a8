#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stdtrack/model.hpp"

namespace stdtrack {

// Layout (little-endian):
//   "STDW" | u32 version | u32 count |
//   count × { u32 name_len | name bytes | u32 rank | rank × u32 dim | f32 values }
inline constexpr char kWeightsMagic[4] = {'S', 'T', 'D', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

class WeightsError : public std::runtime_error {
public:
    enum class Kind { io, bad_magic, bad_version, truncated, trailing_data, shape_mismatch, missing_tensor, unknown_tensor };

    WeightsError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

namespace detail {

static_assert(std::endian::native == std::endian::little, "weights I/O assumes a little-endian host");

inline void put_u32(std::string& buf, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.append(b, 4);
}

class Reader {
public:
    explicit Reader(const std::string& data) : data_(data) {}

    void take(void* dst, std::size_t n, const char* what) {
        if (data_.size() - pos_ < n)
            throw WeightsError(WeightsError::Kind::truncated, std::string("weights: truncated while reading ") + what);
        std::memcpy(dst, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32(const char* what) {
        std::uint32_t v;
        take(&v, 4, what);
        return v;
    }
    bool done() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    const std::string& data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_weights(const NamedTensors& tensors) {
    std::string buf(kWeightsMagic, 4);
    detail::put_u32(buf, kWeightsVersion);
    detail::put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        detail::put_u32(buf, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) detail::put_u32(buf, static_cast<std::uint32_t>(d));
        buf.append(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(float));
    }
    return buf;
}

inline NamedTensors decode_weights(const std::string& data) {
    detail::Reader r(data);
    char magic[4];
    r.take(magic, 4, "magic");
    if (std::memcmp(magic, kWeightsMagic, 4) != 0)
        throw WeightsError(WeightsError::Kind::bad_magic, "weights: magic mismatch (not an STDW file)");
    const std::uint32_t version = r.u32("version");
    if (version != kWeightsVersion)
        throw WeightsError(WeightsError::Kind::bad_version, "weights: unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32("tensor count");
    NamedTensors out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = r.u32("name length");
        if (len > r.remaining()) throw WeightsError(WeightsError::Kind::truncated, "weights: truncated tensor name");
        std::string name(len, '\0');
        r.take(name.data(), len, "name");
        const std::uint32_t rank = r.u32("rank");
        if (rank > 8) throw WeightsError(WeightsError::Kind::truncated, "weights: implausible rank for " + name);
        Shape shape(rank);
        for (auto& d : shape) d = r.u32("dims");
        const std::size_t n = shape_numel(shape);
        if (n > r.remaining() / sizeof(float))
            throw WeightsError(WeightsError::Kind::truncated, "weights: truncated values of " + name);
        std::vector<float> vals(n);
        r.take(vals.data(), n * sizeof(float), "values");
        out.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(vals)));
    }
    if (!r.done())
        throw WeightsError(WeightsError::Kind::trailing_data,
                           "weights: " + std::to_string(r.remaining()) + " bytes after the last declared tensor");
    return out;
}

inline void write_weights_file(const std::string& path, const NamedTensors& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw WeightsError(WeightsError::Kind::io, "cannot open " + path + " for writing");
    const std::string buf = encode_weights(tensors);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw WeightsError(WeightsError::Kind::io, "write failed: " + path);
}

inline NamedTensors read_weights_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw WeightsError(WeightsError::Kind::io, "cannot open " + path);
    const std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_weights(data);
}

template <typename T>
NamedTensors model_tensors(const Model<T>& model) {
    NamedTensors out;
    model.visit([&](const std::string& name, const Parameter<T>& p) { out.emplace_back(name, p.value().template cast<float>()); });
    return out;
}

template <typename T>
void save_weights(const Model<T>& model, const std::string& path) {
    write_weights_file(path, model_tensors(model));
}

inline bool has_merged_head(const NamedTensors& tensors) {
    for (const auto& [name, _] : tensors)
        if (name.rfind("merged.", 0) == 0) return true;
    return false;
}

/// Copies tensors into `model` by name. A file with merged-form head tensors
/// switches the model's head to merged form first.
template <typename T>
void load_into(Model<T>& model, const NamedTensors& tensors) {
    if (has_merged_head(tensors) && !model.head().is_merged())
        model.set_head(PredictionHead<T>::merged_skeleton(model.config().head()));
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& [name, t] : tensors) by_name[name] = &t;
    std::size_t used = 0;
    model.visit([&](const std::string& name, Parameter<T>& p) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw WeightsError(WeightsError::Kind::missing_tensor, "weights: missing tensor " + name);
        if (it->second->shape() != p.shape())
            throw WeightsError(WeightsError::Kind::shape_mismatch, "weights: " + name + " has shape " +
                                                                       shape_str(it->second->shape()) + ", model expects " +
                                                                       shape_str(p.shape()));
        p.value() = it->second->template cast<T>();
        ++used;
    });
    if (used != by_name.size())
        for (const auto& [name, _] : by_name) {
            bool known = false;
            model.visit([&](const std::string& n, const Parameter<T>&) { known = known || n == name; });
            if (!known) throw WeightsError(WeightsError::Kind::unknown_tensor, "weights: unexpected tensor " + name);
        }
}

template <typename T>
Model<T> load_weights(const ModelConfig& cfg, const std::string& path) {
    Model<T> m(cfg, 0);
    load_into(m, read_weights_file(path));
    return m;
}

}  // namespace stdtrack
