// SPDX-License-Identifier: Apache-2.0

#include "adaptqa/container.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "adaptqa/errors.h"
#include "adaptqa/hashing.h"

namespace adaptqa {

namespace {

constexpr char kMagic[4] = {'A', 'Q', 'P', 'C'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T get_le(const char* what) {
        need(sizeof(T), what);
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            value |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += sizeof(T);
        return value;
    }

    std::string get_string(std::size_t len, const char* what) {
        need(len, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
        pos_ += len;
        return s;
    }

    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw ParseError("parameter container truncated while reading " + std::string(what) +
                             " at byte " + std::to_string(pos_));
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void append_entry(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& tensor) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(kDtypeFloat64);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t extent : tensor.shape()) put_le<std::uint64_t>(out, extent);
    for (double v : tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

}  // namespace

std::vector<std::uint8_t> serialize_entry(const std::string& name, const Tensor& tensor) {
    std::vector<std::uint8_t> out;
    append_entry(out, name, tensor);
    return out;
}

std::vector<std::uint8_t> serialize_params(const ParamStore& store) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_le<std::uint32_t>(out, kContainerFormatVersion);
    put_le<std::uint64_t>(out, store.size());
    for (const auto& [name, tensor] : store.entries()) append_entry(out, name, tensor);
    return out;
}

ParamStore deserialize_params(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const std::string magic = r.get_string(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw ParseError("not a parameter container (bad magic)");
    }
    const auto version = r.get_le<std::uint32_t>("format_version");
    if (version != kContainerFormatVersion) {
        throw ParseError("unsupported parameter container version " + std::to_string(version));
    }
    const auto count = r.get_le<std::uint64_t>("entry_count");
    ParamStore store;
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto name_len = r.get_le<std::uint32_t>("name length");
        std::string name = r.get_string(name_len, "name");
        const auto dtype = r.get_le<std::uint8_t>("dtype");
        if (dtype != kDtypeFloat64) {
            throw ParseError("entry '" + name + "' has unsupported dtype code " + std::to_string(dtype));
        }
        const auto rank = r.get_le<std::uint32_t>("rank");
        Shape shape;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const auto extent = r.get_le<std::uint64_t>("extent");
            if (extent == 0 || extent > (std::uint64_t{1} << 32)) {
                throw ParseError("entry '" + name + "' has invalid extent " + std::to_string(extent));
            }
            shape.push_back(static_cast<std::size_t>(extent));
            numel *= static_cast<std::size_t>(extent);
        }
        std::vector<double> data(numel);
        for (double& v : data) v = std::bit_cast<double>(r.get_le<std::uint64_t>("payload"));
        store.add(name, Tensor::from_data(std::move(shape), std::move(data)));
    }
    if (!r.at_end()) {
        throw ParseError("trailing bytes after " + std::to_string(count) + " entries at byte " +
                         std::to_string(r.pos()));
    }
    return store;
}

void save_params(const std::filesystem::path& path, const ParamStore& store) {
    const auto bytes = serialize_params(store);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to '" + path.string() + "'");
}

ParamStore load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_params(bytes);
}

std::string entry_hash(const std::string& name, const Tensor& tensor) {
    return sha256_hex(serialize_entry(name, tensor));
}

std::map<std::string, std::string> entry_hashes(const ParamStore& store, const std::vector<std::string>& names) {
    std::map<std::string, std::string> out;
    for (const auto& n : names) out.emplace(n, entry_hash(n, store.get(n)));
    return out;
}

std::string params_hash(const ParamStore& store) { return sha256_hex(serialize_params(store)); }

}  // namespace adaptqa
