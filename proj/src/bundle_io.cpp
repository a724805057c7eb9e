#include "fbmseg/bundle_io.hpp"

#include "fbmseg/error.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>

namespace fbmseg::bundle_io {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::string take(std::size_t n) {
        if (n > bytes_.size() - pos_) {
            throw FormatError("model file truncated");
        }
        std::string out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint32_t u32() {
        const auto s = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
        }
        return v;
    }

    std::uint64_t u64() {
        const auto s = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) {
            v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
        }
        return v;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::string encode_floats(std::span<const float> values) {
    std::string out;
    out.reserve(values.size() * 4);
    for (float f : values) {
        put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

std::vector<float> decode_floats(const std::string& bytes) {
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t v = 0;
        for (int b = 3; b >= 0; --b) {
            v = (v << 8) | static_cast<unsigned char>(bytes[4 * i + static_cast<std::size_t>(b)]);
        }
        out[i] = std::bit_cast<float>(v);
    }
    return out;
}

void put_block(std::string& out, const std::string& name, std::span<const float> values) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u64(out, values.size());
    const auto data = encode_floats(values);
    out += data;
    put_u32(out, crc32_of(data));
}

std::vector<float> get_block(Reader& in, const std::string& expected_name, std::size_t expected_size) {
    const std::string name = in.take(in.u32());
    if (name != expected_name) {
        throw FormatError("unexpected weight block '" + name + "', wanted '" + expected_name + "'");
    }
    const std::uint64_t count = in.u64();
    if (count != expected_size) {
        throw FormatError("weight block '" + name + "' has " + std::to_string(count) + " values, expected " +
                          std::to_string(expected_size));
    }
    const std::string data = in.take(static_cast<std::size_t>(count) * 4);
    if (in.u32() != crc32_of(data)) {
        throw FormatError("checksum mismatch in weight block '" + name + "'");
    }
    return decode_floats(data);
}

} // namespace

std::uint32_t crc32_of(const std::string& bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

std::string serialize_bundle(const estimators::RegressorBundle& bundle) {
    nlohmann::json meta = bundle.metadata();
    meta["alpha_net"] = bundle.alpha_net().config().to_json();
    meta["k_net"] = bundle.k_net().config().to_json();
    if (meta.contains("training") && !meta.contains("training_config_hash")) {
        meta["training_config_hash"] = crc32_of(meta["training"].dump());
    }
    const std::string meta_text = meta.dump();

    std::string out(kMagic, sizeof(kMagic));
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
    out += meta_text;
    put_u32(out, crc32_of(meta_text));
    put_u32(out, 2);
    put_block(out, "alpha", bundle.alpha_net().params().values());
    put_block(out, "k", bundle.k_net().params().values());
    return out;
}

estimators::RegressorBundle deserialize_bundle(const std::string& bytes) {
    Reader in(bytes);
    if (in.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
        throw FormatError("not a model file (bad magic)");
    }
    const std::uint32_t version = in.u32();
    if (version != kFormatVersion) {
        throw FormatError("unsupported model format version " + std::to_string(version) + " (this build reads " +
                          std::to_string(kFormatVersion) + ")");
    }
    const std::string meta_text = in.take(in.u32());
    if (in.u32() != crc32_of(meta_text)) {
        throw FormatError("checksum mismatch in model metadata");
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model metadata is not valid JSON: ") + e.what());
    }
    if (in.u32() != 2) {
        throw FormatError("model file must contain exactly two weight blocks");
    }
    models::AlphaNet<float> alpha(models::AlphaNetConfig::from_json(meta.at("alpha_net")));
    models::KNet<float> k(models::KNetConfig::from_json(meta.at("k_net")));
    const auto alpha_values = get_block(in, "alpha", alpha.params().size());
    alpha.params().values().assign(alpha_values.begin(), alpha_values.end());
    const auto k_values = get_block(in, "k", k.params().size());
    k.params().values().assign(k_values.begin(), k_values.end());
    if (!in.done()) {
        throw FormatError("trailing bytes after weight blocks");
    }
    return estimators::RegressorBundle(std::move(alpha), std::move(k), std::move(meta));
}

void save_bundle(const estimators::RegressorBundle& bundle, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open '" + path + "' for writing");
    }
    const auto bytes = serialize_bundle(bundle);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw DataError("failed writing model file '" + path + "'");
    }
}

estimators::RegressorBundle load_bundle(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open model file '" + path + "'");
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_bundle(bytes);
}

} // namespace fbmseg::bundle_io
