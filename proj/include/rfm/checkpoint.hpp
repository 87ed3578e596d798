#pragma once

// Binary checkpoint, little-endian:
//   "RFMC" | u32 version | u32 d | u32 width | u32 layers | u32 time_embed_dim
//   | u32 num_classes | u64 seed | u64 count | count x f64 params

#include "rfm/net.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace rfm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_le(std::string& out, T value)
{
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos)
{
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    if (pos + sizeof(U) > in.size()) throw ConfigError("checkpoint: truncated file");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bits |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    }
    pos += sizeof(U);
    return std::bit_cast<T>(bits);
}

}  // namespace detail

inline std::string encode_checkpoint(const VelocityNet& net)
{
    const NetConfig& c = net.config();
    std::string out = "RFMC";
    detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.input_dim));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.hidden_width));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.num_layers));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.time_embed_dim));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.num_classes));
    detail::put_le<std::uint64_t>(out, c.seed);
    detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(net.num_params()));
    for (Eigen::Index i = 0; i < net.params().size(); ++i) detail::put_le<double>(out, net.params()(i));
    return out;
}

inline VelocityNet decode_checkpoint(const std::string& bytes)
{
    if (bytes.size() < 4 || bytes.compare(0, 4, "RFMC") != 0) throw ConfigError("checkpoint: bad magic");
    std::size_t pos = 4;
    const auto version = detail::get_le<std::uint32_t>(bytes, pos);
    if (version != kCheckpointVersion) {
        throw ConfigError("checkpoint: unsupported format version " + std::to_string(version));
    }
    NetConfig c;
    c.input_dim = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
    c.hidden_width = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
    c.num_layers = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
    c.time_embed_dim = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
    c.num_classes = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos));
    c.seed = detail::get_le<std::uint64_t>(bytes, pos);
    c.validate();
    const auto count = detail::get_le<std::uint64_t>(bytes, pos);
    if (count != param_count(c)) throw ConfigError("checkpoint: parameter count does not match config");
    if (bytes.size() - pos != count * 8) throw ConfigError("checkpoint: payload size mismatch");
    Vec params(static_cast<Eigen::Index>(count));
    for (Eigen::Index i = 0; i < params.size(); ++i) params(i) = detail::get_le<double>(bytes, pos);
    return VelocityNet(c, std::move(params));
}

inline void write_checkpoint(const std::string& path, const VelocityNet& net)
{
    const std::string bytes = encode_checkpoint(net);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("cannot write checkpoint " + path);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw ConfigError("cannot write checkpoint " + path);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ConfigError("cannot move checkpoint into " + path);
}

inline VelocityNet read_checkpoint(const std::string& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open checkpoint " + path);
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace rfm
