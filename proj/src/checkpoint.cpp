#include "caee/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "caee/errors.hpp"

namespace caee {

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'A', 'E', 'E', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> bytes;
    if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw DataError("checkpoint truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

void put_string(std::ostream& out, const std::string& s) {
    put_le<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const auto len = get_le<std::uint64_t>(in);
    if (len > (std::uint64_t{1} << 32)) throw DataError("checkpoint string length is implausible");
    std::string s(len, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(len))) throw DataError("checkpoint truncated");
    return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamSet& params, const nlohmann::json& metadata) {
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_string(out, metadata.dump());
    put_le<std::uint64_t>(out, params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& value = params[i].value;
        put_string(out, params.name(i));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(value.rank()));
        for (std::size_t d : value.shape()) put_le<std::uint64_t>(out, d);
        for (double v : value.data()) put_le<double>(out, v);
    }
}

Checkpoint read_checkpoint(std::istream& in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw DataError("not a checkpoint file");
    const auto version = get_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    try {
        ckpt.metadata = nlohmann::json::parse(get_string(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("checkpoint metadata: ") + e.what());
    }
    const auto count = get_le<std::uint64_t>(in);
    for (std::uint64_t n = 0; n < count; ++n) {
        std::string name = get_string(in);
        const auto rank = get_le<std::uint32_t>(in);
        if (rank > 3) throw DataError("checkpoint tensor " + name + " has rank " + std::to_string(rank));
        Shape shape(rank);
        for (auto& d : shape) d = get_le<std::uint64_t>(in);
        std::vector<double> data(shape_size(shape));
        for (auto& v : data) v = get_le<double>(in);
        ckpt.params.add(name, Tensor(std::move(shape), std::move(data)));
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params, const nlohmann::json& metadata) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_checkpoint(out, params, metadata);
    if (!out) throw DataError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return read_checkpoint(in);
}

}  // namespace caee
