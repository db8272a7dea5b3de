#ifndef DDT_TRAIN_CHECKPOINT_HPP
#define DDT_TRAIN_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddt/model/params.hpp"

namespace ddt {
namespace train {

class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint layout (all integers and reals little-endian):
//   bytes 0..7   magic "DDTCKPT1"
//   u32          format version (1)
//   u64          run-manifest hash
//   u32          epoch the parameters were taken from
//   f64          validation loss at that epoch
//   u32          parameter count
//   per parameter:
//     u32 name length, name bytes
//     u32 rank, u64 dims[rank]
//     f64 values[numel]
inline constexpr char kCheckpointMagic[8] = {'D', 'D', 'T', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw CheckpointError("checkpoint: truncated file");
    return v;
}

} // namespace detail

struct CheckpointMeta {
    std::uint64_t manifest_hash = 0;
    std::uint32_t epoch = 0;
    double val_loss = 0;
};

inline void save_checkpoint(const std::string& path, const model::ParamRegistry& reg,
                            const CheckpointMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
    out.write(kCheckpointMagic, 8);
    detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
    detail::write_pod<std::uint64_t>(out, meta.manifest_hash);
    detail::write_pod<std::uint32_t>(out, meta.epoch);
    detail::write_pod<double>(out, meta.val_loss);
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(reg.entries.size()));
    for (const auto& [name, t] : reg.entries) {
        detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
        for (std::size_t d = 0; d < t->rank(); ++d)
            detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t->dim(d)));
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->numel() * sizeof(double)));
    }
    if (!out) throw CheckpointError("checkpoint: write failed for '" + path + "'");
}

/// Load parameters into a registry with matching names and shapes.
inline CheckpointMeta load_checkpoint(const std::string& path, model::ParamRegistry& reg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw CheckpointError("checkpoint: '" + path + "' is not a DDT checkpoint (bad magic)");
    const auto version = detail::read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    CheckpointMeta meta;
    meta.manifest_hash = detail::read_pod<std::uint64_t>(in);
    meta.epoch = detail::read_pod<std::uint32_t>(in);
    meta.val_loss = detail::read_pod<double>(in);
    const auto count = detail::read_pod<std::uint32_t>(in);
    if (count != reg.entries.size())
        throw CheckpointError("checkpoint: holds " + std::to_string(count) + " parameters, model expects " +
                              std::to_string(reg.entries.size()));
    for (auto& [name, t] : reg.entries) {
        const auto name_len = detail::read_pod<std::uint32_t>(in);
        std::string got(name_len, '\0');
        in.read(got.data(), name_len);
        if (got != name)
            throw CheckpointError("checkpoint: parameter '" + got + "' where '" + name + "' was expected");
        const auto rank = detail::read_pod<std::uint32_t>(in);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(in));
        if (shape != t->shape())
            throw CheckpointError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) +
                                  ", model expects " + shape_str(t->shape()));
        in.read(reinterpret_cast<char*>(t->data()),
                static_cast<std::streamsize>(t->numel() * sizeof(double)));
        if (!in) throw CheckpointError("checkpoint: truncated parameter data for '" + name + "'");
    }
    return meta;
}

} // namespace train
} // namespace ddt

#endif
