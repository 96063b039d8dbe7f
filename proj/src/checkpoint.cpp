#include "biner/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace biner {

namespace {

constexpr char kMagic[4] = {'B', 'N', 'R', 'T'};

template <typename T>
void write_le(std::ostream& os, T v) {
    // Little-endian host assumed (x86/ARM); payload layout is fixed either way.
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ModelError("checkpoint truncated");
    return v;
}

}  // namespace

void write_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors) {
    os.write(kMagic, 4);
    write_le<uint32_t>(os, kCheckpointVersion);
    write_le<uint64_t>(os, tensors.size());
    for (const auto& nt : tensors) {
        write_le<uint32_t>(os, static_cast<uint32_t>(nt.name.size()));
        os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
        write_le<uint32_t>(os, static_cast<uint32_t>(nt.tensor.rank()));
        for (int i = 0; i < nt.tensor.rank(); ++i)
            write_le<uint64_t>(os, static_cast<uint64_t>(nt.tensor.dim(i)));
        for (int i = 0; i < nt.tensor.numel(); ++i)
            write_le<float>(os, static_cast<float>(nt.tensor[i]));
    }
}

std::vector<NamedTensor> read_tensors(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw ModelError("not a tensor checkpoint (bad magic)");
    const uint32_t version = read_le<uint32_t>(is);
    if (version != kCheckpointVersion)
        throw ModelError("unsupported checkpoint version " + std::to_string(version));
    const uint64_t count = read_le<uint64_t>(is);
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (uint64_t t = 0; t < count; ++t) {
        const uint32_t name_len = read_le<uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw ModelError("checkpoint truncated");
        const uint32_t rank = read_le<uint32_t>(is);
        std::vector<int> shape(rank);
        for (uint32_t i = 0; i < rank; ++i)
            shape[i] = static_cast<int>(read_le<uint64_t>(is));
        Tensor tensor(shape);
        for (int i = 0; i < tensor.numel(); ++i) tensor[i] = static_cast<real>(read_le<float>(is));
        out.push_back({std::move(name), std::move(tensor)});
    }
    return out;
}

void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ModelError("cannot open for writing: " + path);
    write_tensors(os, tensors);
    if (!os) throw ModelError("write failed: " + path);
}

std::vector<NamedTensor> load_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ModelError("cannot open: " + path);
    return read_tensors(is);
}

uint64_t tensors_fingerprint(const std::vector<NamedTensor>& tensors) {
    uint64_t h = 1469598103934665603ull;
    for (const auto& nt : tensors) {
        h = fnv1a64(nt.name.data(), nt.name.size(), h);
        for (int i = 0; i < nt.tensor.numel(); ++i) {
            const float f = static_cast<float>(nt.tensor[i]);
            h = fnv1a64(&f, sizeof(f), h);
        }
    }
    return h;
}

}  // namespace biner
