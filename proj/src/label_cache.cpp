#include "biner/label_cache.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace biner {

namespace {
constexpr char kMagic[4] = {'B', 'L', 'C', '1'};
constexpr uint32_t kVersion = 1;
}  // namespace

int LabelEmbeddingCache::find(const std::string& label) const {
    auto it = index_.find(label);
    return it == index_.end() ? -1 : it->second;
}

void LabelEmbeddingCache::insert(const std::string& label, const real* vec) {
    if (index_.count(label)) throw DataError("cache already holds label: " + label);
    index_.emplace(label, static_cast<int>(labels.size()));
    labels.push_back(label);
    vectors.insert(vectors.end(), vec, vec + dim);
}

LabelEmbeddingCache build_cache(const LabelEncoderModel& model, uint64_t fingerprint,
                                const std::vector<std::string>& labels, int batch_size,
                                int* duplicate_warnings) {
    if (labels.empty()) throw DataError("build_cache: no labels given");
    if (batch_size < 1) batch_size = 1;

    std::vector<std::string> unique;
    int dups = 0;
    {
        std::unordered_map<std::string, int> seen;
        for (const auto& l : labels) {
            if (seen.emplace(l, 1).second)
                unique.push_back(l);
            else
                ++dups;
        }
    }
    if (duplicate_warnings) *duplicate_warnings = dups;

    LabelEmbeddingCache cache;
    cache.fingerprint = fingerprint;
    cache.dim = model.mixer.proj_w->value.dim(1);
    cache.metadata = "built from " + std::to_string(unique.size()) + " labels";

    ag::NoGradGuard ng;
    // Labels are encoded independently, so the batch split is irrelevant to
    // the values; it only bounds transient memory.
    for (size_t at = 0; at < unique.size(); at += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(unique.size(), at + static_cast<size_t>(batch_size));
        for (size_t i = at; i < end; ++i) {
            EntityTypeSet one{{unique[i]}};
            ag::Var row = encode_labels(model, one);
            cache.insert(unique[i], row->value.data());
        }
    }
    return cache;
}

CacheLookup lookup(const LabelEmbeddingCache& cache, const EntityTypeSet& types) {
    CacheLookup out;
    out.embeddings = Tensor({types.size(), cache.dim});
    for (int c = 0; c < types.size(); ++c) {
        const int idx = cache.find(types.labels[c]);
        if (idx < 0) {
            out.misses.push_back(types.labels[c]);
            continue;
        }
        std::memcpy(&out.embeddings.at(c, 0), cache.row(idx),
                    sizeof(real) * static_cast<size_t>(cache.dim));
    }
    return out;
}

namespace {

template <typename T>
void put(std::string& buf, T v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& buf, size_t& at) {
    if (at + sizeof(T) > buf.size()) throw ModelError("cache file truncated");
    T v;
    std::memcpy(&v, buf.data() + at, sizeof(T));
    at += sizeof(T);
    return v;
}

}  // namespace

void save_cache(const LabelEmbeddingCache& cache, const std::string& path) {
    std::string body;
    put<uint32_t>(body, kVersion);
    put<uint64_t>(body, cache.fingerprint);
    put<uint32_t>(body, static_cast<uint32_t>(cache.dim));
    put<uint64_t>(body, static_cast<uint64_t>(cache.labels.size()));
    put<uint32_t>(body, static_cast<uint32_t>(cache.metadata.size()));
    body.append(cache.metadata);
    for (size_t i = 0; i < cache.labels.size(); ++i) {
        put<uint32_t>(body, static_cast<uint32_t>(cache.labels[i].size()));
        body.append(cache.labels[i]);
        const real* row = cache.vectors.data() + i * static_cast<size_t>(cache.dim);
        for (int j = 0; j < cache.dim; ++j) put<float>(body, static_cast<float>(row[j]));
    }
    const uint64_t checksum = fnv1a64(body.data(), body.size());

    std::ofstream os(path, std::ios::binary);
    if (!os) throw ModelError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    os.write(body.data(), static_cast<std::streamsize>(body.size()));
    os.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
    if (!os) throw ModelError("write failed: " + path);
}

LabelEmbeddingCache load_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ModelError("cannot open: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    const std::string file = ss.str();
    if (file.size() < 4 + sizeof(uint64_t) || std::memcmp(file.data(), kMagic, 4) != 0)
        throw ModelError("not a label cache file (bad magic)");

    const std::string body = file.substr(4, file.size() - 4 - sizeof(uint64_t));
    uint64_t stored_checksum;
    std::memcpy(&stored_checksum, file.data() + file.size() - sizeof(uint64_t),
                sizeof(stored_checksum));
    if (fnv1a64(body.data(), body.size()) != stored_checksum)
        throw ModelError("label cache checksum mismatch (truncated or corrupted file)");

    size_t at = 0;
    const uint32_t version = take<uint32_t>(body, at);
    if (version != kVersion)
        throw ModelError("unsupported cache version " + std::to_string(version));
    LabelEmbeddingCache cache;
    cache.fingerprint = take<uint64_t>(body, at);
    cache.dim = static_cast<int>(take<uint32_t>(body, at));
    const uint64_t count = take<uint64_t>(body, at);
    const uint32_t meta_len = take<uint32_t>(body, at);
    if (at + meta_len > body.size()) throw ModelError("cache file truncated");
    cache.metadata = body.substr(at, meta_len);
    at += meta_len;
    std::vector<real> row(static_cast<size_t>(cache.dim));
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t len = take<uint32_t>(body, at);
        if (at + len > body.size()) throw ModelError("cache file truncated");
        std::string label = body.substr(at, len);
        at += len;
        for (int j = 0; j < cache.dim; ++j) row[static_cast<size_t>(j)] =
            static_cast<real>(take<float>(body, at));
        cache.insert(label, row.data());
    }
    return cache;
}

}  // namespace biner
