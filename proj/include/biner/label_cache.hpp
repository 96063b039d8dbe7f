#pragma once

#include <unordered_map>

#include "biner/corpus.hpp"
#include "biner/encoders.hpp"

namespace biner {

/// Precomputed label-encoder outputs keyed by label string. The fingerprint
/// binds the cache to the exact label encoder that produced it; lookups
/// against a different model are refused.
struct LabelEmbeddingCache {
    uint64_t fingerprint = 0;
    int dim = 0;
    std::vector<std::string> labels;  // insertion order
    std::vector<real> vectors;        // labels.size() x dim, row-major
    std::string metadata;             // free-form creation info

    int size() const { return static_cast<int>(labels.size()); }
    int find(const std::string& label) const;
    const real* row(int idx) const { return vectors.data() + static_cast<size_t>(idx) * dim; }

    void insert(const std::string& label, const real* vec);

private:
    std::unordered_map<std::string, int> index_;
};

/// Encode every label in eval mode (batching cannot change per-label
/// results; batch_size only sizes the work chunks). Duplicates collapse
/// with a warning count.
LabelEmbeddingCache build_cache(const LabelEncoderModel& model, uint64_t fingerprint,
                                const std::vector<std::string>& labels, int batch_size,
                                int* duplicate_warnings = nullptr);

struct CacheLookup {
    Tensor embeddings;  // [C, dim]; rows for misses are zero
    std::vector<std::string> misses;
};

/// Rows in EntityTypeSet order. Fingerprint checking is the caller's duty
/// (it owns the serving model).
CacheLookup lookup(const LabelEmbeddingCache& cache, const EntityTypeSet& types);

/// Binary format: magic, version, fingerprint, dim, count, metadata, then
/// per entry the label bytes and a float32 vector, then an FNV checksum of
/// everything between the magic and the checksum itself.
void save_cache(const LabelEmbeddingCache& cache, const std::string& path);
LabelEmbeddingCache load_cache(const std::string& path);

}  // namespace biner
