#pragma once

#include <string>
#include <vector>

#include "biner/common.hpp"

namespace biner {

struct EntitySpan {
    int start = 0;  // word index, inclusive
    int end = 0;    // word index, inclusive
    std::string type_name;
};

struct AnnotatedDocument {
    std::vector<std::string> tokens;
    std::vector<EntitySpan> entities;
};

/// Ordered list of distinct entity-type description strings.
struct EntityTypeSet {
    std::vector<std::string> labels;

    int size() const { return static_cast<int>(labels.size()); }
    int index_of(const std::string& label) const;  // -1 when absent

    /// Throws on duplicates, empty strings, or an empty/oversized set.
    static EntityTypeSet make(std::vector<std::string> labels, int max_types = 100);
};

/// Word-to-subtoken bookkeeping: every word owns a contiguous run of
/// subtoken indices; first_index[w] selects its first subtoken.
struct SubtokenMap {
    std::vector<std::vector<int>> word_subtokens;
    std::vector<int> first_index;
};

std::vector<std::string> tokenize_whitespace(const std::string& text);

void validate_document(const AnnotatedDocument& doc);

std::vector<AnnotatedDocument> load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const std::vector<AnnotatedDocument>& docs);

struct SynthConfig {
    int vocab_size = 120;
    int num_types = 5;
    int train_docs = 1000;
    int test_docs = 200;
    int max_sentence_len = 18;
};

struct SynthCorpus {
    std::vector<AnnotatedDocument> train;
    std::vector<AnnotatedDocument> test;
    EntityTypeSet types;
};

/// Deterministic pattern corpus. Each type c is realized as a distinct
/// trigger word followed by 1..3 slot words; the test split shares the
/// type inventory but no surface sentence with the train split.
SynthCorpus generate_synthetic(const SynthConfig& config, uint64_t seed);

/// Names for synthetic-label pools ("type 000", ...). Used by the bench
/// workload and by negative-type sampling during training.
std::vector<std::string> synthetic_label_pool(int count);

}  // namespace biner
