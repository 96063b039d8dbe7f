#pragma once

#include <unordered_map>

#include "biner/autograd.hpp"
#include "biner/corpus.hpp"

namespace biner {

/// Toy subword scheme: words are split into chunks of at most six code
/// points; chunks outside the known vocabulary hash into a fixed bucket
/// region of the same embedding table. Ids 0/1 are reserved for the joint
/// encoder's ENT and SEP symbols so they can never collide with chunks.
class SubwordVocab {
public:
    static constexpr int kEntId = 0;
    static constexpr int kSepId = 1;
    static constexpr int kReserved = 2;

    explicit SubwordVocab(int hash_buckets = 512) : hash_buckets_(hash_buckets) {}

    int add_chunk(const std::string& chunk);  // id for a known chunk, inserting
    int id_for(const std::string& chunk) const;
    void add_word(const std::string& word);

    int rows() const { return kReserved + static_cast<int>(chunks_.size()) + hash_buckets_; }
    int known_chunks() const { return static_cast<int>(chunks_.size()); }
    int hash_buckets() const { return hash_buckets_; }
    const std::vector<std::string>& chunk_list() const { return chunks_; }

    static std::vector<std::string> word_chunks(const std::string& word);

private:
    std::unordered_map<std::string, int> ids_;
    std::vector<std::string> chunks_;
    int hash_buckets_;
};

struct RunState {
    bool training = false;
    Rng* rng = nullptr;
    /// Base seed for per-label dropout streams; keyed by label content so
    /// the draws do not depend on the order labels arrive in.
    uint64_t label_seed = 0;
};

/// biGRU over the rows of x followed by a projection of the concatenated
/// directions — the recurrent mixer every encoder uses.
struct MixerParams {
    ag::GruParams fwd, bwd;
    ag::Var proj_w, proj_b;  // [2*hidden, out_dim]
};

MixerParams make_mixer(int in_dim, int out_dim, Rng& rng);
ag::Var run_mixer(const ag::Var& x, const MixerParams& p);
void collect(ag::ParamList& out, const std::string& prefix, const MixerParams& p);

struct TextEncoderModel {
    SubwordVocab vocab;
    ag::Var embedding;  // [vocab rows, embed_dim]
    MixerParams mixer;  // embed_dim -> hidden_dim
    double dropout = 0.35;
};

TextEncoderModel make_text_encoder(SubwordVocab vocab, int embed_dim, int hidden_dim, Rng& rng);

struct EncodedText {
    ag::Var words;  // [L, D]
    SubtokenMap map;
};

EncodedText encode_text(const TextEncoderModel& model, const std::vector<std::string>& tokens,
                        const RunState& rs = {});

struct LabelEncoderModel {
    SubwordVocab vocab;
    ag::Var embedding;
    MixerParams mixer;          // embed_dim -> label_dim
    ag::Var pool_w, pool_b;     // [label_dim, label_dim], applied after mean pooling
    double dropout = 0.35;
};

LabelEncoderModel make_label_encoder(SubwordVocab vocab, int embed_dim, int label_dim, Rng& rng);

/// One row per label. Row c depends on labels[c] alone; labels are encoded
/// independently, which is what makes caching sound.
ag::Var encode_labels(const LabelEncoderModel& model, const EntityTypeSet& types,
                      const RunState& rs = {});

struct JointEncoderModel {
    SubwordVocab vocab;
    ag::Var embedding;
    MixerParams mixer;  // embed_dim -> hidden_dim
    double dropout = 0.35;
    int max_seq_len = 4096;
};

JointEncoderModel make_joint_encoder(SubwordVocab vocab, int embed_dim, int hidden_dim, Rng& rng);

struct EncodedJoint {
    ag::Var label_rows;  // [C, D] taken at ENT positions
    ag::Var words;       // [L, D] taken at first-subtoken positions
    SubtokenMap map;
    int sequence_len = 0;
};

EncodedJoint encode_joint(const JointEncoderModel& model, const EntityTypeSet& types,
                          const std::vector<std::string>& tokens, const RunState& rs = {});

/// [C,D] -> [B,C,D]; every batch slice is a copy of E.
Tensor expand_labels(const Tensor& e, int batch);

struct CrossFuserParams {
    bool enabled = false;
    int heads = 4;
    int rounds = 1;
    ag::AttnParams text_to_label;  // text queries attend over labels
    ag::AttnParams label_to_text;
};

CrossFuserParams make_cross_fuser(int dim, int heads, int rounds, Rng& rng);
void collect(ag::ParamList& out, const std::string& prefix, const CrossFuserParams& p);

struct FusedPair {
    ag::Var words;
    ag::Var labels;
};

/// One round: text attends to labels, then labels attend to the updated
/// text, each with a residual connection. Disabled fuser returns the inputs
/// untouched. Requires both sides to share one dimension.
FusedPair cross_fuse(const ag::Var& words, const ag::Var& labels,
                     const std::vector<uint8_t>& text_mask,
                     const std::vector<uint8_t>& label_mask, const CrossFuserParams& params);

}  // namespace biner
