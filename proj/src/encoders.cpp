#include "biner/encoders.hpp"

#include <algorithm>

namespace biner {

using ag::Var;

int SubwordVocab::add_chunk(const std::string& chunk) {
    auto it = ids_.find(chunk);
    if (it != ids_.end()) return it->second;
    const int id = kReserved + static_cast<int>(chunks_.size());
    ids_.emplace(chunk, id);
    chunks_.push_back(chunk);
    return id;
}

int SubwordVocab::id_for(const std::string& chunk) const {
    auto it = ids_.find(chunk);
    if (it != ids_.end()) return it->second;
    const uint64_t h = fnv1a64(chunk.data(), chunk.size());
    return kReserved + static_cast<int>(chunks_.size()) +
           static_cast<int>(h % static_cast<uint64_t>(hash_buckets_));
}

void SubwordVocab::add_word(const std::string& word) {
    for (const auto& c : word_chunks(word)) add_chunk(c);
}

std::vector<std::string> SubwordVocab::word_chunks(const std::string& word) {
    // Chunk boundaries respect UTF-8 code points.
    std::vector<std::string> chunks;
    size_t start = 0;
    int cp_in_chunk = 0;
    for (size_t i = 0; i < word.size(); ++i) {
        const bool cp_start = (static_cast<unsigned char>(word[i]) & 0xC0) != 0x80;
        if (cp_start && cp_in_chunk == 6) {
            chunks.push_back(word.substr(start, i - start));
            start = i;
            cp_in_chunk = 0;
        }
        if (cp_start) ++cp_in_chunk;
    }
    if (start < word.size()) chunks.push_back(word.substr(start));
    if (chunks.empty()) chunks.push_back(word);  // degenerate: empty word
    return chunks;
}

MixerParams make_mixer(int in_dim, int out_dim, Rng& rng) {
    MixerParams p;
    p.fwd = ag::make_gru(in_dim, out_dim, rng);
    p.bwd = ag::make_gru(in_dim, out_dim, rng);
    p.proj_w = ag::param(ag::init_affine(2 * out_dim, out_dim, rng), "mixer");
    p.proj_b = ag::param(Tensor({out_dim}), "mixer");
    return p;
}

Var run_mixer(const Var& x, const MixerParams& p) {
    Var fwd = ag::gru(x, p.fwd);
    Var bwd = ag::reverse_rows(ag::gru(ag::reverse_rows(x), p.bwd));
    return ag::affine(ag::concat_cols(fwd, bwd), p.proj_w, p.proj_b);
}

void collect(ag::ParamList& out, const std::string& prefix, const MixerParams& p) {
    ag::collect(out, prefix + ".fwd", p.fwd);
    ag::collect(out, prefix + ".bwd", p.bwd);
    out.emplace_back(prefix + ".proj_w", p.proj_w);
    out.emplace_back(prefix + ".proj_b", p.proj_b);
}

namespace {

// Subtoken ids plus the word->subtoken bookkeeping, with an optional prefix
// offset for sequences that embed words after other symbols.
SubtokenMap map_words(const SubwordVocab& vocab, const std::vector<std::string>& tokens,
                      std::vector<int>& ids) {
    SubtokenMap map;
    map.word_subtokens.reserve(tokens.size());
    map.first_index.reserve(tokens.size());
    for (const auto& word : tokens) {
        std::vector<int> positions;
        for (const auto& chunk : SubwordVocab::word_chunks(word)) {
            positions.push_back(static_cast<int>(ids.size()));
            ids.push_back(vocab.id_for(chunk));
        }
        map.first_index.push_back(positions.front());
        map.word_subtokens.push_back(std::move(positions));
    }
    return map;
}

}  // namespace

TextEncoderModel make_text_encoder(SubwordVocab vocab, int embed_dim, int hidden_dim, Rng& rng) {
    TextEncoderModel m{std::move(vocab), nullptr, {}, 0.35};
    m.embedding = ag::param(ag::init_embedding(m.vocab.rows(), embed_dim, rng), "text_embed");
    m.mixer = make_mixer(embed_dim, hidden_dim, rng);
    return m;
}

EncodedText encode_text(const TextEncoderModel& model, const std::vector<std::string>& tokens,
                        const RunState& rs) {
    if (tokens.empty()) throw DataError("encode_text: empty token list");
    std::vector<int> ids;
    SubtokenMap map = map_words(model.vocab, tokens, ids);
    Var x = ag::gather_rows(model.embedding, ids);
    Var h = run_mixer(x, model.mixer);
    if (rs.training && rs.rng && model.dropout > 0.0) h = ag::dropout(h, model.dropout, *rs.rng);
    Var w = ag::gather_rows(h, map.first_index);
    return {w, std::move(map)};
}

LabelEncoderModel make_label_encoder(SubwordVocab vocab, int embed_dim, int label_dim, Rng& rng) {
    LabelEncoderModel m{std::move(vocab), nullptr, {}, nullptr, nullptr, 0.35};
    m.embedding = ag::param(ag::init_embedding(m.vocab.rows(), embed_dim, rng), "label_embed");
    m.mixer = make_mixer(embed_dim, label_dim, rng);
    m.pool_w = ag::param(ag::init_affine(label_dim, label_dim, rng), "label_pool");
    m.pool_b = ag::param(Tensor({label_dim}), "label_pool");
    return m;
}

ag::Var encode_labels(const LabelEncoderModel& model, const EntityTypeSet& types,
                      const RunState& rs) {
    if (types.labels.empty()) throw DataError("encode_labels: empty type set");
    std::vector<Var> rows;
    rows.reserve(types.labels.size());
    for (const auto& label : types.labels) {
        std::vector<std::string> words = tokenize_whitespace(label);
        if (words.empty()) throw DataError("encode_labels: blank label");
        std::vector<int> ids;
        SubtokenMap map = map_words(model.vocab, words, ids);
        Var x = ag::gather_rows(model.embedding, ids);
        Var h = run_mixer(x, model.mixer);
        if (rs.training && model.dropout > 0.0) {
            Rng label_rng(fnv1a64(label.data(), label.size()) ^ rs.label_seed);
            h = ag::dropout(h, model.dropout, label_rng);
        }
        Var word_states = ag::gather_rows(h, map.first_index);
        // Mean of the label's word states, then the pooling projection.
        Tensor avg({1, static_cast<int>(words.size())},
                   real(1) / static_cast<real>(words.size()));
        Var pooled = ag::matmul(ag::constant(std::move(avg)), false, word_states, false);
        rows.push_back(ag::affine(pooled, model.pool_w, model.pool_b));
    }
    return rows.size() == 1 ? rows[0] : ag::concat_rows(rows);
}

JointEncoderModel make_joint_encoder(SubwordVocab vocab, int embed_dim, int hidden_dim,
                                     Rng& rng) {
    JointEncoderModel m{std::move(vocab), nullptr, {}, 0.35, 4096};
    m.embedding = ag::param(ag::init_embedding(m.vocab.rows(), embed_dim, rng), "joint_embed");
    m.mixer = make_mixer(embed_dim, hidden_dim, rng);
    return m;
}

EncodedJoint encode_joint(const JointEncoderModel& model, const EntityTypeSet& types,
                          const std::vector<std::string>& tokens, const RunState& rs) {
    if (types.labels.empty()) throw DataError("encode_joint: empty type set");
    if (tokens.empty()) throw DataError("encode_joint: empty token list");

    // [ENT] t_1 [ENT] t_2 ... [SEP] w_1 ... w_L
    std::vector<int> ids;
    std::vector<int> ent_positions;
    for (const auto& label : types.labels) {
        ent_positions.push_back(static_cast<int>(ids.size()));
        ids.push_back(SubwordVocab::kEntId);
        for (const auto& word : tokenize_whitespace(label))
            for (const auto& chunk : SubwordVocab::word_chunks(word))
                ids.push_back(model.vocab.id_for(chunk));
    }
    ids.push_back(SubwordVocab::kSepId);

    SubtokenMap map;
    for (const auto& word : tokens) {
        std::vector<int> positions;
        for (const auto& chunk : SubwordVocab::word_chunks(word)) {
            positions.push_back(static_cast<int>(ids.size()));
            ids.push_back(model.vocab.id_for(chunk));
        }
        map.first_index.push_back(positions.front());
        map.word_subtokens.push_back(std::move(positions));
    }

    if (static_cast<int>(ids.size()) > model.max_seq_len)
        throw DataError("joint sequence of " + std::to_string(ids.size()) +
                        " subtokens exceeds the maximum of " +
                        std::to_string(model.max_seq_len));

    Var x = ag::gather_rows(model.embedding, ids);
    Var h = run_mixer(x, model.mixer);
    if (rs.training && rs.rng && model.dropout > 0.0) h = ag::dropout(h, model.dropout, *rs.rng);

    EncodedJoint out;
    out.label_rows = ag::gather_rows(h, ent_positions);
    out.words = ag::gather_rows(h, map.first_index);
    out.map = std::move(map);
    out.sequence_len = static_cast<int>(ids.size());
    return out;
}

Tensor expand_labels(const Tensor& e, int batch) {
    if (e.rank() != 2) throw ShapeError("expand_labels: expects [C,D]");
    if (batch < 1) throw ShapeError("expand_labels: batch must be >= 1");
    const int c = e.dim(0);
    const int d = e.dim(1);
    Tensor out({batch, c, d});
    for (int b = 0; b < batch; ++b)
        std::copy(e.data(), e.data() + static_cast<size_t>(c) * d,
                  out.data() + static_cast<size_t>(b) * c * d);
    return out;
}

CrossFuserParams make_cross_fuser(int dim, int heads, int rounds, Rng& rng) {
    CrossFuserParams p;
    p.enabled = true;
    p.heads = heads;
    p.rounds = rounds;
    p.text_to_label = ag::make_attn(dim, rng);
    p.label_to_text = ag::make_attn(dim, rng);
    return p;
}

void collect(ag::ParamList& out, const std::string& prefix, const CrossFuserParams& p) {
    ag::collect(out, prefix + ".t2l", p.text_to_label);
    ag::collect(out, prefix + ".l2t", p.label_to_text);
}

FusedPair cross_fuse(const ag::Var& words, const ag::Var& labels,
                     const std::vector<uint8_t>& text_mask,
                     const std::vector<uint8_t>& label_mask, const CrossFuserParams& params) {
    if (!params.enabled) return {words, labels};
    const int lw = words->value.dim(0);
    const int lc = labels->value.dim(0);
    if (words->value.dim(1) != labels->value.dim(1))
        throw ShapeError("cross_fuse: words and labels must share a dimension");
    if (static_cast<int>(text_mask.size()) != lw || static_cast<int>(label_mask.size()) != lc)
        throw ShapeError("cross_fuse: mask lengths must match inputs");

    // Query row i may attend to key j iff the key is valid.
    auto key_mask = [](int rows, const std::vector<uint8_t>& keys) {
        std::vector<uint8_t> m(static_cast<size_t>(rows) * keys.size());
        for (int i = 0; i < rows; ++i)
            for (size_t j = 0; j < keys.size(); ++j)
                m[static_cast<size_t>(i) * keys.size() + j] = keys[j];
        return m;
    };

    Var w = words;
    Var e = labels;
    const std::vector<uint8_t> w_over_e = key_mask(lw, label_mask);
    const std::vector<uint8_t> e_over_w = key_mask(lc, text_mask);
    for (int r = 0; r < params.rounds; ++r) {
        w = ag::add(w, ag::multi_head_attention(w, e, e, w_over_e, params.heads,
                                                params.text_to_label));
        e = ag::add(e, ag::multi_head_attention(e, w, w, e_over_w, params.heads,
                                                params.label_to_text));
    }
    return {w, e};
}

}  // namespace biner
