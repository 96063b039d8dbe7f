#include "biner/model.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace biner {

using ag::Var;
using nlohmann::json;

Arch arch_from_string(const std::string& s) {
    if (s == "bi") return Arch::bi;
    if (s == "uni") return Arch::uni;
    throw ConfigError("unknown arch: " + s);
}

HeadKind head_from_string(const std::string& s) {
    if (s == "span") return HeadKind::span;
    if (s == "token") return HeadKind::token;
    throw ConfigError("unknown head: " + s);
}

const char* to_string(Arch a) { return a == Arch::bi ? "bi" : "uni"; }
const char* to_string(HeadKind h) { return h == HeadKind::span ? "span" : "token"; }

std::string ModelConfig::to_json() const {
    json j;
    j["arch"] = to_string(arch);
    j["head"] = to_string(head);
    j["embed_dim"] = embed_dim;
    j["hidden_dim"] = hidden_dim;
    j["label_dim"] = label_dim;
    j["token_score_dim"] = token_score_dim;
    j["max_span_width"] = max_span_width;
    j["dropout"] = dropout;
    j["hash_buckets"] = hash_buckets;
    j["max_seq_len"] = max_seq_len;
    j["max_types_per_batch"] = max_types_per_batch;
    j["fuser_enabled"] = fuser_enabled;
    j["fuser_heads"] = fuser_heads;
    j["fuser_rounds"] = fuser_rounds;
    j["init_seed"] = init_seed;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
    ModelConfig c;
    if (j.contains("arch")) c.arch = arch_from_string(j["arch"].get<std::string>());
    if (j.contains("head")) c.head = head_from_string(j["head"].get<std::string>());
    auto get_int = [&](const char* k, int& dst) {
        if (j.contains(k)) dst = j[k].get<int>();
    };
    get_int("embed_dim", c.embed_dim);
    get_int("hidden_dim", c.hidden_dim);
    get_int("label_dim", c.label_dim);
    get_int("token_score_dim", c.token_score_dim);
    get_int("max_span_width", c.max_span_width);
    get_int("hash_buckets", c.hash_buckets);
    get_int("max_seq_len", c.max_seq_len);
    get_int("max_types_per_batch", c.max_types_per_batch);
    if (j.contains("dropout")) c.dropout = j["dropout"].get<double>();
    if (j.contains("fuser_enabled")) c.fuser_enabled = j["fuser_enabled"].get<bool>();
    get_int("fuser_heads", c.fuser_heads);
    get_int("fuser_rounds", c.fuser_rounds);
    if (j.contains("init_seed")) c.init_seed = j["init_seed"].get<uint64_t>();
    return c;
}

namespace {

SubwordVocab vocab_from_chunks(const std::vector<std::string>& chunks, int hash_buckets) {
    SubwordVocab v(hash_buckets);
    for (const auto& c : chunks) v.add_chunk(c);
    return v;
}

Model build_model(ModelConfig cfg, SubwordVocab text_vocab, SubwordVocab label_vocab,
                  SubwordVocab joint_vocab) {
    Model m;
    m.config = cfg;
    Rng rng(cfg.init_seed);
    if (cfg.arch == Arch::bi) {
        m.text_encoder = std::make_unique<TextEncoderModel>(
            make_text_encoder(std::move(text_vocab), cfg.embed_dim, cfg.hidden_dim, rng));
        m.text_encoder->dropout = cfg.dropout;
        m.label_encoder = std::make_unique<LabelEncoderModel>(
            make_label_encoder(std::move(label_vocab), cfg.embed_dim, cfg.label_dim, rng));
        m.label_encoder->dropout = cfg.dropout;
        if (cfg.fuser_enabled) {
            m.fuser = std::make_unique<CrossFuserParams>(
                make_cross_fuser(cfg.hidden_dim, cfg.fuser_heads, cfg.fuser_rounds, rng));
            m.fuser_bridge_w =
                ag::param(ag::init_affine(cfg.label_dim, cfg.hidden_dim, rng), "bridge");
            m.fuser_bridge_b = ag::param(Tensor({cfg.hidden_dim}), "bridge");
        }
    } else {
        m.joint_encoder = std::make_unique<JointEncoderModel>(
            make_joint_encoder(std::move(joint_vocab), cfg.embed_dim, cfg.hidden_dim, rng));
        m.joint_encoder->dropout = cfg.dropout;
        m.joint_encoder->max_seq_len = cfg.max_seq_len;
    }
    m.span_head =
        make_span_head(cfg.hidden_dim, cfg.label_space_dim(), cfg.max_span_width, rng);
    if (cfg.head == HeadKind::token) {
        m.token_head = std::make_unique<TokenHeadParams>(make_token_head(
            cfg.hidden_dim, cfg.label_space_dim(), cfg.token_score_dim, rng));
    }
    return m;
}

}  // namespace

Model make_model(const ModelConfig& cfg, const std::vector<AnnotatedDocument>& docs,
                 const std::vector<std::string>& label_texts) {
    SubwordVocab text_vocab(cfg.hash_buckets);
    SubwordVocab label_vocab(cfg.hash_buckets);
    SubwordVocab joint_vocab(cfg.hash_buckets);
    for (const auto& doc : docs)
        for (const auto& tok : doc.tokens) {
            text_vocab.add_word(tok);
            joint_vocab.add_word(tok);
        }
    for (const auto& text : label_texts)
        for (const auto& word : tokenize_whitespace(text)) {
            label_vocab.add_word(word);
            joint_vocab.add_word(word);
        }
    return build_model(cfg, std::move(text_vocab), std::move(label_vocab),
                       std::move(joint_vocab));
}

ag::ParamList Model::named_params() const {
    ag::ParamList out;
    if (text_encoder) {
        out.emplace_back("text_encoder.embedding", text_encoder->embedding);
        collect(out, "text_encoder.mixer", text_encoder->mixer);
    }
    if (label_encoder) {
        out.emplace_back("label_encoder.embedding", label_encoder->embedding);
        collect(out, "label_encoder.mixer", label_encoder->mixer);
        out.emplace_back("label_encoder.pool_w", label_encoder->pool_w);
        out.emplace_back("label_encoder.pool_b", label_encoder->pool_b);
    }
    if (joint_encoder) {
        out.emplace_back("joint_encoder.embedding", joint_encoder->embedding);
        collect(out, "joint_encoder.mixer", joint_encoder->mixer);
    }
    if (fuser) {
        collect(out, "fuser", *fuser);
        out.emplace_back("fuser.bridge_w", fuser_bridge_w);
        out.emplace_back("fuser.bridge_b", fuser_bridge_b);
    }
    collect(out, "span_head", span_head);
    if (token_head) collect(out, "token_head", *token_head);
    return out;
}

std::vector<Var> Model::trainable() const {
    std::vector<Var> out;
    for (auto& [name, var] : named_params()) out.push_back(var);
    return out;
}

bool Model::is_encoder_param(const std::string& name) {
    return name.rfind("text_encoder.", 0) == 0 || name.rfind("label_encoder.", 0) == 0 ||
           name.rfind("joint_encoder.", 0) == 0;
}

uint64_t Model::label_encoder_fingerprint() const {
    if (!label_encoder) throw ModelError("uni-encoder models have no label encoder to cache");
    std::vector<NamedTensor> tensors;
    for (auto& [name, var] : named_params())
        if (name.rfind("label_encoder.", 0) == 0) tensors.push_back({name, var->value});
    uint64_t h = tensors_fingerprint(tensors);
    for (const auto& chunk : label_encoder->vocab.chunk_list())
        h = fnv1a64(chunk.data(), chunk.size(), h);
    return h;
}

namespace {
constexpr char kFooterMagic[6] = {'B', 'N', 'M', 'E', 'T', 'A'};
}

void save_model(const Model& model, const std::string& path) {
    std::vector<NamedTensor> tensors;
    for (auto& [name, var] : model.named_params()) tensors.push_back({name, var->value});

    json meta;
    meta["config"] = json::parse(model.config.to_json());
    if (model.text_encoder) meta["text_chunks"] = model.text_encoder->vocab.chunk_list();
    if (model.label_encoder) meta["label_chunks"] = model.label_encoder->vocab.chunk_list();
    if (model.joint_encoder) meta["joint_chunks"] = model.joint_encoder->vocab.chunk_list();
    const std::string meta_text = meta.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw ModelError("cannot open for writing: " + path);
    write_tensors(os, tensors);
    os.write(kFooterMagic, sizeof(kFooterMagic));
    const uint64_t len = meta_text.size();
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
    if (!os) throw ModelError("write failed: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ModelError("cannot open: " + path);
    std::vector<NamedTensor> tensors = read_tensors(is);

    char magic[6];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kFooterMagic, sizeof(magic)) != 0)
        throw ModelError("model file missing its config footer");
    uint64_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string meta_text(len, '\0');
    is.read(meta_text.data(), static_cast<std::streamsize>(len));
    if (!is) throw ModelError("model file truncated in footer");

    json meta;
    try {
        meta = json::parse(meta_text);
    } catch (const json::exception& e) {
        throw ModelError(std::string("bad model footer: ") + e.what());
    }
    ModelConfig cfg = ModelConfig::from_json(meta["config"].dump());
    auto chunks = [&](const char* key) {
        std::vector<std::string> out;
        if (meta.contains(key)) out = meta[key].get<std::vector<std::string>>();
        return out;
    };
    Model model = build_model(cfg, vocab_from_chunks(chunks("text_chunks"), cfg.hash_buckets),
                              vocab_from_chunks(chunks("label_chunks"), cfg.hash_buckets),
                              vocab_from_chunks(chunks("joint_chunks"), cfg.hash_buckets));

    std::unordered_map<std::string, Tensor*> by_name;
    ag::ParamList params = model.named_params();
    for (auto& [name, var] : params) by_name[name] = &var->value;
    for (auto& nt : tensors) {
        auto it = by_name.find(nt.name);
        if (it == by_name.end()) throw ModelError("checkpoint tensor unknown to model: " + nt.name);
        if (it->second->shape() != nt.tensor.shape())
            throw ModelError("checkpoint shape mismatch for " + nt.name);
        *it->second = std::move(nt.tensor);
        by_name.erase(it);
    }
    if (!by_name.empty())
        throw ModelError("checkpoint missing tensor: " + by_name.begin()->first);
    return model;
}

namespace {

// Shared eval-time encoding: words plus (when not hoisted) the label matrix
// the heads should score against.
struct EncodedDoc {
    Var words;
    Var labels;  // null when the caller scores against hoisted projections
};

EncodedDoc encode_doc_eval(const Model& m, const LabelContext& ctx,
                           const std::vector<std::string>& tokens) {
    EncodedDoc out;
    if (m.config.arch == Arch::uni) {
        EncodedJoint joint = encode_joint(*m.joint_encoder, ctx.types, tokens);
        out.words = joint.words;
        out.labels = joint.label_rows;
        return out;
    }
    EncodedText text = encode_text(*m.text_encoder, tokens);
    out.words = text.words;
    if (!ctx.hoisted) {
        Var e = ag::constant(ctx.embeddings);
        if (m.fuser && m.fuser->enabled) {
            e = ag::affine(e, m.fuser_bridge_w, m.fuser_bridge_b);
            std::vector<uint8_t> text_mask(static_cast<size_t>(out.words->value.dim(0)), 1);
            std::vector<uint8_t> label_mask(static_cast<size_t>(e->value.dim(0)), 1);
            FusedPair fused = cross_fuse(out.words, e, text_mask, label_mask, *m.fuser);
            out.words = fused.words;
            e = fused.labels;
        }
        out.labels = e;
    }
    return out;
}

}  // namespace

LabelContext make_label_context(const Model& model, const EntityTypeSet& types,
                                Tensor label_embeddings) {
    if (model.config.arch == Arch::uni)
        throw ModelError("uni-encoder labels cannot be precomputed");
    LabelContext ctx;
    ctx.types = types;
    ctx.embeddings = std::move(label_embeddings);
    if (model.fuser && model.fuser->enabled) return ctx;  // labels fuse per document

    ag::NoGradGuard ng;
    Var e = ag::constant(ctx.embeddings);
    ctx.span_prompt = ag::two_layer_mlp(e, model.span_head.mlp_prompt)->value;
    if (model.token_head)
        ctx.token_proj =
            ag::affine(e, model.token_head->label_proj_w, model.token_head->label_proj_b)->value;
    ctx.hoisted = true;
    return ctx;
}

LabelContext make_label_context(const Model& model, const EntityTypeSet& types) {
    if (model.config.arch == Arch::uni) {
        LabelContext ctx;
        ctx.types = types;
        return ctx;
    }
    ag::NoGradGuard ng;
    Tensor e = encode_labels(*model.label_encoder, types)->value;
    return make_label_context(model, types, std::move(e));
}

LabelContext make_label_context(const Model& model, const EntityTypeSet& types,
                                const LabelEmbeddingCache& cache, bool encode_misses) {
    const uint64_t expected = model.label_encoder_fingerprint();
    if (cache.fingerprint != expected) {
        std::ostringstream os;
        os << "label cache fingerprint " << std::hex << cache.fingerprint
           << " does not match the serving model " << expected;
        throw ModelError(os.str());
    }
    CacheLookup found = lookup(cache, types);
    if (!found.misses.empty()) {
        if (!encode_misses) {
            std::string list;
            for (const auto& m : found.misses) list += (list.empty() ? "" : ", ") + m;
            throw ModelError("labels missing from cache: " + list);
        }
        ag::NoGradGuard ng;
        for (const auto& miss : found.misses) {
            const int c = types.index_of(miss);
            Var row = encode_labels(*model.label_encoder, EntityTypeSet{{miss}});
            for (int j = 0; j < cache.dim; ++j) found.embeddings.at(c, j) = row->value[j];
        }
    }
    return make_label_context(model, types, std::move(found.embeddings));
}

namespace {

SpanScores span_scores_impl(const Model& m, const LabelContext& ctx,
                            const std::vector<std::string>& tokens) {
    ag::NoGradGuard ng;
    EncodedDoc doc = encode_doc_eval(m, ctx, tokens);
    auto [h_start, h_end] = boundary_project(doc.words, m.span_head);
    SpanCells cells;
    Var reps = span_representations(h_start, h_end, m.span_head, &cells);
    Var logits = ctx.hoisted ? score_spans_projected(reps, ctx.span_prompt)
                             : score_spans(reps, doc.labels, m.span_head);
    return scatter_span_scores(logits->value, cells, ctx.types.size());
}

TokenScores token_scores_impl(const Model& m, const LabelContext& ctx,
                              const std::vector<std::string>& tokens) {
    ag::NoGradGuard ng;
    EncodedDoc doc = encode_doc_eval(m, ctx, tokens);
    TokenChannelVars ch = ctx.hoisted
                              ? score_token_channels_projected(doc.words, ctx.token_proj,
                                                               *m.token_head)
                              : score_token_channels(doc.words, doc.labels, *m.token_head);
    TokenScores out;
    out.length = doc.words->value.dim(0);
    out.num_classes = ctx.types.size();
    out.logits = Tensor({out.length, out.num_classes, 3});
    for (int l = 0; l < out.length; ++l)
        for (int c = 0; c < out.num_classes; ++c) {
            out.logits.at3(l, c, kStart) = ch.start->value.at(l, c);
            out.logits.at3(l, c, kEnd) = ch.end->value.at(l, c);
            out.logits.at3(l, c, kInside) = ch.inside->value.at(l, c);
        }
    return out;
}

}  // namespace

std::vector<ScoredSpan> predict_document(const Model& model, const LabelContext& ctx,
                                         const std::vector<std::string>& tokens, double tau,
                                         OverlapMode mode) {
    if (model.config.head == HeadKind::span) {
        SpanScores scores = span_scores_impl(model, ctx, tokens);
        return greedy_decode(filter_candidates(scores, tau), mode);
    }
    TokenScores scores = token_scores_impl(model, ctx, tokens);
    return greedy_decode(extract_spans_bio(scores, tau), mode);
}

SpanScores span_scores_for_document(const Model& model, const LabelContext& ctx,
                                    const std::vector<std::string>& tokens) {
    return span_scores_impl(model, ctx, tokens);
}

void save_span_scores(const SpanScores& scores, const std::string& path) {
    save_tensors(path, {{"span_logits", scores.logits}});
}

SpanScores load_span_scores(const std::string& path) {
    std::vector<NamedTensor> tensors = load_tensors(path);
    if (tensors.size() != 1 || tensors[0].name != "span_logits" ||
        tensors[0].tensor.rank() != 3)
        throw ModelError("not a span score dump: " + path);
    SpanScores s;
    s.length = tensors[0].tensor.dim(0);
    s.max_width = tensors[0].tensor.dim(1);
    s.num_classes = tensors[0].tensor.dim(2);
    s.logits = std::move(tensors[0].tensor);
    return s;
}

}  // namespace biner
