#pragma once

#include <memory>

#include "biner/checkpoint.hpp"
#include "biner/decoder.hpp"
#include "biner/label_cache.hpp"
#include "biner/span_head.hpp"
#include "biner/token_head.hpp"

namespace biner {

enum class Arch { bi, uni };
enum class HeadKind { span, token };

Arch arch_from_string(const std::string& s);
HeadKind head_from_string(const std::string& s);
const char* to_string(Arch a);
const char* to_string(HeadKind h);

struct ModelConfig {
    Arch arch = Arch::bi;
    HeadKind head = HeadKind::span;
    int embed_dim = 32;
    int hidden_dim = 64;  // D
    int label_dim = 64;   // D_label; ignored by the uni arch (labels live at D)
    int token_score_dim = 0;  // 0 -> hidden_dim
    int max_span_width = 12;  // K
    double dropout = 0.35;
    int hash_buckets = 256;
    int max_seq_len = 4096;  // joint-encoder subtoken budget
    int max_types_per_batch = 100;
    bool fuser_enabled = false;
    int fuser_heads = 4;
    int fuser_rounds = 1;
    uint64_t init_seed = 7;

    /// Dimension the heads see on the label side: fused or joint labels
    /// live at hidden_dim, independent bi labels at label_dim.
    int label_space_dim() const {
        return (arch == Arch::uni || fuser_enabled) ? hidden_dim : label_dim;
    }

    std::string to_json() const;
    static ModelConfig from_json(const std::string& json_text);
};

struct Model {
    ModelConfig config;

    // bi-encoder components
    std::unique_ptr<TextEncoderModel> text_encoder;
    std::unique_ptr<LabelEncoderModel> label_encoder;
    std::unique_ptr<CrossFuserParams> fuser;
    ag::Var fuser_bridge_w, fuser_bridge_b;  // label_dim -> hidden_dim, fuser only

    // uni-encoder component
    std::unique_ptr<JointEncoderModel> joint_encoder;

    SpanHeadParams span_head;
    std::unique_ptr<TokenHeadParams> token_head;

    ag::ParamList named_params() const;
    std::vector<ag::Var> trainable() const;
    /// Whether the named parameter belongs to the encoder learning-rate
    /// group (text, label and joint encoders; heads and fuser are "other").
    static bool is_encoder_param(const std::string& name);

    /// Hash of the label encoder weights and its vocabulary; binds caches
    /// to the model that built them.
    uint64_t label_encoder_fingerprint() const;
};

Model make_model(const ModelConfig& cfg, const std::vector<AnnotatedDocument>& docs,
                 const std::vector<std::string>& label_texts);

/// Checkpoint = the named-tensor container followed by a JSON footer
/// carrying the config and subword vocabularies.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

/// Per-label-set precomputation for inference. For the plain bi-encoder the
/// head-side label projections depend only on the label set, so they are
/// hoisted here and shared across documents; with the fuser on (or the uni
/// arch) labels depend on each document and no hoisting happens.
struct LabelContext {
    EntityTypeSet types;
    Tensor embeddings;   // [C, label_dim] raw label-encoder outputs (bi only)
    Tensor span_prompt;  // MLP_prompt(E), [C, hidden_dim]
    Tensor token_proj;   // token-head label projection, [C, score_dim]
    bool hoisted = false;
};

LabelContext make_label_context(const Model& model, const EntityTypeSet& types);
LabelContext make_label_context(const Model& model, const EntityTypeSet& types,
                                Tensor label_embeddings);
/// Cache-backed context; refuses a fingerprint mismatch and, unless
/// encode_misses is set, any label absent from the cache.
LabelContext make_label_context(const Model& model, const EntityTypeSet& types,
                                const LabelEmbeddingCache& cache, bool encode_misses = false);

std::vector<ScoredSpan> predict_document(const Model& model, const LabelContext& ctx,
                                         const std::vector<std::string>& tokens, double tau,
                                         OverlapMode mode);

/// Dense span logits for one document (decoder fuzzing, score dumps).
SpanScores span_scores_for_document(const Model& model, const LabelContext& ctx,
                                    const std::vector<std::string>& tokens);

void save_span_scores(const SpanScores& scores, const std::string& path);
SpanScores load_span_scores(const std::string& path);

}  // namespace biner
