#pragma once

#include "biner/decoder.hpp"

namespace biner {

/// Biaffine-style token scorer: words are projected to three channel
/// vectors, labels to one, and each (word, label, channel) logit is their
/// dot product.
struct TokenHeadParams {
    ag::Var word_proj_w, word_proj_b;    // [D, 3*Dp]
    ag::Var label_proj_w, label_proj_b;  // [D_label, Dp]
    int score_dim = 0;                   // Dp
};

TokenHeadParams make_token_head(int hidden_dim, int label_dim, int score_dim, Rng& rng);
void collect(ag::ParamList& out, const std::string& prefix, const TokenHeadParams& p);

/// Channel order is part of the wire contract: [start, end, inside].
enum TokenChannel { kStart = 0, kEnd = 1, kInside = 2 };

struct TokenScores {
    int length = 0;
    int num_classes = 0;
    Tensor logits;  // [L, C, 3]
};

/// The three channel logit matrices, each [L, C], kept separate so the
/// training graph can stack them without re-slicing.
struct TokenChannelVars {
    ag::Var start, end, inside;
};

TokenChannelVars score_token_channels(const ag::Var& words, const ag::Var& label_embeddings,
                                      const TokenHeadParams& p);
/// Same with an already-projected label matrix [C, Dp] (inference hoist).
TokenChannelVars score_token_channels_projected(const ag::Var& words,
                                                const Tensor& projected_labels,
                                                const TokenHeadParams& p);

TokenScores score_tokens(const ag::Var& words, const ag::Var& label_embeddings,
                         const TokenHeadParams& p);

/// Threshold extraction: for each class, start positions with P>tau pair
/// with end positions j>=i of the same class, accepted iff every position
/// in [i,j] has P(inside)>tau. A span's probability is the minimum of the
/// start, end and inside probabilities involved.
std::vector<ScoredSpan> extract_spans_bio(const TokenScores& scores, double tau);

/// Binary targets [L,C,3]: a gold span (s,e,c) sets start at s, end at e
/// and inside over the whole interval. No width limit.
Tensor token_targets(const AnnotatedDocument& doc, const EntityTypeSet& types,
                     bool strict_types = true);

/// Span representation at arbitrary width, sharing the span head's boundary
/// and output MLPs: rep(i,j) = MLP_out(ReLU([MLP_start(W_i) || MLP_end(W_j)])).
ag::Var span_rep_for(const ag::Var& words, int i, int j, const SpanHeadParams& p);

}  // namespace biner
