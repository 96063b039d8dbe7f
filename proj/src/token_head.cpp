#include "biner/token_head.hpp"

#include <cmath>

namespace biner {

using ag::Var;

TokenHeadParams make_token_head(int hidden_dim, int label_dim, int score_dim, Rng& rng) {
    if (score_dim <= 0) score_dim = hidden_dim;
    TokenHeadParams p;
    p.word_proj_w = ag::param(ag::init_affine(hidden_dim, 3 * score_dim, rng), "token_word");
    p.word_proj_b = ag::param(Tensor({3 * score_dim}), "token_word");
    p.label_proj_w = ag::param(ag::init_affine(label_dim, score_dim, rng), "token_label");
    p.label_proj_b = ag::param(Tensor({score_dim}), "token_label");
    p.score_dim = score_dim;
    return p;
}

void collect(ag::ParamList& out, const std::string& prefix, const TokenHeadParams& p) {
    out.emplace_back(prefix + ".word_w", p.word_proj_w);
    out.emplace_back(prefix + ".word_b", p.word_proj_b);
    out.emplace_back(prefix + ".label_w", p.label_proj_w);
    out.emplace_back(prefix + ".label_b", p.label_proj_b);
}

namespace {

TokenChannelVars channels_from(const Var& words_proj, const Var& labels_proj, int score_dim) {
    TokenChannelVars ch;
    ch.start = ag::matmul(ag::slice_cols(words_proj, 0, score_dim), false, labels_proj, true);
    ch.end = ag::matmul(ag::slice_cols(words_proj, score_dim, score_dim), false, labels_proj,
                        true);
    ch.inside = ag::matmul(ag::slice_cols(words_proj, 2 * score_dim, score_dim), false,
                           labels_proj, true);
    return ch;
}

}  // namespace

TokenChannelVars score_token_channels(const Var& words, const Var& label_embeddings,
                                      const TokenHeadParams& p) {
    Var wp = ag::affine(words, p.word_proj_w, p.word_proj_b);
    Var lp = ag::affine(label_embeddings, p.label_proj_w, p.label_proj_b);
    return channels_from(wp, lp, p.score_dim);
}

TokenChannelVars score_token_channels_projected(const Var& words, const Tensor& projected_labels,
                                                const TokenHeadParams& p) {
    Var wp = ag::affine(words, p.word_proj_w, p.word_proj_b);
    return channels_from(wp, ag::constant(projected_labels), p.score_dim);
}

TokenScores score_tokens(const Var& words, const Var& label_embeddings,
                         const TokenHeadParams& p) {
    TokenChannelVars ch = score_token_channels(words, label_embeddings, p);
    const int length = words->value.dim(0);
    const int classes = label_embeddings->value.dim(0);
    TokenScores out;
    out.length = length;
    out.num_classes = classes;
    out.logits = Tensor({length, classes, 3});
    for (int l = 0; l < length; ++l) {
        for (int c = 0; c < classes; ++c) {
            out.logits.at3(l, c, kStart) = ch.start->value.at(l, c);
            out.logits.at3(l, c, kEnd) = ch.end->value.at(l, c);
            out.logits.at3(l, c, kInside) = ch.inside->value.at(l, c);
        }
    }
    return out;
}

std::vector<ScoredSpan> extract_spans_bio(const TokenScores& scores, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1)");
    auto prob = [&](int l, int c, int ch) {
        return 1.0 / (1.0 + std::exp(-static_cast<double>(scores.logits.at3(l, c, ch))));
    };
    std::vector<ScoredSpan> out;
    for (int c = 0; c < scores.num_classes; ++c) {
        for (int i = 0; i < scores.length; ++i) {
            const double p_start = prob(i, c, kStart);
            if (p_start <= tau) continue;
            // Walk right while the inside channel keeps the interval alive.
            double inside_min = 1.0;
            for (int j = i; j < scores.length; ++j) {
                const double p_in = prob(j, c, kInside);
                if (p_in <= tau) break;
                inside_min = std::min(inside_min, p_in);
                const double p_end = prob(j, c, kEnd);
                if (p_end > tau)
                    out.push_back({i, j, c, std::min({p_start, p_end, inside_min})});
            }
        }
    }
    return out;
}

Tensor token_targets(const AnnotatedDocument& doc, const EntityTypeSet& types,
                     bool strict_types) {
    validate_document(doc);
    const int length = static_cast<int>(doc.tokens.size());
    Tensor y({length, types.size(), 3});
    for (const auto& e : doc.entities) {
        const int c = types.index_of(e.type_name);
        if (c < 0) {
            if (strict_types) throw DataError("gold type not in the type set: " + e.type_name);
            continue;
        }
        y.at3(e.start, c, kStart) = real(1);
        y.at3(e.end, c, kEnd) = real(1);
        for (int pos = e.start; pos <= e.end; ++pos) y.at3(pos, c, kInside) = real(1);
    }
    return y;
}

Var span_rep_for(const Var& words, int i, int j, const SpanHeadParams& p) {
    const int length = words->value.dim(0);
    if (i < 0 || j < i || j >= length) throw ShapeError("span_rep_for: indices out of range");
    Var h_start = ag::two_layer_mlp(ag::gather_rows(words, {i}), p.mlp_start);
    Var h_end = ag::two_layer_mlp(ag::gather_rows(words, {j}), p.mlp_end);
    Var concat = ag::relu(ag::concat_cols(h_start, h_end));
    return ag::two_layer_mlp(concat, p.mlp_out);
}

}  // namespace biner
