#pragma once

#include "biner/autograd.hpp"
#include "biner/corpus.hpp"
#include "biner/encoders.hpp"

namespace biner {

/// Boundary, span and label projections for the span-enumeration head.
/// All four are two-layer ReLU MLPs.
struct SpanHeadParams {
    ag::MlpParams mlp_start;   // D -> D
    ag::MlpParams mlp_end;     // D -> D
    ag::MlpParams mlp_out;     // 2D -> D
    ag::MlpParams mlp_prompt;  // D_label -> D
    int max_width = 12;        // K
};

SpanHeadParams make_span_head(int hidden_dim, int label_dim, int max_width, Rng& rng);
void collect(ag::ParamList& out, const std::string& prefix, const SpanHeadParams& p);

/// Enumeration of the valid (start, width-1) cells of a length-L document:
/// k in [0,K) and start+k < L. Invalid cells are never materialized; the
/// packed row order is row-major over (start, k).
struct SpanCells {
    int length = 0;
    int max_width = 0;
    std::vector<std::pair<int, int>> cells;  // (i, k)

    static SpanCells enumerate(int length, int max_width);
    int count() const { return static_cast<int>(cells.size()); }
};

/// Dense per-document scores [L,K,C]; cells with i+k >= L are zero-filled
/// and excluded from loss and decoding via valid().
struct SpanScores {
    int length = 0;
    int max_width = 0;
    int num_classes = 0;
    Tensor logits;  // [L,K,C]

    bool valid(int i, int k) const { return k < max_width && i + k < length; }
};

std::pair<ag::Var, ag::Var> boundary_project(const ag::Var& words, const SpanHeadParams& p);

/// Packed span representations [n_valid, D]; row m corresponds to
/// cells.cells[m] and is MLP_out(ReLU([h_start_i || h_end_{i+k}])).
ag::Var span_representations(const ag::Var& h_start, const ag::Var& h_end,
                             const SpanHeadParams& p, SpanCells* cells_out = nullptr);

/// Packed logits [n_valid, C] = S . MLP_prompt(E)^T.
ag::Var score_spans(const ag::Var& span_reps, const ag::Var& label_embeddings,
                    const SpanHeadParams& p);

/// Same scoring against an already-projected label matrix [C,D] (the
/// per-label-set hoisted MLP_prompt output used by inference).
ag::Var score_spans_projected(const ag::Var& span_reps, const Tensor& projected_labels);

SpanScores scatter_span_scores(const Tensor& packed, const SpanCells& cells, int num_classes);

/// Binary targets y[i,k,c] over the dense grid. Gold spans wider than K are
/// skipped and counted. Unknown gold types throw in strict mode and are
/// ignored otherwise.
Tensor span_targets(const AnnotatedDocument& doc, const EntityTypeSet& types, int max_width,
                    int* skipped_long_spans = nullptr, bool strict_types = true);

/// Row-major packing of a dense [L,K,C] tensor onto the valid cells.
Tensor pack_cells(const Tensor& dense, const SpanCells& cells);

}  // namespace biner
