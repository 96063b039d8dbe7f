#include "biner/span_head.hpp"

namespace biner {

using ag::Var;

SpanHeadParams make_span_head(int hidden_dim, int label_dim, int max_width, Rng& rng) {
    if (max_width < 1) throw ConfigError("max span width must be >= 1");
    SpanHeadParams p;
    p.mlp_start = ag::make_mlp(hidden_dim, hidden_dim, hidden_dim, rng, "mlp_start");
    p.mlp_end = ag::make_mlp(hidden_dim, hidden_dim, hidden_dim, rng, "mlp_end");
    p.mlp_out = ag::make_mlp(2 * hidden_dim, hidden_dim, hidden_dim, rng, "mlp_out");
    p.mlp_prompt = ag::make_mlp(label_dim, hidden_dim, hidden_dim, rng, "mlp_prompt");
    p.max_width = max_width;
    return p;
}

void collect(ag::ParamList& out, const std::string& prefix, const SpanHeadParams& p) {
    ag::collect(out, prefix + ".mlp_start", p.mlp_start);
    ag::collect(out, prefix + ".mlp_end", p.mlp_end);
    ag::collect(out, prefix + ".mlp_out", p.mlp_out);
    ag::collect(out, prefix + ".mlp_prompt", p.mlp_prompt);
}

SpanCells SpanCells::enumerate(int length, int max_width) {
    SpanCells c;
    c.length = length;
    c.max_width = max_width;
    for (int i = 0; i < length; ++i)
        for (int k = 0; k < max_width && i + k < length; ++k) c.cells.emplace_back(i, k);
    return c;
}

std::pair<Var, Var> boundary_project(const Var& words, const SpanHeadParams& p) {
    return {ag::two_layer_mlp(words, p.mlp_start), ag::two_layer_mlp(words, p.mlp_end)};
}

Var span_representations(const Var& h_start, const Var& h_end, const SpanHeadParams& p,
                         SpanCells* cells_out) {
    const int length = h_start->value.dim(0);
    SpanCells cells = SpanCells::enumerate(length, p.max_width);
    std::vector<int> start_ids, end_ids;
    start_ids.reserve(cells.cells.size());
    end_ids.reserve(cells.cells.size());
    for (const auto& [i, k] : cells.cells) {
        start_ids.push_back(i);
        end_ids.push_back(i + k);
    }
    Var starts = ag::gather_rows(h_start, std::move(start_ids));
    Var ends = ag::gather_rows(h_end, std::move(end_ids));
    Var concat = ag::relu(ag::concat_cols(starts, ends));
    if (cells_out) *cells_out = std::move(cells);
    return ag::two_layer_mlp(concat, p.mlp_out);
}

Var score_spans(const Var& span_reps, const Var& label_embeddings, const SpanHeadParams& p) {
    Var projected = ag::two_layer_mlp(label_embeddings, p.mlp_prompt);
    return ag::matmul(span_reps, false, projected, true);
}

Var score_spans_projected(const Var& span_reps, const Tensor& projected_labels) {
    return ag::matmul(span_reps, false, ag::constant(projected_labels), true);
}

SpanScores scatter_span_scores(const Tensor& packed, const SpanCells& cells, int num_classes) {
    SpanScores s;
    s.length = cells.length;
    s.max_width = cells.max_width;
    s.num_classes = num_classes;
    s.logits = Tensor({cells.length, cells.max_width, num_classes});
    for (int m = 0; m < cells.count(); ++m) {
        const auto& [i, k] = cells.cells[m];
        for (int c = 0; c < num_classes; ++c)
            s.logits.at3(i, k, c) = packed.at(m, c);
    }
    return s;
}

Tensor span_targets(const AnnotatedDocument& doc, const EntityTypeSet& types, int max_width,
                    int* skipped_long_spans, bool strict_types) {
    validate_document(doc);
    const int length = static_cast<int>(doc.tokens.size());
    Tensor y({length, max_width, types.size()});
    int skipped = 0;
    for (const auto& e : doc.entities) {
        const int c = types.index_of(e.type_name);
        if (c < 0) {
            if (strict_types) throw DataError("gold type not in the type set: " + e.type_name);
            continue;
        }
        const int k = e.end - e.start;
        if (k >= max_width) {
            ++skipped;
            continue;
        }
        y.at3(e.start, k, c) = real(1);
    }
    if (skipped_long_spans) *skipped_long_spans = skipped;
    return y;
}

Tensor pack_cells(const Tensor& dense, const SpanCells& cells) {
    const int num_classes = dense.dim(2);
    Tensor packed({cells.count(), num_classes});
    for (int m = 0; m < cells.count(); ++m) {
        const auto& [i, k] = cells.cells[m];
        for (int c = 0; c < num_classes; ++c) packed.at(m, c) = dense.at3(i, k, c);
    }
    return packed;
}

}  // namespace biner
