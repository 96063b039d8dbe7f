#include "biner/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace biner {

using ag::Var;

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c = 0) {
    uint64_t h = fnv1a64(&a, sizeof(a));
    h = fnv1a64(&b, sizeof(b), h);
    h = fnv1a64(&c, sizeof(c), h);
    return h;
}

Tensor permute_columns(const Tensor& t, const std::vector<int>& perm) {
    const int rows = t.dim(0);
    const int cols = t.dim(1);
    Tensor out(t.shape());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out.at(r, c) = t.at(r, perm[c]);
    return out;
}

Tensor permute_dim1(const Tensor& t, const std::vector<int>& perm) {
    const int d0 = t.dim(0);
    const int d1 = t.dim(1);
    const int d2 = t.dim(2);
    Tensor out(t.shape());
    for (int a = 0; a < d0; ++a)
        for (int b = 0; b < d1; ++b)
            for (int c = 0; c < d2; ++c) out.at3(a, b, c) = t.at3(a, perm[b], c);
    return out;
}

// Stack the three token channels as row blocks: [3L, C].
Tensor stack_token_channels(const Tensor& t) {
    const int length = t.dim(0);
    const int classes = t.dim(1);
    Tensor out({3 * length, classes});
    for (int ch = 0; ch < 3; ++ch)
        for (int l = 0; l < length; ++l)
            for (int c = 0; c < classes; ++c) out.at(ch * length + l, c) = t.at3(l, c, ch);
    return out;
}

struct ParamGroups {
    std::vector<Var> vars;
    std::vector<bool> encoder_group;
};

ParamGroups make_groups(const Model& model) {
    ParamGroups g;
    for (auto& [name, var] : model.named_params()) {
        g.vars.push_back(var);
        g.encoder_group.push_back(Model::is_encoder_param(name));
    }
    return g;
}

struct DocBatchContext {
    const EntityTypeSet* types;     // batch types, possibly shuffled
    Var labels;                     // label matrix the heads score against (bi)
    const std::vector<int>* perm;   // canonical index of the label at each slot
};

}  // namespace

TrainResult train(Model& model, const std::vector<AnnotatedDocument>& docs,
                  const EntityTypeSet& types, const TrainConfig& tc, const LossConfig& lc) {
    if (docs.empty()) throw DataError("train: no documents");
    lc.validate();
    if (tc.steps <= 0) throw ConfigError("train: steps must be positive");
    if (tc.batch_size <= 0) throw ConfigError("train: batch_size must be positive");

    ParamGroups groups = make_groups(model);
    std::vector<double> lr(groups.vars.size(), 0.0);
    std::vector<double> wd(groups.vars.size(), 0.0);
    for (size_t i = 0; i < groups.vars.size(); ++i)
        wd[i] = groups.encoder_group[i] ? tc.weight_decay_encoder : tc.weight_decay_other;

    AdamW opt;
    Rng rng(tc.seed);
    Rng shuffle_rng(tc.seed ^ 0x9E3779B97F4A7C15ull);

    // Negative-type pool: dataset types plus any configured extras.
    std::vector<std::string> pool = types.labels;
    {
        std::unordered_set<std::string> seen(pool.begin(), pool.end());
        for (const auto& extra : tc.extra_type_pool)
            if (seen.insert(extra).second) pool.push_back(extra);
    }

    std::vector<int> order(docs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    size_t cursor = order.size();  // forces an initial shuffle

    TrainResult result;
    const bool token_head = model.config.head == HeadKind::token;

    for (long step = 0; step < tc.steps; ++step) {
        // ---- sample batch ----
        std::vector<int> batch;
        for (int b = 0; b < tc.batch_size; ++b) {
            if (cursor >= order.size()) {
                for (size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }

        // ---- batch type set, canonical order ----
        std::vector<std::string> batch_labels;
        {
            std::unordered_set<std::string> seen;
            for (int di : batch)
                for (const auto& e : docs[di].entities)
                    if (seen.insert(e.type_name).second) batch_labels.push_back(e.type_name);
            const int positives = static_cast<int>(batch_labels.size());
            std::vector<std::string> negatives;
            for (const auto& p : pool)
                if (!seen.count(p)) negatives.push_back(p);
            int want = static_cast<int>(tc.neg_type_ratio * std::max(1, positives));
            want = std::min<int>({want, static_cast<int>(negatives.size()),
                                  model.config.max_types_per_batch - positives});
            for (int n = 0; n < want; ++n) {
                const int pick = n + rng.uniform_int(static_cast<int>(negatives.size()) - n);
                std::swap(negatives[n], negatives[pick]);
                batch_labels.push_back(negatives[n]);
            }
            if (batch_labels.empty()) batch_labels.push_back(pool[rng.uniform_int(
                static_cast<int>(pool.size()))]);
        }
        const int num_classes = static_cast<int>(batch_labels.size());

        // ---- optional type shuffle (its own stream, so paired runs with
        // shuffling off consume identical draws from the main stream) ----
        std::vector<int> perm(num_classes);
        for (int c = 0; c < num_classes; ++c) perm[c] = c;
        if (tc.shuffle_types)
            for (int i = num_classes; i > 1; --i)
                std::swap(perm[i - 1], perm[shuffle_rng.uniform_int(i)]);
        std::vector<std::string> shuffled_labels(num_classes);
        for (int c = 0; c < num_classes; ++c) shuffled_labels[c] = batch_labels[perm[c]];
        EntityTypeSet batch_types = EntityTypeSet::make(shuffled_labels,
                                                        model.config.max_types_per_batch);
        EntityTypeSet canonical_types =
            EntityTypeSet::make(batch_labels, model.config.max_types_per_batch);

        // ---- forward ----
        RunState rs{true, &rng, mix_seed(tc.seed, static_cast<uint64_t>(step))};
        Var shared_labels;  // bi: encoded once per batch
        if (model.config.arch == Arch::bi) {
            Var canonical = encode_labels(*model.label_encoder, canonical_types, rs);
            std::vector<int> gather(perm.begin(), perm.end());
            shared_labels = num_classes > 1 ? ag::gather_rows(canonical, gather) : canonical;
        }

        Var total;
        std::vector<double> doc_losses;
        for (size_t bi_idx = 0; bi_idx < batch.size(); ++bi_idx) {
            const AnnotatedDocument& doc = docs[batch[bi_idx]];
            const uint64_t mask_seed =
                mix_seed(tc.seed, static_cast<uint64_t>(step), 1000 + bi_idx);

            Var words, labels;
            if (model.config.arch == Arch::bi) {
                words = encode_text(*model.text_encoder, doc.tokens, rs).words;
                labels = shared_labels;
                if (model.fuser && model.fuser->enabled) {
                    Var bridged = ag::affine(labels, model.fuser_bridge_w, model.fuser_bridge_b);
                    std::vector<uint8_t> tmask(doc.tokens.size(), 1);
                    std::vector<uint8_t> lmask(static_cast<size_t>(num_classes), 1);
                    FusedPair fused = cross_fuse(words, bridged, tmask, lmask, *model.fuser);
                    words = fused.words;
                    labels = fused.labels;
                }
            } else {
                EncodedJoint joint = encode_joint(*model.joint_encoder, batch_types, doc.tokens, rs);
                words = joint.words;
                labels = joint.label_rows;
            }

            Var doc_loss;
            if (!token_head || tc.lambda_span > 0.0) {
                int skipped = 0;
                Tensor dense = span_targets(doc, canonical_types, model.config.max_span_width,
                                            &skipped, true);
                result.skipped_long_spans += skipped;
                auto [h_start, h_end] = boundary_project(words, model.span_head);
                SpanCells cells;
                Var reps = span_representations(h_start, h_end, model.span_head, &cells);
                Var logits = score_spans(reps, labels, model.span_head);
                Tensor packed = pack_cells(dense, cells);
                Tensor mask = negative_mask(packed, lc.neg_rate, lc.mask_strategy, mask_seed);
                Var span_loss = focal_loss(logits, permute_columns(packed, perm),
                                           permute_columns(mask, perm), lc);
                if (token_head) span_loss = ag::scale(span_loss, tc.lambda_span);
                doc_loss = span_loss;
            }
            if (token_head) {
                Tensor dense = token_targets(doc, canonical_types, true);
                Tensor mask3 = negative_mask(dense, lc.neg_rate, lc.mask_strategy,
                                             mix_seed(mask_seed, 2));
                TokenChannelVars ch = score_token_channels(words, labels, *model.token_head);
                Var logits = ag::concat_rows({ch.start, ch.end, ch.inside});
                Var token_loss = focal_loss(
                    logits, stack_token_channels(permute_dim1(dense, perm)),
                    stack_token_channels(permute_dim1(mask3, perm)), lc);
                token_loss = ag::scale(token_loss, tc.lambda_token);
                doc_loss = doc_loss ? ag::add(doc_loss, token_loss) : token_loss;
            }
            doc_losses.push_back(static_cast<double>(doc_loss->value[0]));
            total = total ? ag::add(total, doc_loss) : doc_loss;
        }

        const double loss_value = static_cast<double>(total->value[0]);
        if (!std::isfinite(loss_value)) {
            std::ostringstream os;
            os << "non-finite loss at step " << step << ": total=" << loss_value
               << "; per-document losses:";
            for (double d : doc_losses) os << " " << d;
            os << "; lr_encoder="
               << cosine_warmup_lr(step, tc.steps, tc.warmup_ratio, tc.lr_encoder);
            throw std::runtime_error(os.str());
        }

        // ---- backward + update ----
        ag::zero_grad(groups.vars);
        ag::backward(total);
        const double grad_norm = clip_global_norm(groups.vars, tc.grad_clip_norm);
        const double lr_enc = cosine_warmup_lr(step, tc.steps, tc.warmup_ratio, tc.lr_encoder);
        const double lr_other = cosine_warmup_lr(step, tc.steps, tc.warmup_ratio, tc.lr_other);
        for (size_t i = 0; i < groups.vars.size(); ++i)
            lr[i] = groups.encoder_group[i] ? lr_enc : lr_other;
        opt.step(groups.vars, lr, wd);

        if (step % std::max(1, tc.log_every) == 0 || step == tc.steps - 1)
            result.logs.push_back({step, loss_value, lr_enc, lr_other, grad_norm});
    }

    if (!tc.metrics_csv.empty()) {
        std::ofstream os(tc.metrics_csv);
        if (!os) throw DataError("cannot write metrics: " + tc.metrics_csv);
        os << "step,loss,lr_encoder,lr_other,grad_norm\n";
        for (const auto& l : result.logs)
            os << l.step << "," << l.loss << "," << l.lr_encoder << "," << l.lr_other << ","
               << l.grad_norm << "\n";
    }
    return result;
}

EvalResult evaluate(const Model& model, const std::vector<AnnotatedDocument>& docs,
                    const EntityTypeSet& types, double tau, OverlapMode mode) {
    LabelContext ctx = make_label_context(model, types);
    EvalResult r;
    for (const auto& doc : docs) {
        std::vector<ScoredSpan> pred = predict_document(model, ctx, doc.tokens, tau, mode);
        r.predicted += static_cast<long>(pred.size());
        r.gold += static_cast<long>(doc.entities.size());
        for (const auto& p : pred) {
            for (const auto& g : doc.entities) {
                if (g.start == p.start && g.end == p.end &&
                    types.index_of(g.type_name) == p.class_index) {
                    ++r.correct;
                    break;
                }
            }
        }
    }
    r.precision = r.predicted > 0 ? static_cast<double>(r.correct) / r.predicted : 0.0;
    r.recall = r.gold > 0 ? static_cast<double>(r.correct) / r.gold : 0.0;
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

}  // namespace biner
