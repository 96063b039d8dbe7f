#pragma once

#include "biner/loss.hpp"
#include "biner/model.hpp"
#include "biner/optimizer.hpp"

namespace biner {

struct TrainConfig {
    double lr_encoder = 1e-5;
    double lr_other = 3e-5;
    double weight_decay_encoder = 0.01;
    double weight_decay_other = 0.01;
    double grad_clip_norm = 10.0;
    double warmup_ratio = 0.1;
    int batch_size = 8;
    int steps = 1000;
    uint64_t seed = 1;
    bool shuffle_types = true;
    /// Up to this many negative types per positive type are added to each
    /// batch's label set, drawn from the dataset types plus extra_type_pool.
    double neg_type_ratio = 1.0;
    std::vector<std::string> extra_type_pool;
    int log_every = 50;
    double lambda_token = 1.0;  // token-head combined loss weights
    double lambda_span = 0.0;
    std::string metrics_csv;  // written when non-empty: step,loss,lr_encoder,lr_other,grad_norm
};

struct StepLog {
    long step = 0;
    double loss = 0.0;
    double lr_encoder = 0.0;
    double lr_other = 0.0;
    double grad_norm = 0.0;
};

struct TrainResult {
    std::vector<StepLog> logs;
    long skipped_long_spans = 0;  // gold spans wider than K, excluded from span targets
};

/// Batched training: sample documents, assemble the batch's type set
/// (positives plus sampled negative types), build targets and the stochastic
/// negative mask in canonical type order, optionally shuffle the type order,
/// run the masked focal loss, clip the global gradient norm and take an
/// AdamW step with separate encoder/other learning-rate groups under a
/// cosine-with-warmup schedule. Throws on a non-finite loss.
TrainResult train(Model& model, const std::vector<AnnotatedDocument>& docs,
                  const EntityTypeSet& types, const TrainConfig& tc, const LossConfig& lc);

struct EvalResult {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long predicted = 0;
    long gold = 0;
    long correct = 0;
};

/// Micro-averaged exact-match span evaluation (boundaries and type).
EvalResult evaluate(const Model& model, const std::vector<AnnotatedDocument>& docs,
                    const EntityTypeSet& types, double tau = 0.4,
                    OverlapMode mode = OverlapMode::flat);

}  // namespace biner
