#pragma once

#include "biner/model.hpp"

namespace biner {

struct BenchConfig {
    std::vector<int> label_counts{1, 4, 16, 64, 256, 512};
    std::vector<int> input_lengths{64};
    int repeats = 10;
    bool cached = false;
    uint64_t seed = 17;
    double tau = 0.4;
    OverlapMode mode = OverlapMode::flat;
};

struct BenchCell {
    std::string arch;
    bool cached = false;
    int labels = 0;
    int words = 0;
    int repeats = 0;
    bool measurable = true;
    std::string note;           // set when not measurable
    double mean_seconds = 0.0;  // per forward+decode pass
    double std_seconds = 0.0;
    double mean_eps = 0.0;      // examples per second
    double std_eps = 0.0;
};

/// Timed forward+decode passes at batch size 1 over a deterministic
/// synthetic workload, one untimed warmup pass per cell, strictly
/// single-threaded. Cached mode assembles the label context (embeddings and
/// hoisted projections) before the clock starts; uncached mode re-encodes
/// the label set inside every pass. Uni cells whose joint sequence would
/// exceed the model's limit are reported as unmeasurable.
std::vector<BenchCell> run_bench(const Model& model, const BenchConfig& cfg);

/// CSV rows: arch,cached,L,T,repeats,mean_eps,std_eps (measured cells only).
std::string bench_csv(const std::vector<BenchCell>& cells);
std::string bench_table(const std::vector<BenchCell>& cells);

/// The deterministic bench inputs, exposed for tests.
std::vector<std::string> bench_document(int words, uint64_t seed);

}  // namespace biner
