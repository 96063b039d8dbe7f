#include "biner/bench.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace biner {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Joint-encoder subtoken count for a refusal check without encoding.
int joint_sequence_len(const EntityTypeSet& types, const std::vector<std::string>& tokens) {
    int n = 0;
    for (const auto& label : types.labels) {
        ++n;  // ENT
        for (const auto& w : tokenize_whitespace(label))
            n += static_cast<int>(SubwordVocab::word_chunks(w).size());
    }
    ++n;  // SEP
    for (const auto& w : tokens) n += static_cast<int>(SubwordVocab::word_chunks(w).size());
    return n;
}

}  // namespace

std::vector<std::string> bench_document(int words, uint64_t seed) {
    // Same lexical family as the synthetic corpus: filler words with the
    // occasional trigger+slot pattern so the decode path sees real hits.
    Rng rng(seed);
    std::vector<std::string> tokens;
    tokens.reserve(words);
    while (static_cast<int>(tokens.size()) < words) {
        if (rng.bernoulli(0.08) && words - static_cast<int>(tokens.size()) > 4) {
            tokens.push_back("trig" + std::to_string(rng.uniform_int(5)));
            const int width = 1 + rng.uniform_int(3);
            for (int i = 0; i < width; ++i)
                tokens.push_back("s" + std::to_string(rng.uniform_int(16)));
        } else {
            tokens.push_back("w" + std::to_string(rng.uniform_int(120)));
        }
    }
    tokens.resize(words);
    return tokens;
}

std::vector<BenchCell> run_bench(const Model& model, const BenchConfig& cfg) {
    if (cfg.repeats < 1) throw ConfigError("bench repeats must be >= 1");
    if (cfg.cached && model.config.arch == Arch::uni)
        throw ConfigError("the uni arch has no label embeddings to cache");

#ifdef _OPENMP
    const int prev_threads = omp_get_max_threads();
    omp_set_num_threads(1);  // timings are strictly single-threaded
#endif

    std::vector<BenchCell> cells;
    for (int t_len : cfg.input_lengths) {
        for (int l_count : cfg.label_counts) {
            BenchCell cell;
            cell.arch = to_string(model.config.arch);
            cell.cached = cfg.cached;
            cell.labels = l_count;
            cell.words = t_len;
            cell.repeats = cfg.repeats;

            EntityTypeSet types = EntityTypeSet::make(synthetic_label_pool(l_count),
                                                      std::max(l_count, 1));
            std::vector<std::string> tokens =
                bench_document(t_len, cfg.seed ^ (static_cast<uint64_t>(l_count) << 20) ^
                                           static_cast<uint64_t>(t_len));

            if (model.config.arch == Arch::uni) {
                const int seq = joint_sequence_len(types, tokens);
                if (seq > model.joint_encoder->max_seq_len) {
                    cell.measurable = false;
                    cell.note = "joint sequence of " + std::to_string(seq) +
                                " subtokens exceeds max_seq_len " +
                                std::to_string(model.joint_encoder->max_seq_len);
                    cells.push_back(std::move(cell));
                    continue;
                }
            }

            LabelContext cached_ctx;
            if (cfg.cached) cached_ctx = make_label_context(model, types);
            LabelContext uni_ctx;
            if (model.config.arch == Arch::uni) {
                uni_ctx.types = types;
            }

            auto one_pass = [&]() {
                if (model.config.arch == Arch::uni) {
                    predict_document(model, uni_ctx, tokens, cfg.tau, cfg.mode);
                } else if (cfg.cached) {
                    predict_document(model, cached_ctx, tokens, cfg.tau, cfg.mode);
                } else {
                    LabelContext fresh = make_label_context(model, types);
                    predict_document(model, fresh, tokens, cfg.tau, cfg.mode);
                }
            };

            one_pass();  // warmup, untimed

            std::vector<double> times(static_cast<size_t>(cfg.repeats));
            for (int r = 0; r < cfg.repeats; ++r) {
                const auto t0 = Clock::now();
                one_pass();
                times[static_cast<size_t>(r)] = seconds_since(t0);
            }
            double mean = 0.0;
            for (double t : times) mean += t;
            mean /= cfg.repeats;
            double var = 0.0;
            for (double t : times) var += (t - mean) * (t - mean);
            var /= cfg.repeats;

            cell.mean_seconds = mean;
            cell.std_seconds = std::sqrt(var);
            cell.mean_eps = mean > 0.0 ? 1.0 / mean : 0.0;
            // First-order delta method for the spread in examples/second.
            cell.std_eps = mean > 0.0 ? cell.std_seconds / (mean * mean) : 0.0;
            cells.push_back(std::move(cell));
        }
    }

#ifdef _OPENMP
    omp_set_num_threads(prev_threads);
#endif
    return cells;
}

std::string bench_csv(const std::vector<BenchCell>& cells) {
    std::ostringstream os;
    os << "arch,cached,L,T,repeats,mean_eps,std_eps\n";
    for (const auto& c : cells) {
        if (!c.measurable) continue;
        os << c.arch << "," << (c.cached ? 1 : 0) << "," << c.labels << "," << c.words << ","
           << c.repeats << "," << c.mean_eps << "," << c.std_eps << "\n";
    }
    return os.str();
}

std::string bench_table(const std::vector<BenchCell>& cells) {
    std::ostringstream os;
    os << "arch   cached  L     T     examples/s   (std)\n";
    for (const auto& c : cells) {
        char line[160];
        if (c.measurable) {
            std::snprintf(line, sizeof(line), "%-6s %-7s %-5d %-5d %-12.3f %.3f", c.arch.c_str(),
                          c.cached ? "yes" : "no", c.labels, c.words, c.mean_eps, c.std_eps);
            os << line << "\n";
        } else {
            std::snprintf(line, sizeof(line), "%-6s %-7s %-5d %-5d unmeasurable: %s",
                          c.arch.c_str(), c.cached ? "yes" : "no", c.labels, c.words,
                          c.note.c_str());
            os << line << "\n";
        }
    }
    return os.str();
}

}  // namespace biner
