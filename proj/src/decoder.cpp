#include "biner/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace biner {

OverlapMode overlap_mode_from_string(const std::string& s) {
    if (s == "flat") return OverlapMode::flat;
    if (s == "multi_label") return OverlapMode::multi_label;
    if (s == "nested") return OverlapMode::nested;
    throw ConfigError("unknown overlap mode: " + s);
}

const char* to_string(OverlapMode m) {
    switch (m) {
        case OverlapMode::flat: return "flat";
        case OverlapMode::multi_label: return "multi_label";
        case OverlapMode::nested: return "nested";
    }
    return "?";
}

std::vector<ScoredSpan> filter_candidates(const SpanScores& scores, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1)");
    // sigmoid(x) > tau  <=>  x > logit(tau); compare logits to skip the exp
    // on the (vast) majority of cells that fall below the threshold.
    const double logit_tau = std::log(tau / (1.0 - tau));
    std::vector<ScoredSpan> out;
    for (int i = 0; i < scores.length; ++i) {
        for (int k = 0; k < scores.max_width && i + k < scores.length; ++k) {
            for (int c = 0; c < scores.num_classes; ++c) {
                const double logit = static_cast<double>(scores.logits.at3(i, k, c));
                if (logit > logit_tau)
                    out.push_back({i, i + k, c, 1.0 / (1.0 + std::exp(-logit))});
            }
        }
    }
    return out;
}

namespace {

inline bool spans_overlap(const ScoredSpan& a, const ScoredSpan& b) {
    return std::max(a.start, b.start) <= std::min(a.end, b.end);
}

inline bool contained(const ScoredSpan& a, const ScoredSpan& b) {
    return (a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end);
}

}  // namespace

bool conflict(const ScoredSpan& a, const ScoredSpan& b, OverlapMode mode) {
    switch (mode) {
        case OverlapMode::flat:
            return spans_overlap(a, b);
        case OverlapMode::multi_label:
            return a.class_index == b.class_index && spans_overlap(a, b);
        case OverlapMode::nested:
            return spans_overlap(a, b) && !contained(a, b);
    }
    return false;
}

std::vector<ScoredSpan> greedy_decode(std::vector<ScoredSpan> candidates, OverlapMode mode) {
    std::sort(candidates.begin(), candidates.end(), [](const ScoredSpan& a, const ScoredSpan& b) {
        if (a.probability != b.probability) return a.probability > b.probability;
        if (a.start != b.start) return a.start < b.start;
        const int wa = a.end - a.start, wb = b.end - b.start;
        if (wa != wb) return wa < wb;
        return a.class_index < b.class_index;
    });

    std::vector<ScoredSpan> accepted;
    for (const auto& cand : candidates) {
        bool ok = true;
        for (const auto& sel : accepted) {
            if (conflict(cand, sel, mode)) {
                ok = false;
                break;
            }
        }
        if (ok) accepted.push_back(cand);
    }

    std::sort(accepted.begin(), accepted.end(), [](const ScoredSpan& a, const ScoredSpan& b) {
        if (a.start != b.start) return a.start < b.start;
        if (a.end != b.end) return a.end < b.end;
        return a.class_index < b.class_index;
    });
    return accepted;
}

}  // namespace biner
