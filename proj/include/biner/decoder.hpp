#pragma once

#include <vector>

#include "biner/span_head.hpp"

namespace biner {

struct ScoredSpan {
    int start = 0;  // word index, inclusive
    int end = 0;    // word index, inclusive
    int class_index = 0;
    double probability = 0.0;
};

enum class OverlapMode { flat, multi_label, nested };

OverlapMode overlap_mode_from_string(const std::string& s);
const char* to_string(OverlapMode m);

/// One candidate per valid cell whose sigmoid-probability exceeds tau,
/// with end = start + k.
std::vector<ScoredSpan> filter_candidates(const SpanScores& scores, double tau);

/// Conflict predicates per overlap regime:
///   flat:        max(s1,s2) <= min(e1,e2)
///   multi_label: same class and overlapping
///   nested:      overlapping and neither contains the other
/// Containment is <=-based, so equal spans count as contained.
bool conflict(const ScoredSpan& a, const ScoredSpan& b, OverlapMode mode);

/// Sort by probability descending (ties: lower start, then shorter span,
/// then lower class index), greedily accept spans that conflict with no
/// accepted span, and return the selection sorted by (start, end, class).
std::vector<ScoredSpan> greedy_decode(std::vector<ScoredSpan> candidates, OverlapMode mode);

}  // namespace biner
