#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "haxml/dataset.hpp"

namespace haxml {

// Fraction of the top k ranked labels that are true. truth must be sorted;
// ranked must have no duplicates (checked). A ranking shorter than k scores
// 0 for the missing slots.
double precision_at_k(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> ranked,
                      std::uint32_t k);

// Rank-discounted gain of the top k, normalized by the ideal ranking's gain.
// Discounts use the natural logarithm; the base cancels in the ratio. truth
// must be non-empty (the ratio is undefined otherwise — callers skip such
// instances).
double ndcg_at_k(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> ranked,
                 std::uint32_t k);

struct MetricsReport {
    std::vector<std::uint32_t> ks;  // ascending
    std::vector<double> p_at;       // aligned with ks
    std::vector<double> ndcg_at;    // aligned with ks
    std::uint64_t n_evaluated = 0;
    std::uint64_t n_skipped_empty = 0;  // instances with no true labels, excluded
};

// Mean per-instance metrics over instances with non-empty truth. rankings
// must align one-to-one with truth.instances (count mismatch is an error).
MetricsReport evaluate_rankings(const std::vector<std::vector<std::uint32_t>>& rankings,
                                const Dataset& truth,
                                const std::vector<std::uint32_t>& ks = {1, 3, 5});

// Aligned table (Prec@k / nDCG@k columns, 4 decimals) plus the evaluated /
// skipped counts. with_kv appends machine-readable "P@1=0.9500"-style lines.
std::string format_report(const MetricsReport& report, bool with_kv);

}  // namespace haxml
