#include "haxml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "haxml/errors.hpp"

namespace haxml {

namespace {

void check_no_duplicates(std::span<const std::uint32_t> ranked) {
    std::unordered_set<std::uint32_t> seen;
    seen.reserve(ranked.size());
    for (std::uint32_t l : ranked) {
        if (!seen.insert(l).second) {
            throw DataError("duplicate label " + std::to_string(l) + " in ranking");
        }
    }
}

bool is_true_label(std::span<const std::uint32_t> truth, std::uint32_t label) {
    return std::binary_search(truth.begin(), truth.end(), label);
}

}  // namespace

double precision_at_k(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> ranked,
                      std::uint32_t k) {
    if (k == 0) throw DataError("k must be positive");
    check_no_duplicates(ranked);
    std::size_t hits = 0;
    const std::size_t top = std::min<std::size_t>(k, ranked.size());
    for (std::size_t l = 0; l < top; ++l) {
        if (is_true_label(truth, ranked[l])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

double ndcg_at_k(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> ranked,
                 std::uint32_t k) {
    if (k == 0) throw DataError("k must be positive");
    if (truth.empty()) throw DataError("empty truth: nDCG is undefined");
    check_no_duplicates(ranked);
    double dcg = 0.0;
    const std::size_t top = std::min<std::size_t>(k, ranked.size());
    for (std::size_t l = 1; l <= top; ++l) {
        if (is_true_label(truth, ranked[l - 1])) dcg += 1.0 / std::log(static_cast<double>(l) + 1.0);
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min<std::size_t>(k, truth.size());
    for (std::size_t l = 1; l <= ideal; ++l) idcg += 1.0 / std::log(static_cast<double>(l) + 1.0);
    return dcg / idcg;
}

MetricsReport evaluate_rankings(const std::vector<std::vector<std::uint32_t>>& rankings,
                                const Dataset& truth, const std::vector<std::uint32_t>& ks) {
    if (rankings.size() != truth.instances.size()) {
        throw DataError("prediction count (" + std::to_string(rankings.size()) +
                        ") does not match instance count (" +
                        std::to_string(truth.instances.size()) + ")");
    }
    if (ks.empty()) throw DataError("no metric depths given");
    MetricsReport rep;
    rep.ks = ks;
    std::sort(rep.ks.begin(), rep.ks.end());
    rep.ks.erase(std::unique(rep.ks.begin(), rep.ks.end()), rep.ks.end());
    if (rep.ks.front() == 0) throw DataError("k must be positive");
    rep.p_at.assign(rep.ks.size(), 0.0);
    rep.ndcg_at.assign(rep.ks.size(), 0.0);

    for (std::size_t i = 0; i < rankings.size(); ++i) {
        const auto& t = truth.instances[i].labels;
        if (t.empty()) {
            ++rep.n_skipped_empty;
            continue;
        }
        ++rep.n_evaluated;
        for (std::size_t ki = 0; ki < rep.ks.size(); ++ki) {
            rep.p_at[ki] += precision_at_k(t, rankings[i], rep.ks[ki]);
            rep.ndcg_at[ki] += ndcg_at_k(t, rankings[i], rep.ks[ki]);
        }
    }
    if (rep.n_evaluated > 0) {
        for (std::size_t ki = 0; ki < rep.ks.size(); ++ki) {
            rep.p_at[ki] /= static_cast<double>(rep.n_evaluated);
            rep.ndcg_at[ki] /= static_cast<double>(rep.n_evaluated);
        }
    }
    return rep;
}

std::string format_report(const MetricsReport& report, bool with_kv) {
    std::string out;
    char buf[64];
    for (std::uint32_t k : report.ks) {
        std::snprintf(buf, sizeof(buf), "%10s@%-2u", "Prec", k);
        out += buf;
    }
    for (std::uint32_t k : report.ks) {
        std::snprintf(buf, sizeof(buf), "%10s@%-2u", "nDCG", k);
        out += buf;
    }
    out += '\n';
    for (double v : report.p_at) {
        std::snprintf(buf, sizeof(buf), "%13.4f", v);
        out += buf;
    }
    for (double v : report.ndcg_at) {
        std::snprintf(buf, sizeof(buf), "%13.4f", v);
        out += buf;
    }
    out += '\n';
    std::snprintf(buf, sizeof(buf), "evaluated %llu  skipped_empty %llu\n",
                  static_cast<unsigned long long>(report.n_evaluated),
                  static_cast<unsigned long long>(report.n_skipped_empty));
    out += buf;
    if (with_kv) {
        for (std::size_t ki = 0; ki < report.ks.size(); ++ki) {
            std::snprintf(buf, sizeof(buf), "P@%u=%.4f\n", report.ks[ki], report.p_at[ki]);
            out += buf;
        }
        for (std::size_t ki = 0; ki < report.ks.size(); ++ki) {
            std::snprintf(buf, sizeof(buf), "nDCG@%u=%.4f\n", report.ks[ki], report.ndcg_at[ki]);
            out += buf;
        }
        std::snprintf(buf, sizeof(buf), "evaluated=%llu\n",
                      static_cast<unsigned long long>(report.n_evaluated));
        out += buf;
        std::snprintf(buf, sizeof(buf), "skipped_empty=%llu\n",
                      static_cast<unsigned long long>(report.n_skipped_empty));
        out += buf;
    }
    return out;
}

}  // namespace haxml
