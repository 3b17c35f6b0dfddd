#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace haxml {

struct SparseEntry {
    std::uint32_t index = 0;
    double value = 0.0;

    friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

// Sparse feature vector. Invariants: indices strictly increasing, values
// finite and nonzero.
struct SparseVector {
    std::vector<SparseEntry> entries;

    std::size_t nnz() const { return entries.size(); }
    bool empty() const { return entries.empty(); }

    double norm2() const {
        double s = 0.0;
        for (const auto& e : entries) s += e.value * e.value;
        return std::sqrt(s);
    }

    // Merge join on the sorted indices.
    double dot(const SparseVector& o) const {
        double s = 0.0;
        auto a = entries.begin();
        auto b = o.entries.begin();
        while (a != entries.end() && b != o.entries.end()) {
            if (a->index < b->index) {
                ++a;
            } else if (b->index < a->index) {
                ++b;
            } else {
                s += a->value * b->value;
                ++a;
                ++b;
            }
        }
        return s;
    }

    double dot_dense(const std::vector<double>& d) const {
        double s = 0.0;
        for (const auto& e : entries) {
            if (e.index < d.size()) s += e.value * d[e.index];
        }
        return s;
    }

    friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

// Unit-normalized copy; the zero vector stays zero.
inline SparseVector normalized(const SparseVector& v) {
    const double n = v.norm2();
    if (n == 0.0) return v;
    SparseVector out = v;
    for (auto& e : out.entries) e.value /= n;
    return out;
}

}  // namespace haxml
