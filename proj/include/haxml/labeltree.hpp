#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "haxml/dataset.hpp"
#include "haxml/sparse.hpp"

namespace haxml {

// One label's point in clustering space: the unit-normalized sum of the
// feature vectors of its positive instances, or the zero vector for labels
// with no positive instances.
struct LabelFeature {
    std::uint32_t label_id = 0;
    SparseVector vector;
};

struct ClusterConfig {
    std::uint32_t max_leaf_size = 100;
    std::uint32_t max_iterations = 50;
    double tolerance = 1e-4;
    std::uint64_t seed = 42;
};

constexpr std::uint32_t kNoGroup = 0xFFFFFFFFu;

// One level of the tree: a partition of item ids into groups.
struct Partition {
    std::uint32_t num_groups = 0;
    std::vector<std::uint32_t> group_of;              // item id -> group id, kNoGroup if absent
    std::vector<std::vector<std::uint32_t>> members;  // group id -> ascending item ids

    std::uint32_t num_items() const { return static_cast<std::uint32_t>(group_of.size()); }

    friend bool operator==(const Partition&, const Partition&) = default;
};

struct SplitRecord {
    std::uint32_t left_size = 0;
    std::uint32_t right_size = 0;
};

// The label tree. `levels` is ordered root-adjacent first; the last level
// partitions the raw labels into the leaf groups, which is the clustering
// result (intermediate binary splits are not kept as levels). `splits` is
// the trace of every binary split made during construction, kept so the
// balance property can be checked after the fact.
struct LabelTree {
    std::vector<Partition> levels;
    std::vector<SplitRecord> splits;
};

std::vector<LabelFeature> label_features(const Dataset& data);

// Label features for a pseudo-label space: `targets[i]` is the set of
// positive item ids of instance i, `count` the size of the item space.
// With targets = raw labels this is label_features().
std::vector<LabelFeature> pseudo_label_features(const Dataset& data,
                                                const std::vector<std::vector<std::uint32_t>>& targets,
                                                std::uint32_t count);

// Split into halves of size ceil(n/2) / floor(n/2). Items are ranked by
// (cosine to centroid A - cosine to centroid B) and the top half goes to A;
// centroids are recomputed and renormalized until movement < tolerance or
// max_iterations. Ties break by ascending label id. Returns ascending label
// ids, left side first.
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>
balanced_2means(std::span<const LabelFeature> items, const ClusterConfig& cfg);

// Recursive balanced splitting until every cluster has at most max_leaf_size
// items. Deterministic for a given seed; child seeds are derived from the
// parent seed and child index, so the result does not depend on traversal
// interleaving.
LabelTree build_tree(const std::vector<LabelFeature>& items, const ClusterConfig& cfg);

// The leaf group G(j) containing label j.
std::uint32_t parent_of(const LabelTree& tree, std::uint32_t label_id);

// Text format: "g L" then one line per group: "<group_id> <m1,m2,...>"
// with members ascending.
void save_partition(const Partition& p, std::ostream& out);
Partition load_partition(std::istream& in);

// Convenience wrappers over the leaf partition.
void save_tree(const LabelTree& tree, std::ostream& out);
void save_tree(const LabelTree& tree, const std::string& path);
LabelTree load_tree(std::istream& in);
LabelTree load_tree(const std::string& path);

}  // namespace haxml
