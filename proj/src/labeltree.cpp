#include "haxml/labeltree.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>

#include "haxml/errors.hpp"
#include "haxml/rng.hpp"

namespace haxml {

namespace {

SparseVector sparse_sum(const std::vector<const SparseVector*>& parts) {
    std::map<std::uint32_t, double> acc;
    for (const SparseVector* v : parts) {
        for (const SparseEntry& e : v->entries) acc[e.index] += e.value;
    }
    SparseVector out;
    out.entries.reserve(acc.size());
    for (const auto& [idx, val] : acc) {
        if (val != 0.0) out.entries.push_back({idx, val});
    }
    return out;
}

double l2_dist(const SparseVector& a, const SparseVector& b) {
    double s = 0.0;
    auto ia = a.entries.begin();
    auto ib = b.entries.begin();
    while (ia != a.entries.end() || ib != b.entries.end()) {
        double d;
        if (ib == b.entries.end() || (ia != a.entries.end() && ia->index < ib->index)) {
            d = ia->value;
            ++ia;
        } else if (ia == a.entries.end() || ib->index < ia->index) {
            d = -ib->value;
            ++ib;
        } else {
            d = ia->value - ib->value;
            ++ia;
            ++ib;
        }
        s += d * d;
    }
    return std::sqrt(s);
}

void split_recursive(const std::vector<LabelFeature>& items, std::vector<std::uint32_t> ids,
                     std::uint64_t seed, const ClusterConfig& cfg, Partition& leaf,
                     std::vector<SplitRecord>& splits) {
    if (ids.size() <= cfg.max_leaf_size) {
        const auto g = static_cast<std::uint32_t>(leaf.members.size());
        for (std::uint32_t id : ids) leaf.group_of[id] = g;
        leaf.members.push_back(std::move(ids));
        return;
    }
    std::vector<LabelFeature> subset;
    subset.reserve(ids.size());
    for (std::uint32_t id : ids) subset.push_back(items[id]);
    ClusterConfig sub_cfg = cfg;
    sub_cfg.seed = seed;
    auto [left, right] = balanced_2means(subset, sub_cfg);
    splits.push_back({static_cast<std::uint32_t>(left.size()), static_cast<std::uint32_t>(right.size())});
    split_recursive(items, std::move(left), mix_seed(seed, 0), cfg, leaf, splits);
    split_recursive(items, std::move(right), mix_seed(seed, 1), cfg, leaf, splits);
}

std::string_view trim_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

}  // namespace

std::vector<LabelFeature> pseudo_label_features(const Dataset& data,
                                                const std::vector<std::vector<std::uint32_t>>& targets,
                                                std::uint32_t count) {
    if (targets.size() != data.instances.size()) {
        throw DataError("targets/instances size mismatch");
    }
    std::vector<std::vector<const SparseVector*>> positives(count);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        for (std::uint32_t u : targets[i]) {
            if (u >= count) throw DataError("target id " + std::to_string(u) + " out of range");
            positives[u].push_back(&data.instances[i].features);
        }
    }
    std::vector<LabelFeature> out(count);
    for (std::uint32_t u = 0; u < count; ++u) {
        out[u].label_id = u;
        out[u].vector = normalized(sparse_sum(positives[u]));
    }
    return out;
}

std::vector<LabelFeature> label_features(const Dataset& data) {
    if (data.instances.empty()) throw DataError("empty dataset");
    std::vector<std::vector<std::uint32_t>> targets;
    targets.reserve(data.instances.size());
    for (const Instance& inst : data.instances) targets.push_back(inst.labels);
    return pseudo_label_features(data, targets, data.num_labels);
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>
balanced_2means(std::span<const LabelFeature> items, const ClusterConfig& cfg) {
    const std::size_t n = items.size();
    if (n < 2) throw DataError("balanced split needs at least 2 items");

    Rng rng(cfg.seed);
    const std::size_t ia = uniform_index(rng, n);
    std::size_t ib = ia == 0 ? 1 : 0;
    double least = items[ib].vector.dot(items[ia].vector);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == ia) continue;
        const double cos = items[i].vector.dot(items[ia].vector);
        if (cos < least) {
            least = cos;
            ib = i;
        }
    }
    SparseVector ca = items[ia].vector;
    SparseVector cb = items[ib].vector;

    const std::size_t left_size = (n + 1) / 2;
    std::vector<std::size_t> order(n);
    std::vector<double> gap(n);
    std::vector<std::uint32_t> left, right;
    const std::uint32_t iterations = std::max<std::uint32_t>(cfg.max_iterations, 1);
    for (std::uint32_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            order[i] = i;
            gap[i] = items[i].vector.dot(ca) - items[i].vector.dot(cb);
        }
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            if (gap[x] != gap[y]) return gap[x] > gap[y];
            return items[x].label_id < items[y].label_id;
        });
        left.clear();
        right.clear();
        std::vector<const SparseVector*> left_vecs, right_vecs;
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t i = order[r];
            if (r < left_size) {
                left.push_back(items[i].label_id);
                left_vecs.push_back(&items[i].vector);
            } else {
                right.push_back(items[i].label_id);
                right_vecs.push_back(&items[i].vector);
            }
        }
        SparseVector na = normalized(sparse_sum(left_vecs));
        SparseVector nb = normalized(sparse_sum(right_vecs));
        const double moved = std::max(l2_dist(ca, na), l2_dist(cb, nb));
        ca = std::move(na);
        cb = std::move(nb);
        if (moved < cfg.tolerance) break;
    }
    std::sort(left.begin(), left.end());
    std::sort(right.begin(), right.end());
    return {std::move(left), std::move(right)};
}

LabelTree build_tree(const std::vector<LabelFeature>& items, const ClusterConfig& cfg) {
    if (items.empty()) throw DataError("cannot build a tree over zero labels");
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].label_id != i) throw DataError("label ids must be 0..n-1 in order");
    }
    LabelTree tree;
    Partition leaf;
    leaf.group_of.assign(items.size(), kNoGroup);
    std::vector<std::uint32_t> all(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
    split_recursive(items, std::move(all), cfg.seed, cfg, leaf, tree.splits);
    leaf.num_groups = static_cast<std::uint32_t>(leaf.members.size());
    tree.levels.push_back(std::move(leaf));
    return tree;
}

std::uint32_t parent_of(const LabelTree& tree, std::uint32_t label_id) {
    if (tree.levels.empty()) throw DataError("tree has no levels");
    const Partition& leaf = tree.levels.back();
    if (label_id >= leaf.group_of.size()) {
        throw DataError("label " + std::to_string(label_id) + " out of range");
    }
    return leaf.group_of[label_id];
}

void save_partition(const Partition& p, std::ostream& out) {
    out << p.num_groups << ' ' << p.group_of.size() << '\n';
    for (std::uint32_t g = 0; g < p.num_groups; ++g) {
        if (p.members[g].empty()) throw DataError("group " + std::to_string(g) + " is empty");
        out << g << ' ';
        for (std::size_t i = 0; i < p.members[g].size(); ++i) {
            if (i) out << ',';
            out << p.members[g][i];
        }
        out << '\n';
    }
}

Partition load_partition(std::istream& in) {
    std::string buf;
    if (!std::getline(in, buf)) throw DataError("missing partition header", 1);
    std::string_view header = trim_cr(buf);
    std::uint64_t g = 0, l = 0;
    {
        const std::size_t sp = header.find(' ');
        if (sp == std::string_view::npos) throw DataError("partition header must be 'g L'", 1);
        auto parse = [](std::string_view tok, const char* what) {
            std::uint64_t v = 0;
            auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc{} || p != tok.data() + tok.size() || tok.empty()) {
                throw DataError("invalid " + std::string(what) + " in partition header", 1);
            }
            return v;
        };
        g = parse(header.substr(0, sp), "group count");
        l = parse(header.substr(sp + 1), "item count");
    }
    if (g == 0 || l == 0 || g > l) throw DataError("implausible partition header", 1);

    Partition p;
    p.num_groups = static_cast<std::uint32_t>(g);
    p.group_of.assign(l, kNoGroup);
    p.members.resize(g);
    for (std::uint64_t row = 0; row < g; ++row) {
        const std::size_t lineno = row + 2;
        if (!std::getline(in, buf)) throw DataError("missing group line", lineno);
        std::string_view line = trim_cr(buf);
        const std::size_t sp = line.find(' ');
        if (sp == std::string_view::npos) throw DataError("malformed group line", lineno);
        std::uint64_t gid = 0;
        {
            std::string_view tok = line.substr(0, sp);
            auto [cp, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), gid);
            if (ec != std::errc{} || cp != tok.data() + tok.size()) {
                throw DataError("invalid group id", lineno);
            }
        }
        if (gid != row) throw DataError("group ids must appear in order", lineno);
        std::string_view csv = line.substr(sp + 1);
        if (csv.empty()) throw DataError("empty group", lineno);
        std::size_t pos = 0;
        std::int64_t prev = -1;
        while (pos <= csv.size()) {
            std::size_t comma = csv.find(',', pos);
            if (comma == std::string_view::npos) comma = csv.size();
            std::string_view tok = csv.substr(pos, comma - pos);
            std::uint64_t id = 0;
            auto [cp, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), id);
            if (ec != std::errc{} || cp != tok.data() + tok.size() || tok.empty()) {
                throw DataError("invalid member id '" + std::string(tok) + "'", lineno);
            }
            if (id >= l) throw DataError("member id " + std::to_string(id) + " out of range", lineno);
            if (static_cast<std::int64_t>(id) <= prev) {
                throw DataError("member ids must be strictly ascending", lineno);
            }
            if (p.group_of[id] != kNoGroup) {
                throw DataError("item " + std::to_string(id) + " assigned twice", lineno);
            }
            prev = static_cast<std::int64_t>(id);
            p.group_of[id] = static_cast<std::uint32_t>(gid);
            p.members[gid].push_back(static_cast<std::uint32_t>(id));
            if (comma == csv.size()) break;
            pos = comma + 1;
        }
    }
    for (std::size_t i = 0; i < p.group_of.size(); ++i) {
        if (p.group_of[i] == kNoGroup) {
            throw DataError("item " + std::to_string(i) + " not assigned to any group");
        }
    }
    return p;
}

void save_tree(const LabelTree& tree, std::ostream& out) {
    if (tree.levels.empty()) throw DataError("tree has no levels");
    save_partition(tree.levels.back(), out);
}

void save_tree(const LabelTree& tree, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open file for writing: " + path);
    save_tree(tree, out);
    if (!out) throw DataError("failed writing file: " + path);
}

LabelTree load_tree(std::istream& in) {
    LabelTree tree;
    tree.levels.push_back(load_partition(in));
    return tree;
}

LabelTree load_tree(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return load_tree(in);
}

}  // namespace haxml
