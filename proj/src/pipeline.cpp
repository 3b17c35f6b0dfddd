#include "haxml/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>

#include "haxml/errors.hpp"
#include "haxml/rng.hpp"

namespace haxml {

namespace fs = std::filesystem;

const TrainConfig& level_config(const HierarchyConfig& cfg, std::size_t level) {
    static const TrainConfig kDefault{};
    if (cfg.level_configs.empty()) return kDefault;
    return cfg.level_configs[std::min(level, cfg.level_configs.size() - 1)];
}

std::vector<std::vector<std::uint32_t>> project_targets(
    const std::vector<std::vector<std::uint32_t>>& targets, const Partition& part) {
    std::vector<std::vector<std::uint32_t>> out;
    out.reserve(targets.size());
    for (const auto& units : targets) {
        std::vector<std::uint32_t> groups;
        groups.reserve(units.size());
        for (std::uint32_t u : units) {
            if (u >= part.group_of.size() || part.group_of[u] == kNoGroup) {
                throw DataError("target " + std::to_string(u) + " outside the partition");
            }
            groups.push_back(part.group_of[u]);
        }
        std::sort(groups.begin(), groups.end());
        groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
        out.push_back(std::move(groups));
    }
    return out;
}

namespace {

std::vector<std::vector<std::uint32_t>> label_targets(const Dataset& data) {
    std::vector<std::vector<std::uint32_t>> targets;
    targets.reserve(data.instances.size());
    for (const Instance& inst : data.instances) targets.push_back(inst.labels);
    return targets;
}

const Partition& leaf_partition(const LabelTree& tree, const Dataset& data) {
    if (tree.levels.empty()) throw DataError("tree has no levels");
    const Partition& leaf = tree.levels.back();
    if (leaf.group_of.size() != data.num_labels) {
        throw DataError("tree covers " + std::to_string(leaf.group_of.size()) +
                        " labels but the dataset has " + std::to_string(data.num_labels));
    }
    return leaf;
}

}  // namespace

std::vector<std::vector<std::uint32_t>> group_targets(const Dataset& data, const LabelTree& tree) {
    const Partition& leaf = leaf_partition(tree, data);
    return project_targets(label_targets(data), leaf);
}

std::vector<CandidateSet> build_candidate_sets(
    const std::vector<std::vector<std::uint32_t>>& unit_targets,
    const std::vector<std::vector<std::uint32_t>>& parent_targets, const Partition& part,
    std::uint32_t c, std::uint64_t seed, CandidateBuildStats* stats) {
    if (unit_targets.size() != parent_targets.size()) {
        throw DataError("target sequences differ in length");
    }
    if (c == 0) throw DataError("candidate budget must be at least 1");

    CandidateBuildStats local;
    std::vector<CandidateSet> out;
    out.reserve(unit_targets.size());
    for (std::size_t i = 0; i < unit_targets.size(); ++i) {
        CandidateSet cs;
        if (!parent_targets[i].empty()) {
            for (std::uint32_t g : parent_targets[i]) {
                if (g >= part.members.size()) {
                    throw DataError("group " + std::to_string(g) + " outside the partition");
                }
                cs.candidates.insert(cs.candidates.end(), part.members[g].begin(),
                                     part.members[g].end());
            }
            std::sort(cs.candidates.begin(), cs.candidates.end());
            cs.positives = unit_targets[i];

            std::size_t pi = 0;
            for (std::uint32_t cand : cs.candidates) {
                if (pi < cs.positives.size() && cs.positives[pi] == cand) ++pi;
            }
            if (pi != cs.positives.size()) {
                throw DataError("positive unit missing from its groups' members");
            }

            if (cs.candidates.size() > c) {
                ++local.truncated;
                Rng rng(mix_seed(seed, i));
                if (cs.positives.size() > c) {
                    ++local.positive_truncations;
                    std::vector<std::uint32_t> kept = cs.positives;
                    shuffle_seeded(kept, rng);
                    kept.resize(c);
                    std::sort(kept.begin(), kept.end());
                    cs.positives = kept;
                    cs.candidates = std::move(kept);
                } else {
                    std::vector<std::uint32_t> negatives;
                    negatives.reserve(cs.candidates.size() - cs.positives.size());
                    std::size_t p = 0;
                    for (std::uint32_t cand : cs.candidates) {
                        if (p < cs.positives.size() && cs.positives[p] == cand) {
                            ++p;
                        } else {
                            negatives.push_back(cand);
                        }
                    }
                    shuffle_seeded(negatives, rng);
                    negatives.resize(c - cs.positives.size());
                    std::vector<std::uint32_t> merged = cs.positives;
                    merged.insert(merged.end(), negatives.begin(), negatives.end());
                    std::sort(merged.begin(), merged.end());
                    cs.candidates = std::move(merged);
                }
            }
        }
        out.push_back(std::move(cs));
    }
    if (stats) *stats = local;
    return out;
}

std::vector<CandidateSet> candidate_sets(const Dataset& data, const LabelTree& tree,
                                         std::uint32_t c, std::uint64_t seed,
                                         CandidateBuildStats* stats) {
    const Partition& leaf = leaf_partition(tree, data);
    const auto targets = label_targets(data);
    return build_candidate_sets(targets, project_targets(targets, leaf), leaf, c, seed, stats);
}

AttnModel train_group_model(const Dataset& data,
                            const std::vector<std::vector<std::uint32_t>>& targets,
                            std::uint32_t num_groups, const TrainConfig& cfg) {
    if (targets.size() != data.instances.size()) throw DataError("targets/instances size mismatch");
    if (num_groups == 0) throw DataError("group space must be non-empty");
    std::vector<std::uint32_t> all(num_groups);
    for (std::uint32_t g = 0; g < num_groups; ++g) all[g] = g;

    std::vector<std::uint32_t> view;
    std::vector<CandidateSet> cands;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i].empty()) continue;
        view.push_back(static_cast<std::uint32_t>(i));
        cands.push_back({all, targets[i]});
    }
    if (view.empty()) throw DataError("no training instances with targets");
    return train(data, view, cands, num_groups, cfg);
}

HModel train_tree(const Dataset& data, const HierarchyConfig& cfg, const Partition* fixed_leaf) {
    if (data.instances.empty()) throw DataError("empty dataset");
    if (data.num_labels == 0) throw DataError("dataset has no label space");
    if (cfg.levels == 0) throw DataError("levels must be at least 1");
    if (cfg.max_candidates == 0) throw DataError("candidate budget must be at least 1");

    // target_stack[0]: raw labels per instance; each built partition appends
    // the projection one level up.
    std::vector<std::vector<std::vector<std::uint32_t>>> target_stack;
    target_stack.push_back(label_targets(data));
    std::vector<Partition> ups;  // leaf partition first, topmost last
    std::vector<SplitRecord> splits;
    std::uint32_t unit_count = data.num_labels;

    while (ups.size() + 1 < cfg.levels || unit_count > cfg.group_recursion_threshold) {
        if (unit_count <= 1) break;
        Partition p;
        if (ups.empty() && fixed_leaf) {
            if (fixed_leaf->group_of.size() != data.num_labels) {
                throw DataError("supplied tree covers " +
                                std::to_string(fixed_leaf->group_of.size()) +
                                " labels but the dataset has " + std::to_string(data.num_labels));
            }
            p = *fixed_leaf;
        } else {
            ClusterConfig cc = cfg.cluster;
            cc.seed = mix_seed(cfg.seed, 0x100 + ups.size());
            const auto feats = pseudo_label_features(data, target_stack.back(), unit_count);
            LabelTree level_tree = build_tree(feats, cc);
            splits.insert(splits.end(), level_tree.splits.begin(), level_tree.splits.end());
            p = std::move(level_tree.levels.back());
        }
        const std::uint32_t produced = p.num_groups;
        ups.push_back(std::move(p));
        target_stack.push_back(project_targets(target_stack[target_stack.size() - 1], ups.back()));
        if (produced >= unit_count) break;  // cannot shrink further; stop stacking
        unit_count = produced;
    }

    HModel hm;
    hm.tree.splits = std::move(splits);
    hm.tree.levels.assign(ups.rbegin(), ups.rend());
    const std::size_t num_partitions = ups.size();

    std::vector<std::uint32_t> view;
    for (std::size_t i = 0; i < target_stack[0].size(); ++i) {
        if (!target_stack[0][i].empty()) view.push_back(static_cast<std::uint32_t>(i));
    }
    if (view.empty()) throw DataError("no training instances with labels");

    for (std::size_t d = 0; d <= num_partitions; ++d) {
        const std::size_t s = num_partitions - d;  // stack index of the scored space
        const std::uint32_t space =
            s == 0 ? data.num_labels : ups[s - 1].num_groups;
        TrainConfig tc = level_config(cfg, d);
        // salt by distance from the label stage so a flat model and the label
        // stage of a stacked one draw identical randomness
        tc.seed = mix_seed(cfg.seed, 0x200 + s);
        if (d == 0) {
            hm.models.push_back(train_group_model(data, target_stack[s], space, tc));
            continue;
        }
        auto cands = build_candidate_sets(target_stack[s], target_stack[s + 1], ups[s],
                                          cfg.max_candidates, mix_seed(cfg.seed, 0x300 + s));
        std::vector<CandidateSet> view_cands;
        view_cands.reserve(view.size());
        for (std::uint32_t id : view) view_cands.push_back(std::move(cands[id]));
        hm.models.push_back(train(data, view, view_cands, space, tc));
    }
    return hm;
}

EnsembleModel train_hierarchy(const Dataset& data, const HierarchyConfig& cfg,
                              const Partition* fixed_leaf) {
    if (cfg.num_trees == 0) throw DataError("num_trees must be at least 1");
    EnsembleModel em;
    em.num_features = data.num_features;
    em.num_labels = data.num_labels;
    em.max_candidates = cfg.max_candidates;
    em.seed = cfg.seed;
    for (std::uint32_t t = 0; t < cfg.num_trees; ++t) {
        HierarchyConfig member = cfg;
        member.seed = cfg.num_trees == 1 ? cfg.seed : mix_seed(cfg.seed, 0xE00 + t);
        em.trees.push_back(train_tree(data, member, fixed_leaf));
    }
    return em;
}

namespace {

void validate_tree_shape(const HModel& hm, std::uint32_t num_features, std::uint32_t num_labels) {
    if (hm.models.empty()) throw DataError("model has no levels");
    for (const AttnModel& m : hm.models) {
        if (m.num_features != num_features) {
            throw DataError("model feature dimension does not match the ensemble");
        }
    }
    if (hm.models.back().num_labels != num_labels) {
        throw DataError("label-level model does not match the label space");
    }
    if (hm.models.size() != hm.tree.levels.size() + 1) {
        throw DataError("model/tree level counts inconsistent");
    }
    for (std::size_t d = 0; d + 1 < hm.models.size(); ++d) {
        const Partition& part = hm.tree.levels[d];
        if (part.num_groups != hm.models[d].num_labels ||
            part.group_of.size() != hm.models[d + 1].num_labels) {
            throw DataError("model/tree dimensions inconsistent at level " + std::to_string(d));
        }
    }
}

}  // namespace

void save_ensemble(const EnsembleModel& model, const std::string& dir) {
    if (model.trees.empty()) throw DataError("ensemble has no trees");
    const std::size_t levels = model.trees[0].models.size();
    for (const HModel& hm : model.trees) {
        validate_tree_shape(hm, model.num_features, model.num_labels);
        if (hm.models.size() != levels) throw DataError("ensemble members differ in level count");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory: " + dir);

    std::ofstream mf(dir + "/manifest.txt", std::ios::binary);
    if (!mf) throw DataError("cannot open file for writing: " + dir + "/manifest.txt");
    mf << "trees " << model.trees.size() << '\n'
       << "levels " << levels << '\n'
       << "features " << model.num_features << '\n'
       << "labels " << model.num_labels << '\n'
       << "c " << model.max_candidates << '\n'
       << "seed " << model.seed << '\n';
    if (!mf) throw DataError("failed writing manifest");

    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        const std::string tdir = dir + "/t" + std::to_string(t);
        fs::create_directories(tdir, ec);
        if (ec) throw DataError("cannot create directory: " + tdir);
        const HModel& hm = model.trees[t];
        for (std::size_t d = 0; d < hm.tree.levels.size(); ++d) {
            const std::string path = tdir + "/tree_" + std::to_string(d) + ".txt";
            std::ofstream out(path, std::ios::binary);
            if (!out) throw DataError("cannot open file for writing: " + path);
            save_partition(hm.tree.levels[d], out);
            if (!out) throw DataError("failed writing file: " + path);
        }
        for (std::size_t d = 0; d < hm.models.size(); ++d) {
            save_model(hm.models[d], tdir + "/model_" + std::to_string(d) + ".bin");
        }
    }
}

EnsembleModel load_ensemble(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.txt");
    if (!mf) throw DataError("cannot open file: " + dir + "/manifest.txt");
    std::map<std::string, std::uint64_t> kv;
    std::string key;
    std::uint64_t value;
    while (mf >> key >> value) kv[key] = value;
    for (const char* required : {"trees", "levels", "features", "labels", "c", "seed"}) {
        if (!kv.count(required)) {
            throw DataError(std::string("manifest is missing '") + required + "'");
        }
    }
    if (kv["trees"] == 0 || kv["levels"] == 0) throw DataError("implausible manifest");
    if (kv["features"] > UINT32_MAX || kv["labels"] > UINT32_MAX || kv["c"] > UINT32_MAX ||
        kv["trees"] > 1024 || kv["levels"] > 64) {
        throw DataError("implausible manifest");
    }

    EnsembleModel em;
    em.num_features = static_cast<std::uint32_t>(kv["features"]);
    em.num_labels = static_cast<std::uint32_t>(kv["labels"]);
    em.max_candidates = static_cast<std::uint32_t>(kv["c"]);
    em.seed = kv["seed"];
    const std::size_t levels = kv["levels"];

    for (std::uint64_t t = 0; t < kv["trees"]; ++t) {
        const std::string tdir = dir + "/t" + std::to_string(t);
        HModel hm;
        for (std::size_t d = 0; d + 1 < levels; ++d) {
            const std::string path = tdir + "/tree_" + std::to_string(d) + ".txt";
            std::ifstream in(path);
            if (!in) throw DataError("cannot open file: " + path);
            hm.tree.levels.push_back(load_partition(in));
        }
        for (std::size_t d = 0; d < levels; ++d) {
            hm.models.push_back(load_model(tdir + "/model_" + std::to_string(d) + ".bin"));
        }
        validate_tree_shape(hm, em.num_features, em.num_labels);
        em.trees.push_back(std::move(hm));
    }
    return em;
}

}  // namespace haxml
