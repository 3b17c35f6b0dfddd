#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "haxml/attnmodel.hpp"
#include "haxml/dataset.hpp"
#include "haxml/labeltree.hpp"

namespace haxml {

// Whole-pipeline configuration. `levels` counts classifier stages: 1 trains a
// single flat model over the raw labels (no tree), 2 is the standard
// group-model + label-model setup, higher values stack further group levels.
// When the top level would still have more groups than
// group_recursion_threshold, extra levels are added regardless of `levels`.
// level_configs[0] applies to the topmost model, the last entry repeats for
// any deeper level; an empty vector means defaults everywhere. The seeds
// inside `cluster` and `level_configs` are ignored: all randomness derives
// from `seed`.
struct HierarchyConfig {
    std::uint32_t max_candidates = 1000;  // c
    std::uint32_t levels = 2;
    std::uint32_t group_recursion_threshold = 10000;
    std::uint32_t num_trees = 1;
    std::uint64_t seed = 42;
    ClusterConfig cluster;
    std::vector<TrainConfig> level_configs;
};

const TrainConfig& level_config(const HierarchyConfig& cfg, std::size_t level);

// One trained tree: the label tree plus one model per level, topmost first.
// models.size() == tree.levels.size() + 1. models[0] scores the top-level
// groups, models.back() scores the raw labels. A flat model has an empty
// tree and exactly one model.
struct HModel {
    LabelTree tree;
    std::vector<AttnModel> models;
};

struct EnsembleModel {
    std::vector<HModel> trees;
    std::uint32_t num_features = 0;
    std::uint32_t num_labels = 0;
    std::uint32_t max_candidates = 1000;
    std::uint64_t seed = 42;
};

// Per-instance group targets: the image of each label set under the leaf
// partition, deduplicated and sorted. Empty exactly where the label set is
// empty.
std::vector<std::vector<std::uint32_t>> group_targets(const Dataset& data, const LabelTree& tree);

// Same projection through an arbitrary partition level.
std::vector<std::vector<std::uint32_t>> project_targets(
    const std::vector<std::vector<std::uint32_t>>& targets, const Partition& part);

struct CandidateBuildStats {
    std::uint64_t truncated = 0;             // candidate sets cut down to c
    std::uint64_t positive_truncations = 0;  // degenerate: more than c positives
};

// Per-instance candidate sets for the label-level model: the union of the
// members of the instance's positive groups. A set larger than c keeps all
// positives and a seeded uniform sample of the negatives to reach exactly c;
// in the degenerate case of more than c positives, a seeded sample of c
// positives is kept (counted in stats). Aligned with data.instances; empty
// label set gives an empty candidate set.
std::vector<CandidateSet> candidate_sets(const Dataset& data, const LabelTree& tree,
                                         std::uint32_t c, std::uint64_t seed,
                                         CandidateBuildStats* stats = nullptr);

// The same construction one level up: unit_targets are the positives in the
// scored space, parent_targets the positive groups, part maps scored units
// to parent groups.
std::vector<CandidateSet> build_candidate_sets(
    const std::vector<std::vector<std::uint32_t>>& unit_targets,
    const std::vector<std::vector<std::uint32_t>>& parent_targets, const Partition& part,
    std::uint32_t c, std::uint64_t seed, CandidateBuildStats* stats = nullptr);

// Flat training over a pseudo-label space: every instance's candidate set is
// all num_groups units. Instances with empty targets are skipped.
AttnModel train_group_model(const Dataset& data,
                            const std::vector<std::vector<std::uint32_t>>& targets,
                            std::uint32_t num_groups, const TrainConfig& cfg);

// Build the tree and train every level for a single ensemble member. A
// fixed_leaf partition, when given, is used as the label-level grouping
// instead of clustering one (upper levels are still built on demand); it
// must cover exactly the dataset's label space.
HModel train_tree(const Dataset& data, const HierarchyConfig& cfg,
                  const Partition* fixed_leaf = nullptr);

// Train num_trees members; member t uses a seed derived from cfg.seed (left
// unchanged when num_trees == 1, so the single-tree path is exactly
// train_tree).
EnsembleModel train_hierarchy(const Dataset& data, const HierarchyConfig& cfg,
                              const Partition* fixed_leaf = nullptr);

// Directory layout: manifest.txt (key-value lines: trees, levels, features,
// labels, c, seed), then per member t a subdirectory t<t>/ with one
// partition file per tree level (tree_<d>.txt, topmost first, absent for a
// flat model) and one model file per stage (model_<d>.bin, topmost first).
void save_ensemble(const EnsembleModel& model, const std::string& dir);
EnsembleModel load_ensemble(const std::string& dir);

}  // namespace haxml
