#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "haxml/sparse.hpp"

namespace haxml {

struct Instance {
    SparseVector features;
    std::vector<std::uint32_t> labels;  // sorted, unique, < num_labels

    friend bool operator==(const Instance&, const Instance&) = default;
};

// Immutable after construction; safe to share across threads.
struct Dataset {
    std::vector<Instance> instances;
    std::uint32_t num_features = 0;  // feature ids are < num_features
    std::uint32_t num_labels = 0;    // label ids are < num_labels

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetStats {
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t l = 0;
    double avg_labels_per_instance = 0.0;
    double avg_instances_per_label = 0.0;
    std::size_t empty_label_instances = 0;
};

// Counters for irregularities that are tolerated while parsing.
struct ParseStats {
    std::size_t duplicate_labels_removed = 0;
    std::size_t zero_values_dropped = 0;
    std::size_t empty_label_instances = 0;
};

// Text format: header "N D L", then N lines of
//   "l1,l2,...,lm i1:v1 i2:v2 ..."
// The label list may be empty, in which case the line starts with a space.
// Duplicate feature indices are an error; duplicate labels are removed and
// counted. Throws DataError carrying the offending 1-based line number.
Dataset parse_dataset(std::istream& in, ParseStats* stats = nullptr);
Dataset load_dataset(const std::string& path, ParseStats* stats = nullptr);

void serialize_dataset(const Dataset& data, std::ostream& out);
void save_dataset(const Dataset& data, const std::string& path);

DatasetStats compute_stats(const Dataset& data);

// Feature values used by synth_dataset. The magnitudes are deliberately
// large: the attention classifiers move their parameters proportionally to
// the feature values, and these levels let the stock training settings reach
// high accuracy on the fixture within their small step budget. The sink
// (shared by every instance) carries the bigger weight so its per-feature
// score separates quickly from the beacons', which is what gives the
// attention weights a clean signal to latch onto. The ratio is kept moderate
// on purpose: models over few candidate groups take proportionally larger
// steps than the wide flat model, and a heavier sink makes those overshoot.
constexpr double kSynthBeaconValue = 36.0;
constexpr double kSynthSinkValue = 54.0;

// Deterministic clustered fixture generator. Cluster c owns label ids
// [c*lpc, (c+1)*lpc), and every one of its instances carries that whole label
// block. Features: id c is the cluster's beacon and id num_clusters is a sink
// shared by all instances, so D = num_clusters + 1 and each instance has
// exactly two feature entries. `noise` is the probability that an instance's
// beacon id is redrawn uniformly among all beacons (so at noise 0 the
// clusters are perfectly separable and the output does not depend on the
// seed). Instances are emitted cluster-major.
Dataset synth_dataset(std::uint32_t num_clusters, std::uint32_t instances_per_cluster,
                      std::uint32_t labels_per_cluster, double noise, std::uint64_t seed);

}  // namespace haxml
