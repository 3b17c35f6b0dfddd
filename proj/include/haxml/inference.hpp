#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "haxml/dataset.hpp"
#include "haxml/pipeline.hpp"
#include "haxml/sparse.hpp"

namespace haxml {

struct InferConfig {
    std::uint32_t beam_width = 10;  // k: groups expanded per level
    std::uint32_t top_labels = 5;   // m: labels emitted per instance
    double prob_clamp = kDefaultProbClamp;
};

struct ScoredLabel {
    std::uint32_t label = 0;
    double score = 0.0;

    friend bool operator==(const ScoredLabel&, const ScoredLabel&) = default;
};

struct RankedPrediction {
    std::uint32_t instance_id = 0;
    std::vector<ScoredLabel> items;  // descending score, ties by ascending label id
    bool failed = false;             // instance could not be scored (e.g. no features)
};

// Per-level beam contents (group id, accumulated probability), topmost level
// first; filled by predict_one when requested, for diagnostics.
using GroupTrace = std::vector<std::vector<ScoredLabel>>;

// A label's path probability is the product of the conditional probabilities
// along its path.
inline double chain_score(double parent, double conditional) { return parent * conditional; }

// Score the top level over all its groups, keep the best beam_width, expand
// their members level by level (re-selecting the best beam_width by
// accumulated score before each expansion), and finally rank the surviving
// labels by accumulated score. A beam_width of at least the group count
// makes this identical to exhaustive chain-rule scoring. Throws DataError on
// an instance with no features.
RankedPrediction predict_one(const HModel& model, const SparseVector& features,
                             const InferConfig& cfg, GroupTrace* trace = nullptr);

// Ensemble prediction: a label's score is the mean over members of its
// chain-rule score, counting 0 for members whose beam never surfaced it.
RankedPrediction predict_one(const EnsembleModel& model, const SparseVector& features,
                             const InferConfig& cfg);

// Elementwise predict_one over the dataset, output in instance order. An
// instance that cannot be scored yields an empty, failed prediction instead
// of aborting the batch. num_threads > 1 splits the work by index ranges;
// the output is identical to the sequential run.
std::vector<RankedPrediction> predict_batch(const EnsembleModel& model, const Dataset& data,
                                            const InferConfig& cfg, unsigned num_threads = 1,
                                            std::vector<GroupTrace>* traces = nullptr);

// One line per prediction: "label:score" pairs, tab-separated, descending
// score. Scores use shortest round-trip formatting, so files are
// byte-reproducible. A failed prediction writes an empty line.
void write_predictions(std::ostream& out, const std::vector<RankedPrediction>& preds);
void write_predictions(const std::string& path, const std::vector<RankedPrediction>& preds);
std::vector<RankedPrediction> read_predictions(std::istream& in);
std::vector<RankedPrediction> read_predictions(const std::string& path);

}  // namespace haxml
