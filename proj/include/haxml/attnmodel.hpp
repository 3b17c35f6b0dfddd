#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "haxml/dataset.hpp"
#include "haxml/mat.hpp"
#include "haxml/sparse.hpp"

namespace haxml {

constexpr double kDefaultProbClamp = 1e-7;

// One attention classifier: per-feature context embeddings, one attention
// vector per label, and a shared linear head with per-label bias. The same
// model type serves every level of the hierarchy; num_labels is the size of
// whatever label space the level scores.
struct AttnModel {
    std::uint32_t num_features = 0;  // D
    std::uint32_t num_labels = 0;    // L'
    std::uint32_t embed_dim = 0;     // n
    Mat embed;                       // D x n
    Mat attn;                        // L' x n
    std::vector<double> head_u;      // n
    std::vector<double> head_b;      // L'

    friend bool operator==(const AttnModel&, const AttnModel&) = default;
};

// Everything the forward pass computed for one input, per evaluated label.
struct ForwardTrace {
    std::vector<std::uint32_t> labels;  // evaluated label ids, ascending
    Mat contexts;                       // T x n
    Mat alphas;                         // |labels| x T, rows sum to 1
    Mat mixed;                          // |labels| x n
    std::vector<double> probs;          // |labels|, clamped into (0,1)
};

struct TrainConfig {
    std::uint32_t embed_dim = 32;
    double learning_rate = 0.05;
    std::uint32_t epochs = 20;
    std::uint32_t batch_size = 32;
    double init_scale = 0.1;
    double prob_clamp = 1e-7;
    std::uint64_t seed = 42;
};

// The labels one instance is scored on during training, and which of them
// are true. positives is a sorted subset of candidates.
struct CandidateSet {
    std::vector<std::uint32_t> candidates;
    std::vector<std::uint32_t> positives;

    friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

std::vector<double> stable_softmax(std::span<const double> scores);

// Context i is value_i * embed[feature_i]; attention weights via softmax of
// h_i . w_j over i; prob_j = sigmoid(u . m_j + b_j) clamped to
// [prob_clamp, 1 - prob_clamp]. eval_labels must be sorted and unique.
ForwardTrace forward(const AttnModel& model, const SparseVector& features,
                     std::span<const std::uint32_t> eval_labels,
                     double prob_clamp = kDefaultProbClamp);

// Mean over instances of the mean-over-candidates binary cross entropy.
// Each trace must have been evaluated on exactly its candidate set.
double batch_loss(std::span<const ForwardTrace> traces, std::span<const CandidateSet> cands);

struct Gradients {
    Mat embed;                                              // D x n
    std::vector<std::uint32_t> touched_features;            // rows of embed with nonzero gradient
    std::map<std::uint32_t, std::vector<double>> attn_rows; // only labels in some candidate set
    std::vector<double> head_u;                             // n
    std::vector<double> head_b;                             // L', zero for untouched labels
};

struct BatchItem {
    const SparseVector* features = nullptr;
    const CandidateSet* cand = nullptr;
};

// Exact gradients of the clamped batch loss. A probability that saturated
// past the clamp sits on the flat part of the objective and contributes a
// zero gradient.
Gradients backward(const AttnModel& model, std::span<const BatchItem> batch,
                   double prob_clamp = kDefaultProbClamp, double* loss_out = nullptr);

AttnModel init_model(std::uint32_t num_features, std::uint32_t num_labels, const TrainConfig& cfg);

// Mini-batch SGD with seeded shuffling. instance_ids and cands are aligned
// and define the training view; every view entry must have a non-empty
// candidate set with positives a subset of candidates. epoch_losses, when
// given, receives the mean training loss of each epoch.
AttnModel train(const Dataset& data, std::span<const std::uint32_t> instance_ids,
                std::span<const CandidateSet> cands, std::uint32_t num_labels,
                const TrainConfig& cfg, std::vector<double>* epoch_losses = nullptr);

// Binary container: 8-byte magic "HAXMODL\x01", then u32 D, L', n, then
// embed, attn, head_u, head_b as row-major little-endian doubles.
void save_model(const AttnModel& model, std::ostream& out);
void save_model(const AttnModel& model, const std::string& path);
AttnModel load_model(std::istream& in);
AttnModel load_model(const std::string& path);

}  // namespace haxml
