#include "haxml/attnmodel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "haxml/errors.hpp"
#include "haxml/rng.hpp"

namespace haxml {

static_assert(std::endian::native == std::endian::little,
              "model files are raw little-endian; big-endian hosts are unsupported");

std::vector<double> stable_softmax(std::span<const double> scores) {
    std::vector<double> out(scores.size());
    if (scores.empty()) return out;
    const double m = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

ForwardTrace forward(const AttnModel& model, const SparseVector& features,
                     std::span<const std::uint32_t> eval_labels, double prob_clamp) {
    if (features.empty()) throw DataError("instance has no features");
    const std::size_t T = features.nnz();
    const std::size_t n = model.embed_dim;
    const std::size_t m = eval_labels.size();

    ForwardTrace tr;
    tr.labels.assign(eval_labels.begin(), eval_labels.end());
    for (std::size_t r = 0; r < m; ++r) {
        if (tr.labels[r] >= model.num_labels) {
            throw DataError("eval label " + std::to_string(tr.labels[r]) + " out of range");
        }
        if (r && tr.labels[r] <= tr.labels[r - 1]) {
            throw DataError("eval labels must be sorted and unique");
        }
    }

    tr.contexts = Mat(T, n);
    for (std::size_t i = 0; i < T; ++i) {
        const SparseEntry& e = features.entries[i];
        if (e.index >= model.num_features) {
            throw DataError("feature index " + std::to_string(e.index) + " out of range for model");
        }
        const double* row = model.embed[e.index];
        double* ctx = tr.contexts[i];
        for (std::size_t k = 0; k < n; ++k) ctx[k] = e.value * row[k];
    }

    tr.alphas = Mat(m, T);
    tr.mixed = Mat(m, n);
    tr.probs.resize(m);
    std::vector<double> scores(T);
    for (std::size_t r = 0; r < m; ++r) {
        const double* w = model.attn[tr.labels[r]];
        for (std::size_t i = 0; i < T; ++i) scores[i] = dot(tr.contexts[i], w, n);
        const std::vector<double> alpha = stable_softmax(scores);
        double* arow = tr.alphas[r];
        double* mrow = tr.mixed[r];
        for (std::size_t i = 0; i < T; ++i) {
            arow[i] = alpha[i];
            axpy(alpha[i], tr.contexts[i], mrow, n);
        }
        const double z = dot(model.head_u.data(), mrow, n) + model.head_b[tr.labels[r]];
        const double p = 1.0 / (1.0 + std::exp(-z));
        tr.probs[r] = std::min(std::max(p, prob_clamp), 1.0 - prob_clamp);
    }
    return tr;
}

namespace {

// Per-instance mean BCE over the candidate set; pi walks the sorted
// positives in lockstep with the candidate list.
double instance_loss(const ForwardTrace& tr, const CandidateSet& cs) {
    double s = 0.0;
    std::size_t pi = 0;
    for (std::size_t r = 0; r < tr.labels.size(); ++r) {
        const bool y = pi < cs.positives.size() && cs.positives[pi] == tr.labels[r];
        if (y) ++pi;
        const double p = tr.probs[r];
        s += y ? -std::log(p) : -std::log(1.0 - p);
    }
    if (pi != cs.positives.size()) throw DataError("positives are not a subset of the candidates");
    return s / static_cast<double>(cs.candidates.size());
}

}  // namespace

double batch_loss(std::span<const ForwardTrace> traces, std::span<const CandidateSet> cands) {
    if (traces.size() != cands.size()) throw DataError("traces/candidate-sets size mismatch");
    if (traces.empty()) throw DataError("empty batch");
    double total = 0.0;
    for (std::size_t b = 0; b < traces.size(); ++b) {
        if (cands[b].candidates.empty()) throw DataError("empty candidate set");
        if (traces[b].labels != cands[b].candidates) {
            throw DataError("trace was not evaluated on its candidate set");
        }
        total += instance_loss(traces[b], cands[b]);
    }
    return total / static_cast<double>(traces.size());
}

Gradients backward(const AttnModel& model, std::span<const BatchItem> batch, double prob_clamp,
                   double* loss_out) {
    if (batch.empty()) throw DataError("empty batch");
    const std::size_t n = model.embed_dim;
    const double B = static_cast<double>(batch.size());

    Gradients g;
    g.embed = Mat(model.num_features, n);
    g.head_u.assign(n, 0.0);
    g.head_b.assign(model.num_labels, 0.0);
    std::vector<char> touched(model.num_features, 0);

    double total_loss = 0.0;
    std::vector<double> dH, dalpha, dscore;
    for (const BatchItem& item : batch) {
        const SparseVector& x = *item.features;
        const CandidateSet& cs = *item.cand;
        if (cs.candidates.empty()) throw DataError("empty candidate set");
        const ForwardTrace tr = forward(model, x, cs.candidates, prob_clamp);
        total_loss += instance_loss(tr, cs);

        const std::size_t T = x.nnz();
        const double W = 1.0 / (B * static_cast<double>(cs.candidates.size()));
        dH.assign(T * n, 0.0);
        dalpha.resize(T);
        dscore.resize(T);

        std::size_t pi = 0;
        for (std::size_t r = 0; r < tr.labels.size(); ++r) {
            const std::uint32_t j = tr.labels[r];
            const bool y = pi < cs.positives.size() && cs.positives[pi] == j;
            if (y) ++pi;
            const double p = tr.probs[r];
            // A probability pinned at the clamp sits on the flat part of the
            // clamped objective: zero gradient, matching finite differences.
            if (p <= prob_clamp || p >= 1.0 - prob_clamp) continue;
            const double gz = (p - (y ? 1.0 : 0.0)) * W;

            g.head_b[j] += gz;
            const double* mrow = tr.mixed[r];
            axpy(gz, mrow, g.head_u.data(), n);

            const double* arow = tr.alphas[r];
            double asum = 0.0;
            for (std::size_t i = 0; i < T; ++i) {
                dalpha[i] = gz * dot(model.head_u.data(), tr.contexts[i], n);
                asum += arow[i] * dalpha[i];
            }
            for (std::size_t i = 0; i < T; ++i) dscore[i] = arow[i] * (dalpha[i] - asum);

            auto [it, fresh] = g.attn_rows.try_emplace(j, std::vector<double>(n, 0.0));
            double* dw = it->second.data();
            const double* wrow = model.attn[j];
            for (std::size_t i = 0; i < T; ++i) {
                axpy(dscore[i], tr.contexts[i], dw, n);
                double* dhrow = dH.data() + i * n;
                axpy(dscore[i], wrow, dhrow, n);
                axpy(gz * arow[i], model.head_u.data(), dhrow, n);
            }
        }

        for (std::size_t i = 0; i < T; ++i) {
            const SparseEntry& e = x.entries[i];
            axpy(e.value, dH.data() + i * n, g.embed[e.index], n);
            touched[e.index] = 1;
        }
    }
    for (std::uint32_t f = 0; f < model.num_features; ++f) {
        if (touched[f]) g.touched_features.push_back(f);
    }
    if (loss_out) *loss_out = total_loss / B;
    return g;
}

AttnModel init_model(std::uint32_t num_features, std::uint32_t num_labels, const TrainConfig& cfg) {
    if (cfg.embed_dim == 0) throw DataError("embed_dim must be positive");
    AttnModel m;
    m.num_features = num_features;
    m.num_labels = num_labels;
    m.embed_dim = cfg.embed_dim;
    m.embed = Mat(num_features, cfg.embed_dim);
    m.attn = Mat(num_labels, cfg.embed_dim);
    m.head_u.assign(cfg.embed_dim, 0.0);
    m.head_b.assign(num_labels, 0.0);
    Rng rng(cfg.seed);
    const double s = cfg.init_scale;
    for (double& v : m.embed.a) v = uniform_real(rng, -s, s);
    for (double& v : m.attn.a) v = uniform_real(rng, -s, s);
    for (double& v : m.head_u) v = uniform_real(rng, -s, s);
    return m;
}

namespace {

bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace

AttnModel train(const Dataset& data, std::span<const std::uint32_t> instance_ids,
                std::span<const CandidateSet> cands, std::uint32_t num_labels,
                const TrainConfig& cfg, std::vector<double>* epoch_losses) {
    if (instance_ids.size() != cands.size()) throw DataError("training view size mismatch");
    if (instance_ids.empty()) throw DataError("empty training view");
    if (cfg.batch_size == 0) throw DataError("batch_size must be positive");
    for (std::size_t v = 0; v < instance_ids.size(); ++v) {
        if (instance_ids[v] >= data.instances.size()) {
            throw DataError("training view references instance " + std::to_string(instance_ids[v]) +
                            " beyond dataset");
        }
        if (data.instances[instance_ids[v]].features.empty()) {
            throw DataError("training instance " + std::to_string(instance_ids[v]) +
                            " has no features");
        }
        const CandidateSet& cs = cands[v];
        if (cs.candidates.empty()) throw DataError("empty candidate set in training view");
        for (std::size_t i = 0; i < cs.candidates.size(); ++i) {
            if (cs.candidates[i] >= num_labels) throw DataError("candidate label out of range");
            if (i && cs.candidates[i] <= cs.candidates[i - 1]) {
                throw DataError("candidate set must be sorted and unique");
            }
        }
        std::size_t pi = 0;
        for (std::uint32_t c : cs.candidates) {
            if (pi < cs.positives.size() && cs.positives[pi] == c) ++pi;
        }
        if (pi != cs.positives.size()) {
            throw DataError("positives are not a sorted subset of the candidates");
        }
    }

    AttnModel model = init_model(data.num_features, num_labels, cfg);
    if (cfg.epochs == 0) return model;

    std::vector<std::uint32_t> order(instance_ids.size());
    std::iota(order.begin(), order.end(), 0u);
    Rng shuffle_rng(mix_seed(cfg.seed, 0x51));
    std::vector<BatchItem> items;
    const std::size_t total = order.size();

    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_seeded(order, shuffle_rng);
        double epoch_sum = 0.0;
        for (std::size_t start = 0; start < total; start += cfg.batch_size) {
            const std::size_t end = std::min(total, start + cfg.batch_size);
            items.clear();
            for (std::size_t v = start; v < end; ++v) {
                const std::uint32_t vi = order[v];
                items.push_back({&data.instances[instance_ids[vi]].features, &cands[vi]});
            }
            double bloss = 0.0;
            const Gradients g = backward(model, items, cfg.prob_clamp, &bloss);
            if (!std::isfinite(bloss)) {
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch starting " +
                                   std::to_string(start));
            }
            const double lr = cfg.learning_rate;
            const std::size_t n = model.embed_dim;
            for (std::uint32_t f : g.touched_features) axpy(-lr, g.embed[f], model.embed[f], n);
            for (const auto& [j, dw] : g.attn_rows) axpy(-lr, dw.data(), model.attn[j], n);
            axpy(-lr, g.head_u.data(), model.head_u.data(), n);
            for (std::uint32_t j = 0; j < num_labels; ++j) model.head_b[j] -= lr * g.head_b[j];
            if (!all_finite(model.embed.a) || !all_finite(model.attn.a) ||
                !all_finite(model.head_u) || !all_finite(model.head_b)) {
                throw NumericError("training diverged: non-finite parameter after epoch " +
                                   std::to_string(epoch) + ", batch starting " +
                                   std::to_string(start));
            }
            epoch_sum += bloss * static_cast<double>(end - start);
        }
        if (epoch_losses) epoch_losses->push_back(epoch_sum / static_cast<double>(total));
    }
    return model;
}

namespace {

constexpr char kModelMagic[8] = {'H', 'A', 'X', 'M', 'O', 'D', 'L', '\x01'};

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw DataError("truncated model file");
    return v;
}

void write_doubles(std::ostream& out, const double* p, std::size_t count) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::istream& in, double* p, std::size_t count) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw DataError("truncated model file");
}

}  // namespace

void save_model(const AttnModel& model, std::ostream& out) {
    out.write(kModelMagic, sizeof(kModelMagic));
    write_u32(out, model.num_features);
    write_u32(out, model.num_labels);
    write_u32(out, model.embed_dim);
    write_doubles(out, model.embed.a.data(), model.embed.a.size());
    write_doubles(out, model.attn.a.data(), model.attn.a.size());
    write_doubles(out, model.head_u.data(), model.head_u.size());
    write_doubles(out, model.head_b.data(), model.head_b.size());
    if (!out) throw DataError("failed writing model");
}

void save_model(const AttnModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open file for writing: " + path);
    save_model(model, out);
}

AttnModel load_model(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
        throw DataError("not a haxml model file");
    }
    AttnModel m;
    m.num_features = read_u32(in);
    m.num_labels = read_u32(in);
    m.embed_dim = read_u32(in);
    if (m.embed_dim == 0) throw DataError("model file has zero embed_dim");
    const std::uint64_t cells = (static_cast<std::uint64_t>(m.num_features) + m.num_labels) *
                                m.embed_dim;
    if (cells > (1ULL << 31)) throw DataError("model file dimensions implausibly large");
    m.embed = Mat(m.num_features, m.embed_dim);
    m.attn = Mat(m.num_labels, m.embed_dim);
    m.head_u.resize(m.embed_dim);
    m.head_b.resize(m.num_labels);
    read_doubles(in, m.embed.a.data(), m.embed.a.size());
    read_doubles(in, m.attn.a.data(), m.attn.a.size());
    read_doubles(in, m.head_u.data(), m.head_u.size());
    read_doubles(in, m.head_b.data(), m.head_b.size());
    if (in.peek() != std::istream::traits_type::eof()) {
        throw DataError("trailing bytes in model file");
    }
    return m;
}

AttnModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    return load_model(in);
}

}  // namespace haxml
