#include "haxml/inference.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include "haxml/errors.hpp"
#include "haxml/numfmt.hpp"

namespace haxml {

namespace {

bool score_order(const ScoredLabel& a, const ScoredLabel& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.label < b.label;
}

// All labels surviving the beam, ranked; truncation to m happens in the
// callers so the ensemble can average full lists.
std::vector<ScoredLabel> predict_full(const HModel& hm, const SparseVector& features,
                                      const InferConfig& cfg, GroupTrace* trace) {
    if (hm.models.empty()) throw DataError("model has no levels");
    if (cfg.beam_width == 0 || cfg.top_labels == 0) {
        throw DataError("beam width and output depth must be positive");
    }
    if (features.empty()) throw DataError("instance has no features");

    std::vector<std::uint32_t> eval(hm.models[0].num_labels);
    std::iota(eval.begin(), eval.end(), 0u);
    ForwardTrace tr = forward(hm.models[0], features, eval, cfg.prob_clamp);
    std::vector<ScoredLabel> beam(eval.size());
    for (std::size_t r = 0; r < eval.size(); ++r) beam[r] = {eval[r], tr.probs[r]};

    for (std::size_t d = 1; d < hm.models.size(); ++d) {
        std::sort(beam.begin(), beam.end(), score_order);
        if (beam.size() > cfg.beam_width) beam.resize(cfg.beam_width);
        if (trace) trace->push_back(beam);

        const Partition& part = hm.tree.levels[d - 1];
        std::vector<std::pair<std::uint32_t, double>> kids;
        for (const ScoredLabel& b : beam) {
            if (b.label >= part.members.size()) {
                throw DataError("model/tree inconsistent at level " + std::to_string(d - 1));
            }
            for (std::uint32_t m : part.members[b.label]) kids.push_back({m, b.score});
        }
        std::sort(kids.begin(), kids.end());
        eval.resize(kids.size());
        for (std::size_t i = 0; i < kids.size(); ++i) eval[i] = kids[i].first;
        tr = forward(hm.models[d], features, eval, cfg.prob_clamp);
        beam.resize(kids.size());
        for (std::size_t i = 0; i < kids.size(); ++i) {
            beam[i] = {kids[i].first, chain_score(kids[i].second, tr.probs[i])};
        }
    }
    std::sort(beam.begin(), beam.end(), score_order);
    return beam;
}

std::vector<ScoredLabel> predict_ensemble_full(const EnsembleModel& em, const SparseVector& features,
                                               const InferConfig& cfg, GroupTrace* trace) {
    if (em.trees.empty()) throw DataError("ensemble has no trees");
    if (em.trees.size() == 1) return predict_full(em.trees[0], features, cfg, trace);

    std::map<std::uint32_t, double> sum;
    for (const HModel& hm : em.trees) {
        for (const ScoredLabel& sl : predict_full(hm, features, cfg, trace)) {
            sum[sl.label] += sl.score;
        }
    }
    std::vector<ScoredLabel> out;
    out.reserve(sum.size());
    const double t = static_cast<double>(em.trees.size());
    for (const auto& [label, score] : sum) out.push_back({label, score / t});
    std::sort(out.begin(), out.end(), score_order);
    return out;
}

}  // namespace

RankedPrediction predict_one(const HModel& model, const SparseVector& features,
                             const InferConfig& cfg, GroupTrace* trace) {
    RankedPrediction rp;
    rp.items = predict_full(model, features, cfg, trace);
    if (rp.items.size() > cfg.top_labels) rp.items.resize(cfg.top_labels);
    return rp;
}

RankedPrediction predict_one(const EnsembleModel& model, const SparseVector& features,
                             const InferConfig& cfg) {
    RankedPrediction rp;
    rp.items = predict_ensemble_full(model, features, cfg, nullptr);
    if (rp.items.size() > cfg.top_labels) rp.items.resize(cfg.top_labels);
    return rp;
}

std::vector<RankedPrediction> predict_batch(const EnsembleModel& model, const Dataset& data,
                                            const InferConfig& cfg, unsigned num_threads,
                                            std::vector<GroupTrace>* traces) {
    const std::size_t n = data.instances.size();
    std::vector<RankedPrediction> out(n);
    if (traces) traces->assign(n, {});

    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            out[i].instance_id = static_cast<std::uint32_t>(i);
            GroupTrace* tp = traces ? &(*traces)[i] : nullptr;
            try {
                auto full = predict_ensemble_full(model, data.instances[i].features, cfg, tp);
                if (full.size() > cfg.top_labels) full.resize(cfg.top_labels);
                out[i].items = std::move(full);
            } catch (const DataError&) {
                out[i].items.clear();
                out[i].failed = true;
            }
        }
    };

    if (num_threads <= 1 || n < 2) {
        work(0, n);
        return out;
    }
    const std::size_t workers = std::min<std::size_t>(num_threads, n);
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        threads.emplace_back([&, lo, hi, w] {
            try {
                work(lo, hi);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (std::thread& t : threads) t.join();
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

void write_predictions(std::ostream& out, const std::vector<RankedPrediction>& preds) {
    std::string buf;
    buf.reserve(1 << 16);
    for (const RankedPrediction& p : preds) {
        for (std::size_t i = 0; i < p.items.size(); ++i) {
            if (i) buf += '\t';
            buf += std::to_string(p.items[i].label);
            buf += ':';
            append_double(buf, p.items[i].score);
        }
        buf += '\n';
        if (buf.size() > (1 << 16)) {
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            buf.clear();
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_predictions(const std::string& path, const std::vector<RankedPrediction>& preds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open file for writing: " + path);
    write_predictions(out, preds);
    if (!out) throw DataError("failed writing file: " + path);
}

std::vector<RankedPrediction> read_predictions(std::istream& in) {
    std::vector<RankedPrediction> out;
    std::string buf;
    std::size_t lineno = 0;
    while (std::getline(in, buf)) {
        ++lineno;
        std::string_view line(buf);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        RankedPrediction rp;
        rp.instance_id = static_cast<std::uint32_t>(out.size());
        std::size_t pos = 0;
        while (pos < line.size()) {
            std::size_t tab = line.find('\t', pos);
            if (tab == std::string_view::npos) tab = line.size();
            std::string_view tok = line.substr(pos, tab - pos);
            pos = tab + 1;
            if (tok.empty()) throw DataError("empty prediction entry", lineno);
            const std::size_t colon = tok.find(':');
            if (colon == std::string_view::npos) {
                throw DataError("malformed prediction '" + std::string(tok) + "'", lineno);
            }
            std::uint32_t label = 0;
            {
                std::string_view t = tok.substr(0, colon);
                auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), label);
                if (ec != std::errc{} || p != t.data() + t.size() || t.empty()) {
                    throw DataError("invalid prediction label '" + std::string(t) + "'", lineno);
                }
            }
            double score = 0.0;
            {
                std::string_view t = tok.substr(colon + 1);
                auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), score);
                if (ec != std::errc{} || p != t.data() + t.size() || t.empty()) {
                    throw DataError("invalid prediction score '" + std::string(t) + "'", lineno);
                }
            }
            rp.items.push_back({label, score});
        }
        out.push_back(std::move(rp));
    }
    return out;
}

std::vector<RankedPrediction> read_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return read_predictions(in);
}

}  // namespace haxml
