#include "haxml/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "haxml/errors.hpp"
#include "haxml/numfmt.hpp"
#include "haxml/rng.hpp"

namespace haxml {

namespace {

std::string_view trim_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

std::uint64_t parse_uint(std::string_view tok, std::size_t line, const char* what) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size() || tok.empty()) {
        throw DataError("invalid " + std::string(what) + " '" + std::string(tok) + "'", line);
    }
    return v;
}

double parse_value(std::string_view tok, std::size_t line) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size() || tok.empty()) {
        throw DataError("invalid feature value '" + std::string(tok) + "'", line);
    }
    if (!std::isfinite(v)) {
        throw DataError("non-finite feature value '" + std::string(tok) + "'", line);
    }
    return v;
}

}  // namespace

Dataset parse_dataset(std::istream& in, ParseStats* stats) {
    ParseStats local;
    std::string buf;
    std::size_t lineno = 0;

    if (!std::getline(in, buf)) throw DataError("missing header", 1);
    ++lineno;
    std::string_view header = trim_cr(buf);
    std::uint64_t dims[3];
    std::size_t tok_count = 0;
    std::size_t pos = 0;
    while (pos < header.size()) {
        std::size_t sp = header.find(' ', pos);
        if (sp == std::string_view::npos) sp = header.size();
        std::string_view tok = header.substr(pos, sp - pos);
        if (!tok.empty()) {
            if (tok_count == 3) throw DataError("header must be 'N D L'", 1);
            dims[tok_count++] = parse_uint(tok, 1, "header field");
        }
        pos = sp + 1;
    }
    if (tok_count != 3) throw DataError("header must be 'N D L'", 1);
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0) {
        throw DataError("header values must be positive", 1);
    }
    if (dims[1] > UINT32_MAX || dims[2] > UINT32_MAX) {
        throw DataError("dimension too large", 1);
    }
    const std::uint64_t n = dims[0];

    Dataset data;
    data.num_features = static_cast<std::uint32_t>(dims[1]);
    data.num_labels = static_cast<std::uint32_t>(dims[2]);
    data.instances.reserve(n);

    for (std::uint64_t i = 0; i < n; ++i) {
        if (!std::getline(in, buf)) {
            throw DataError("expected " + std::to_string(n) + " instance lines, found " +
                                std::to_string(i),
                            lineno + 1);
        }
        ++lineno;
        std::string_view line = trim_cr(buf);

        Instance inst;
        std::size_t sp = line.find(' ');
        std::string_view label_field = line.substr(0, sp == std::string_view::npos ? line.size() : sp);
        std::string_view rest = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);

        if (!label_field.empty()) {
            std::size_t lp = 0;
            while (lp <= label_field.size()) {
                std::size_t comma = label_field.find(',', lp);
                if (comma == std::string_view::npos) comma = label_field.size();
                std::uint64_t id = parse_uint(label_field.substr(lp, comma - lp), lineno, "label id");
                if (id >= data.num_labels) {
                    throw DataError("label id " + std::to_string(id) + " out of range (L=" +
                                        std::to_string(data.num_labels) + ")",
                                    lineno);
                }
                inst.labels.push_back(static_cast<std::uint32_t>(id));
                if (comma == label_field.size()) break;
                lp = comma + 1;
            }
            std::sort(inst.labels.begin(), inst.labels.end());
            auto last = std::unique(inst.labels.begin(), inst.labels.end());
            local.duplicate_labels_removed +=
                static_cast<std::size_t>(inst.labels.end() - last);
            inst.labels.erase(last, inst.labels.end());
        }
        if (inst.labels.empty()) ++local.empty_label_instances;

        std::size_t fp = 0;
        while (fp < rest.size()) {
            std::size_t fsp = rest.find(' ', fp);
            if (fsp == std::string_view::npos) fsp = rest.size();
            std::string_view tok = rest.substr(fp, fsp - fp);
            fp = fsp + 1;
            if (tok.empty()) continue;
            std::size_t colon = tok.find(':');
            if (colon == std::string_view::npos) {
                throw DataError("malformed feature pair '" + std::string(tok) + "'", lineno);
            }
            std::uint64_t idx = parse_uint(tok.substr(0, colon), lineno, "feature index");
            if (idx >= data.num_features) {
                throw DataError("feature index " + std::to_string(idx) + " out of range (D=" +
                                    std::to_string(data.num_features) + ")",
                                lineno);
            }
            double value = parse_value(tok.substr(colon + 1), lineno);
            if (value == 0.0) {
                ++local.zero_values_dropped;
                continue;
            }
            inst.features.entries.push_back({static_cast<std::uint32_t>(idx), value});
        }
        std::stable_sort(inst.features.entries.begin(), inst.features.entries.end(),
                         [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
        for (std::size_t e = 1; e < inst.features.entries.size(); ++e) {
            if (inst.features.entries[e].index == inst.features.entries[e - 1].index) {
                throw DataError("duplicate feature index " +
                                    std::to_string(inst.features.entries[e].index),
                                lineno);
            }
        }
        data.instances.push_back(std::move(inst));
    }

    while (std::getline(in, buf)) {
        ++lineno;
        if (!trim_cr(buf).empty()) throw DataError("unexpected extra line", lineno);
    }

    if (stats) *stats = local;
    return data;
}

Dataset load_dataset(const std::string& path, ParseStats* stats) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return parse_dataset(in, stats);
}

void serialize_dataset(const Dataset& data, std::ostream& out) {
    std::string buf;
    buf.reserve(1 << 16);
    buf += std::to_string(data.instances.size());
    buf += ' ';
    buf += std::to_string(data.num_features);
    buf += ' ';
    buf += std::to_string(data.num_labels);
    buf += '\n';
    for (const Instance& inst : data.instances) {
        for (std::size_t i = 0; i < inst.labels.size(); ++i) {
            if (i) buf += ',';
            buf += std::to_string(inst.labels[i]);
        }
        for (const SparseEntry& e : inst.features.entries) {
            buf += ' ';
            buf += std::to_string(e.index);
            buf += ':';
            append_double(buf, e.value);
        }
        buf += '\n';
        if (buf.size() > (1 << 16)) {
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            buf.clear();
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void save_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open file for writing: " + path);
    serialize_dataset(data, out);
    if (!out) throw DataError("failed writing file: " + path);
}

DatasetStats compute_stats(const Dataset& data) {
    if (data.instances.empty()) throw DataError("empty dataset");
    DatasetStats s;
    s.n = data.instances.size();
    s.d = data.num_features;
    s.l = data.num_labels;
    std::size_t total_labels = 0;
    for (const Instance& inst : data.instances) {
        total_labels += inst.labels.size();
        if (inst.labels.empty()) ++s.empty_label_instances;
    }
    s.avg_labels_per_instance = static_cast<double>(total_labels) / static_cast<double>(s.n);
    s.avg_instances_per_label =
        s.l ? static_cast<double>(total_labels) / static_cast<double>(s.l) : 0.0;
    return s;
}

Dataset synth_dataset(std::uint32_t num_clusters, std::uint32_t instances_per_cluster,
                      std::uint32_t labels_per_cluster, double noise, std::uint64_t seed) {
    if (num_clusters == 0 || instances_per_cluster == 0 || labels_per_cluster == 0) {
        throw DataError("synth_dataset counts must be positive");
    }
    Dataset data;
    data.num_features = num_clusters + 1;
    data.num_labels = num_clusters * labels_per_cluster;
    data.instances.reserve(static_cast<std::size_t>(num_clusters) * instances_per_cluster);

    const std::uint32_t sink = num_clusters;
    Rng rng(seed);
    for (std::uint32_t c = 0; c < num_clusters; ++c) {
        const std::uint32_t label_base = c * labels_per_cluster;
        for (std::uint32_t k = 0; k < instances_per_cluster; ++k) {
            Instance inst;
            for (std::uint32_t j = 0; j < labels_per_cluster; ++j) {
                inst.labels.push_back(label_base + j);
            }
            std::uint32_t beacon = c;
            if (noise > 0.0 && uniform_real(rng, 0.0, 1.0) < noise) {
                beacon = static_cast<std::uint32_t>(uniform_index(rng, num_clusters));
            }
            inst.features.entries = {{beacon, kSynthBeaconValue}, {sink, kSynthSinkValue}};
            data.instances.push_back(std::move(inst));
        }
    }
    return data;
}

}  // namespace haxml
