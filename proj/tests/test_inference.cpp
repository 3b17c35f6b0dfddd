#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "haxml/errors.hpp"
#include "haxml/inference.hpp"

using namespace haxml;

namespace {

AttnModel zero_model(std::uint32_t d, std::uint32_t l, std::uint32_t n) {
    AttnModel m;
    m.num_features = d;
    m.num_labels = l;
    m.embed_dim = n;
    m.embed = Mat(d, n);
    m.attn = Mat(l, n);
    m.head_u.assign(n, 0.0);
    m.head_b.assign(l, 0.0);
    return m;
}

SparseVector sv(std::vector<SparseEntry> entries) {
    SparseVector v;
    v.entries = std::move(entries);
    return v;
}

LabelTree pair_tree() {
    Partition p;
    p.num_groups = 2;
    p.group_of = {0, 1, 0, 1};
    p.members = {{0, 2}, {1, 3}};
    LabelTree t;
    t.levels.push_back(p);
    return t;
}

// independent chain-rule oracle: group prob times the label's own
// conditional, evaluated one label at a time
std::vector<ScoredLabel> exhaustive_chain(const HModel& hm, const SparseVector& x) {
    const Partition& leaf = hm.tree.levels.back();
    std::vector<std::uint32_t> all_groups(hm.models[0].num_labels);
    for (std::uint32_t g = 0; g < all_groups.size(); ++g) all_groups[g] = g;
    ForwardTrace top = forward(hm.models[0], x, all_groups);
    std::vector<ScoredLabel> out;
    for (std::uint32_t j = 0; j < hm.models.back().num_labels; ++j) {
        std::vector<std::uint32_t> one = {j};
        ForwardTrace cond = forward(hm.models.back(), x, one);
        out.push_back({j, top.probs[leaf.group_of[j]] * cond.probs[0]});
    }
    std::sort(out.begin(), out.end(), [](const ScoredLabel& a, const ScoredLabel& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.label < b.label;
    });
    return out;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("path scores multiply down the chain") {
    CHECK(chain_score(0.5, 0.25) == 0.125);
    CHECK(chain_score(chain_score(0.5, 0.5), 0.5) == 0.125);
    CHECK(chain_score(1.0, 0.7) == 0.7);
    CHECK(chain_score(0.0, 0.9) == 0.0);
}

TEST_CASE("two-stage prediction equals the composed per-label products") {
    TrainConfig cfg;
    cfg.embed_dim = 3;
    cfg.init_scale = 0.6;
    HModel hm;
    hm.tree = pair_tree();
    cfg.seed = 8;
    hm.models.push_back(init_model(3, 2, cfg));
    cfg.seed = 9;
    hm.models.push_back(init_model(3, 4, cfg));
    SparseVector x = sv({{0, 1.5}, {2, 0.5}});

    InferConfig ic;
    ic.beam_width = 2;  // covers both groups: nothing is pruned
    ic.top_labels = 4;
    RankedPrediction rp = predict_one(hm, x, ic);
    auto oracle = exhaustive_chain(hm, x);
    REQUIRE(rp.items.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(rp.items[i].label == oracle[i].label);
        CHECK(rp.items[i].score == doctest::Approx(oracle[i].score).epsilon(1e-14));
    }
    CHECK(std::is_sorted(rp.items.begin(), rp.items.end(),
                         [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; }));
}

TEST_CASE("score ties rank by ascending label id") {
    HModel hm;
    hm.tree = pair_tree();
    hm.models.push_back(zero_model(2, 2, 2));
    hm.models.push_back(zero_model(2, 4, 2));  // every probability is exactly 0.5
    SparseVector x = sv({{0, 1.0}});
    InferConfig ic;
    ic.beam_width = 2;
    ic.top_labels = 4;
    RankedPrediction rp = predict_one(hm, x, ic);
    REQUIRE(rp.items.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(rp.items[i].label == i);
        CHECK(rp.items[i].score == 0.25);
    }

    ic.beam_width = 1;  // tied groups: the lower group id survives
    RankedPrediction narrow = predict_one(hm, x, ic);
    REQUIRE(narrow.items.size() == 2);
    CHECK(narrow.items[0].label == 0);
    CHECK(narrow.items[1].label == 2);
}

TEST_CASE("a full-width beam reproduces exhaustive chain scoring") {
    Dataset d = synth_dataset(4, 20, 16, 0.0, 7);
    HierarchyConfig cfg;
    cfg.cluster.max_leaf_size = 16;
    TrainConfig tc;
    tc.embed_dim = 8;
    tc.epochs = 2;
    cfg.level_configs = {tc};
    HModel hm = train_tree(d, cfg);
    REQUIRE(hm.tree.levels.back().num_groups == 4);

    InferConfig ic;
    ic.beam_width = 4;
    ic.top_labels = 64;
    for (std::uint32_t i : {0u, 21u, 47u, 79u}) {  // one per cluster
        const SparseVector& x = d.instances[i].features;
        RankedPrediction rp = predict_one(hm, x, ic);
        auto oracle = exhaustive_chain(hm, x);
        REQUIRE(rp.items.size() == oracle.size());
        for (std::size_t r = 0; r < oracle.size(); ++r) {
            CHECK(rp.items[r].label == oracle[r].label);
            CHECK(std::abs(rp.items[r].score - oracle[r].score) <= 1e-12);
        }
    }

    // widths past the group count change nothing
    InferConfig wide = ic;
    wide.beam_width = 99;
    RankedPrediction a = predict_one(hm, d.instances[5].features, ic);
    RankedPrediction b = predict_one(hm, d.instances[5].features, wide);
    CHECK(a.items == b.items);

    // the output depth only truncates the ranking
    InferConfig shallow = ic;
    shallow.top_labels = 3;
    RankedPrediction c = predict_one(hm, d.instances[5].features, shallow);
    REQUIRE(c.items.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) CHECK(c.items[r] == a.items[r]);
}

TEST_CASE("a flat model ranks its raw forward probabilities") {
    TrainConfig cfg;
    cfg.embed_dim = 4;
    cfg.seed = 15;
    cfg.init_scale = 0.5;
    HModel hm;
    hm.models.push_back(init_model(3, 5, cfg));
    SparseVector x = sv({{1, 2.0}, {2, 0.25}});
    std::vector<std::uint32_t> all = {0, 1, 2, 3, 4};
    ForwardTrace tr = forward(hm.models[0], x, all);

    InferConfig ic;
    ic.top_labels = 5;
    RankedPrediction rp = predict_one(hm, x, ic);
    REQUIRE(rp.items.size() == 5);
    std::vector<ScoredLabel> oracle;
    for (std::uint32_t j = 0; j < 5; ++j) oracle.push_back({j, tr.probs[j]});
    std::sort(oracle.begin(), oracle.end(), [](const ScoredLabel& a, const ScoredLabel& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.label < b.label;
    });
    for (std::size_t r = 0; r < 5; ++r) CHECK(rp.items[r] == oracle[r]);
}

TEST_CASE("ensemble scores average member chains, absent labels count zero") {
    HModel a;
    a.tree = pair_tree();
    a.models.push_back(zero_model(1, 2, 1));
    a.models.push_back(zero_model(1, 4, 1));
    a.models[0].head_b = {5.0, -5.0};            // member a picks group 0
    a.models[1].head_b = {1.0, -1.0, 2.0, -2.0};
    HModel b = a;
    b.models[0].head_b = {-5.0, 5.0};            // member b picks group 1

    EnsembleModel em;
    em.trees = {a, b};
    em.num_features = 1;
    em.num_labels = 4;
    SparseVector x = sv({{0, 1.0}});

    std::vector<std::uint32_t> groups = {0, 1};
    const double ga = forward(a.models[0], x, groups).probs[0];
    std::vector<std::uint32_t> all = {0, 1, 2, 3};
    auto cond = forward(a.models[1], x, all).probs;

    InferConfig ic;
    ic.beam_width = 1;  // each member surfaces only its favorite group
    ic.top_labels = 4;
    RankedPrediction rp = predict_one(em, x, ic);
    REQUIRE(rp.items.size() == 4);
    // conditionals sort as sigmoid(2) > sigmoid(1) > sigmoid(-1) > sigmoid(-2)
    CHECK(rp.items[0].label == 2);
    CHECK(rp.items[1].label == 0);
    CHECK(rp.items[2].label == 1);
    CHECK(rp.items[3].label == 3);
    CHECK(rp.items[0].score == doctest::Approx(ga * cond[2] / 2.0).epsilon(1e-14));
    CHECK(rp.items[1].score == doctest::Approx(ga * cond[0] / 2.0).epsilon(1e-14));
    CHECK(rp.items[2].score == doctest::Approx(ga * cond[1] / 2.0).epsilon(1e-14));
    CHECK(rp.items[3].score == doctest::Approx(ga * cond[3] / 2.0).epsilon(1e-14));
}

TEST_CASE("batch prediction is thread-count invariant and survives bad rows") {
    std::istringstream in("5 3 2\n0 0:1 1:0.5\n1\n0 1:1\n1 2:2\n0,1 0:0.5 2:1\n");
    Dataset d = parse_dataset(in);  // instance 1 has labels but no features
    Dataset clean = d;              // training refuses featureless rows, so drop it there
    clean.instances.erase(clean.instances.begin() + 1);
    HierarchyConfig cfg;
    cfg.levels = 1;
    TrainConfig tc;
    tc.embed_dim = 3;
    tc.epochs = 1;
    cfg.level_configs = {tc};
    EnsembleModel em = train_hierarchy(clean, cfg);

    InferConfig ic;
    ic.beam_width = 2;
    ic.top_labels = 2;
    std::vector<GroupTrace> traces;
    auto seq = predict_batch(em, d, ic, 1, &traces);
    auto par = predict_batch(em, d, ic, 4);
    REQUIRE(seq.size() == 5);
    REQUIRE(par.size() == 5);
    CHECK(traces.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(seq[i].instance_id == i);
        CHECK(par[i].instance_id == i);
        CHECK(seq[i].failed == par[i].failed);
        CHECK(seq[i].items == par[i].items);
    }
    CHECK(seq[1].failed);
    CHECK(seq[1].items.empty());
    for (std::size_t i : {0u, 2u, 3u, 4u}) {
        CHECK(!seq[i].failed);
        CHECK(!seq[i].items.empty());
    }
}

TEST_CASE("requesting the beam trace records each group level") {
    Dataset d = synth_dataset(2, 8, 4, 0.0, 3);
    HierarchyConfig cfg;
    cfg.cluster.max_leaf_size = 4;
    TrainConfig tc;
    tc.embed_dim = 4;
    tc.epochs = 1;
    cfg.level_configs = {tc};
    HModel hm = train_tree(d, cfg);

    InferConfig ic;
    ic.beam_width = 1;
    ic.top_labels = 4;
    GroupTrace trace;
    predict_one(hm, d.instances[0].features, ic, &trace);
    REQUIRE(trace.size() == 1);  // one group stage above the labels
    REQUIRE(trace[0].size() == 1);
    CHECK(trace[0][0].label < hm.tree.levels[0].num_groups);
    CHECK(trace[0][0].score > 0.0);
    CHECK(trace[0][0].score < 1.0);
}

TEST_CASE("inference rejects nonsense configurations") {
    HModel hm;
    hm.models.push_back(zero_model(2, 3, 2));
    SparseVector x = sv({{0, 1.0}});
    SparseVector empty;
    InferConfig ic;
    ic.beam_width = 0;
    CHECK_THROWS_AS(predict_one(hm, x, ic), DataError);
    ic.beam_width = 2;
    ic.top_labels = 0;
    CHECK_THROWS_AS(predict_one(hm, x, ic), DataError);
    ic.top_labels = 3;
    CHECK_THROWS_AS(predict_one(hm, empty, ic), DataError);
    EnsembleModel em;
    CHECK_THROWS_AS(predict_one(em, x, ic), DataError);
    HModel hollow;
    CHECK_THROWS_AS(predict_one(hollow, x, ic), DataError);
}

TEST_CASE("prediction files round-trip exactly") {
    std::vector<RankedPrediction> preds(3);
    preds[0].instance_id = 0;
    preds[0].items = {{3, 0.5}, {1, 0.03125}};
    preds[1].instance_id = 1;
    preds[1].failed = true;  // written as an empty line
    preds[2].instance_id = 2;
    preds[2].items = {{0, 1e-7}};

    std::ostringstream out;
    write_predictions(out, preds);
    CHECK(out.str() == "3:0.5\t1:0.03125\n\n0:1e-07\n");

    std::istringstream in(out.str());
    auto back = read_predictions(in);
    REQUIRE(back.size() == 3);
    CHECK(back[0].items == preds[0].items);
    CHECK(back[1].items.empty());
    CHECK(back[2].items == preds[2].items);
    CHECK(back[2].instance_id == 2);
}

TEST_CASE("prediction parser reports the offending line") {
    auto parse = [](const std::string& s) {
        std::istringstream in(s);
        return read_predictions(in);
    };
    CHECK_THROWS_AS(parse("nocolon\n"), DataError);
    CHECK_THROWS_AS(parse("a:1\n"), DataError);
    CHECK_THROWS_AS(parse("1:\n"), DataError);
    CHECK_THROWS_AS(parse(":0.5\n"), DataError);
    CHECK_THROWS_AS(parse("1:x\n"), DataError);
    CHECK_THROWS_AS(parse("1:0.5\t\t2:0.25\n"), DataError);
    try {
        parse("1:0.5\n2:bad\n");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(read_predictions(std::string("/tmp/haxml_no_such_preds.txt")), DataError);
}

}  // TEST_SUITE
