#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "haxml/errors.hpp"
#include "haxml/metrics.hpp"
#include "haxml/rng.hpp"

using namespace haxml;

namespace {

// scalar re-implementation used as the ground truth below: linear membership
// scan, explicit log discounts
double oracle_p(const std::vector<std::uint32_t>& truth, const std::vector<std::uint32_t>& ranked,
                std::uint32_t k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) {
        if (std::find(truth.begin(), truth.end(), ranked[i]) != truth.end()) ++hits;
    }
    return static_cast<double>(hits) / k;
}

double oracle_ndcg(const std::vector<std::uint32_t>& truth, const std::vector<std::uint32_t>& ranked,
                   std::uint32_t k) {
    double dcg = 0.0;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) {
        if (std::find(truth.begin(), truth.end(), ranked[i]) != truth.end()) {
            dcg += 1.0 / std::log(static_cast<double>(i) + 2.0);
        }
    }
    double idcg = 0.0;
    for (std::size_t i = 0; i < truth.size() && i < k; ++i) {
        idcg += 1.0 / std::log(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("precision counts hits in the top k, divided by k") {
    std::vector<std::uint32_t> truth = {1, 2};
    std::vector<std::uint32_t> ranked = {9, 1, 2};
    CHECK(precision_at_k(truth, ranked, 1) == 0.0);
    CHECK(precision_at_k(truth, ranked, 2) == 0.5);
    CHECK(precision_at_k(truth, ranked, 3) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    // a short ranking still divides by k
    CHECK(precision_at_k(truth, std::vector<std::uint32_t>{1, 2, 9}, 5) == 0.4);
    CHECK(precision_at_k(truth, {}, 3) == 0.0);
    // empty truth is fine for precision: nothing can hit
    CHECK(precision_at_k({}, ranked, 3) == 0.0);
}

TEST_CASE("rank-discounted gain matches frozen hand-computed values") {
    std::vector<std::uint32_t> t12 = {1, 2};
    std::vector<std::uint32_t> r912 = {9, 1, 2};
    CHECK(ndcg_at_k(t12, r912, 3) == doctest::Approx(0.6934264036172707).epsilon(1e-14));

    std::vector<std::uint32_t> t035 = {0, 3, 5};
    std::vector<std::uint32_t> r3150 = {3, 1, 5, 0};
    CHECK(precision_at_k(t035, r3150, 5) == 0.6);
    CHECK(ndcg_at_k(t035, r3150, 5) == doctest::Approx(0.90602543553468218).epsilon(1e-14));

    // perfect ranking scores 1 at every depth
    std::vector<std::uint32_t> perfect = {0, 3, 5};
    for (std::uint32_t k : {1u, 2u, 3u, 5u}) {
        CHECK(ndcg_at_k(t035, perfect, k) == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("at depth one the two metrics coincide") {
    Rng rng(606);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::uint32_t> truth;
        for (std::uint32_t j = 0; j < 20; ++j) {
            if (uniform_real(rng, 0.0, 1.0) < 0.3) truth.push_back(j);
        }
        if (truth.empty()) truth.push_back(static_cast<std::uint32_t>(uniform_index(rng, 20)));
        std::vector<std::uint32_t> ranked = {static_cast<std::uint32_t>(uniform_index(rng, 20))};
        CHECK(ndcg_at_k(truth, ranked, 1) == precision_at_k(truth, ranked, 1));
    }
}

TEST_CASE("both metrics agree with a brute-force oracle on random cases") {
    Rng rng(808);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::uint32_t space = 5 + static_cast<std::uint32_t>(uniform_index(rng, 25));
        std::vector<std::uint32_t> truth;
        for (std::uint32_t j = 0; j < space; ++j) {
            if (uniform_real(rng, 0.0, 1.0) < 0.25) truth.push_back(j);
        }
        if (truth.empty()) truth.push_back(static_cast<std::uint32_t>(uniform_index(rng, space)));
        std::vector<std::uint32_t> pool(space);
        for (std::uint32_t j = 0; j < space; ++j) pool[j] = j;
        shuffle_seeded(pool, rng);
        pool.resize(uniform_index(rng, space + 1));
        const std::uint32_t k = 1 + static_cast<std::uint32_t>(uniform_index(rng, 10));

        CHECK(std::abs(precision_at_k(truth, pool, k) - oracle_p(truth, pool, k)) <= 1e-12);
        CHECK(std::abs(ndcg_at_k(truth, pool, k) - oracle_ndcg(truth, pool, k)) <= 1e-12);
    }
}

TEST_CASE("degenerate metric inputs are rejected") {
    std::vector<std::uint32_t> truth = {1};
    std::vector<std::uint32_t> dup = {3, 1, 3};
    CHECK_THROWS_AS(precision_at_k(truth, dup, 2), DataError);
    CHECK_THROWS_AS(ndcg_at_k(truth, dup, 2), DataError);
    std::vector<std::uint32_t> ok = {1, 2};
    CHECK_THROWS_AS(precision_at_k(truth, ok, 0), DataError);
    CHECK_THROWS_AS(ndcg_at_k(truth, ok, 0), DataError);
    CHECK_THROWS_AS(ndcg_at_k({}, ok, 2), DataError);
}

TEST_CASE("dataset-level evaluation averages and skips unlabeled rows") {
    std::istringstream in("3 2 4\n0,1 0:1\n 0:1\n2 1:1\n");
    Dataset truth = parse_dataset(in);
    std::vector<std::vector<std::uint32_t>> rankings = {{0, 2}, {}, {2, 1}};
    MetricsReport rep = evaluate_rankings(rankings, truth, {2, 1, 2});

    CHECK(rep.ks == std::vector<std::uint32_t>{1, 2});  // sorted, deduped
    CHECK(rep.n_evaluated == 2);
    CHECK(rep.n_skipped_empty == 1);
    CHECK(rep.p_at[0] == 1.0);   // both evaluated rows rank a true label first
    CHECK(rep.p_at[1] == 0.5);
    CHECK(rep.ndcg_at[0] == 1.0);
    const double l2 = 1.0 / std::log(2.0);
    const double l3 = 1.0 / std::log(3.0);
    const double first = l2 / (l2 + l3);  // truth {0,1}, ranking hits only rank 1
    CHECK(rep.ndcg_at[1] == doctest::Approx((first + 1.0) / 2.0).epsilon(1e-14));
}

TEST_CASE("evaluation validates its inputs") {
    std::istringstream in("2 2 2\n0 0:1\n1 1:1\n");
    Dataset truth = parse_dataset(in);
    std::vector<std::vector<std::uint32_t>> rankings = {{0}};
    CHECK_THROWS_AS(evaluate_rankings(rankings, truth), DataError);
    rankings.push_back({1});
    CHECK_NOTHROW(evaluate_rankings(rankings, truth));
    CHECK_THROWS_AS(evaluate_rankings(rankings, truth, {}), DataError);
    CHECK_THROWS_AS(evaluate_rankings(rankings, truth, {0, 1}), DataError);
    rankings[0] = {0, 0};
    CHECK_THROWS_AS(evaluate_rankings(rankings, truth), DataError);
}

TEST_CASE("reports format aligned columns and exact key-value lines") {
    MetricsReport rep;
    rep.ks = {1, 3};
    rep.p_at = {1.0, 2.0 / 3.0};
    rep.ndcg_at = {1.0, 0.75};
    rep.n_evaluated = 7;
    rep.n_skipped_empty = 2;

    const std::string plain = format_report(rep, false);
    CHECK(plain.find("Prec@1") != std::string::npos);
    CHECK(plain.find("nDCG@3") != std::string::npos);
    CHECK(plain.find("1.0000") != std::string::npos);
    CHECK(plain.find("0.6667") != std::string::npos);
    CHECK(plain.find("evaluated 7  skipped_empty 2") != std::string::npos);
    CHECK(plain.find("P@1=") == std::string::npos);

    const std::string kv = format_report(rep, true);
    CHECK(kv.find("P@1=1.0000\n") != std::string::npos);
    CHECK(kv.find("P@3=0.6667\n") != std::string::npos);
    CHECK(kv.find("nDCG@1=1.0000\n") != std::string::npos);
    CHECK(kv.find("nDCG@3=0.7500\n") != std::string::npos);
    CHECK(kv.find("evaluated=7\n") != std::string::npos);
    CHECK(kv.find("skipped_empty=2\n") != std::string::npos);
}

}  // TEST_SUITE
