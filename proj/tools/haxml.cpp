#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "haxml/dataset.hpp"
#include "haxml/errors.hpp"
#include "haxml/inference.hpp"
#include "haxml/labeltree.hpp"
#include "haxml/metrics.hpp"
#include "haxml/numfmt.hpp"
#include "haxml/pipeline.hpp"

using namespace haxml;

namespace {

void seed_notice(const CLI::Option* seed_opt) {
    if (seed_opt->count() == 0) {
        std::cerr << "notice: --seed not given; using default 42\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Extreme multi-label classification: balanced label clustering, "
                 "two-stage attention classifiers, chain-rule beam inference"};
    app.require_subcommand(1);

    // stats
    std::string stats_data;
    auto* stats_cmd = app.add_subcommand("stats", "Print dataset statistics");
    stats_cmd->add_option("data", stats_data, "dataset file")->required();
    stats_cmd->callback([&] {
        ParseStats ps;
        const Dataset d = load_dataset(stats_data, &ps);
        const DatasetStats s = compute_stats(d);
        std::string out;
        out += "N=" + std::to_string(s.n) + '\n';
        out += "D=" + std::to_string(s.d) + '\n';
        out += "L=" + std::to_string(s.l) + '\n';
        out += "avg_labels_per_instance=" + format_double(s.avg_labels_per_instance) + '\n';
        out += "avg_instances_per_label=" + format_double(s.avg_instances_per_label) + '\n';
        out += "empty_label_instances=" + std::to_string(s.empty_label_instances) + '\n';
        out += "duplicate_labels_removed=" + std::to_string(ps.duplicate_labels_removed) + '\n';
        out += "zero_values_dropped=" + std::to_string(ps.zero_values_dropped) + '\n';
        std::cout << out;
    });

    // build-tree
    std::string bt_data, bt_out;
    std::uint32_t bt_leaf = 100;
    std::uint64_t bt_seed = 42;
    auto* bt_cmd = app.add_subcommand("build-tree", "Cluster the labels into balanced groups");
    bt_cmd->add_option("data", bt_data, "dataset file")->required();
    bt_cmd->add_option("--max-leaf-size", bt_leaf, "largest allowed group")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    auto* bt_seed_opt = bt_cmd->add_option("--seed", bt_seed, "clustering seed")->capture_default_str();
    bt_cmd->add_option("--out", bt_out, "output tree file")->required();
    bt_cmd->callback([&] {
        seed_notice(bt_seed_opt);
        const Dataset d = load_dataset(bt_data);
        ClusterConfig cc;
        cc.max_leaf_size = bt_leaf;
        cc.seed = bt_seed;
        const LabelTree tree = build_tree(label_features(d), cc);
        save_tree(tree, bt_out);
        std::cout << "groups=" << tree.levels.back().num_groups << '\n'
                  << "labels=" << tree.levels.back().group_of.size() << '\n';
    });

    // train
    std::string tr_data, tr_tree, tr_out;
    bool tr_auto = false;
    std::uint32_t tr_levels = 2, tr_c = 1000, tr_epochs = 20, tr_embed = 32, tr_batch = 32;
    std::uint32_t tr_leaf = 100, tr_threshold = 10000, tr_trees = 1;
    double tr_lr = 0.05;
    std::uint64_t tr_seed = 42;
    auto* tr_cmd = app.add_subcommand("train", "Train the hierarchical classifier");
    tr_cmd->add_option("data", tr_data, "training dataset file")->required();
    auto* tr_tree_opt = tr_cmd->add_option("--tree", tr_tree, "label tree file from build-tree");
    auto* tr_auto_opt = tr_cmd->add_flag("--auto", tr_auto, "cluster the labels internally");
    tr_tree_opt->excludes(tr_auto_opt);
    tr_cmd->add_option("--levels", tr_levels, "classifier stages (1 = flat, no tree)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    tr_cmd->add_option("--c", tr_c, "candidate budget per instance")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    tr_cmd->add_option("--epochs", tr_epochs, "training epochs per level")->capture_default_str();
    tr_cmd->add_option("--lr", tr_lr, "learning rate")->capture_default_str();
    tr_cmd->add_option("--embed-dim", tr_embed, "context embedding width")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    tr_cmd->add_option("--batch-size", tr_batch, "minibatch size")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    tr_cmd->add_option("--max-leaf-size", tr_leaf, "largest group when clustering internally")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    tr_cmd->add_option("--threshold", tr_threshold,
                       "group count above which another level is stacked")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    tr_cmd->add_option("--num-trees", tr_trees, "ensemble size")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    auto* tr_seed_opt = tr_cmd->add_option("--seed", tr_seed, "master seed")->capture_default_str();
    tr_cmd->add_option("--out", tr_out, "output model directory")->required();
    tr_cmd->callback([&] {
        if (tr_tree_opt->count() == 0 && !tr_auto) {
            throw CLI::ValidationError("train", "exactly one of --tree or --auto is required");
        }
        if (tr_tree_opt->count() > 0 && tr_levels < 2) {
            throw CLI::ValidationError("train", "--tree requires --levels of at least 2");
        }
        seed_notice(tr_seed_opt);
        const Dataset d = load_dataset(tr_data);
        HierarchyConfig hc;
        hc.max_candidates = tr_c;
        hc.levels = tr_levels;
        hc.group_recursion_threshold = tr_threshold;
        hc.num_trees = tr_trees;
        hc.seed = tr_seed;
        hc.cluster.max_leaf_size = tr_leaf;
        TrainConfig tc;
        tc.embed_dim = tr_embed;
        tc.learning_rate = tr_lr;
        tc.epochs = tr_epochs;
        tc.batch_size = tr_batch;
        hc.level_configs = {tc};

        Partition fixed;
        const Partition* fp = nullptr;
        if (tr_tree_opt->count() > 0) {
            fixed = load_tree(tr_tree).levels.back();
            fp = &fixed;
        }
        const EnsembleModel em = train_hierarchy(d, hc, fp);
        save_ensemble(em, tr_out);
        std::cout << "trees=" << em.trees.size() << '\n'
                  << "levels=" << em.trees[0].models.size() << '\n';
        const LabelTree& tree = em.trees[0].tree;
        for (std::size_t l = 0; l < tree.levels.size(); ++l) {
            std::cout << "level" << l << "_groups=" << tree.levels[l].num_groups << '\n';
        }
    });

    // predict
    std::string pr_model, pr_data, pr_out, pr_dump;
    std::uint32_t pr_k = 10, pr_m = 5, pr_threads = 1;
    auto* pr_cmd = app.add_subcommand("predict", "Rank labels for every instance");
    pr_cmd->add_option("model-dir", pr_model, "model directory from train")->required();
    pr_cmd->add_option("data", pr_data, "dataset file to score")->required();
    pr_cmd->add_option("--k", pr_k, "groups expanded per level")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    pr_cmd->add_option("--m", pr_m, "labels emitted per instance")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    pr_cmd->add_option("--out", pr_out, "prediction file (stdout when omitted)");
    pr_cmd->add_option("--dump-groups", pr_dump, "write expanded groups and probabilities here");
    pr_cmd->add_option("--threads", pr_threads, "worker threads")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    pr_cmd->callback([&] {
        const EnsembleModel em = load_ensemble(pr_model);
        const Dataset d = load_dataset(pr_data);
        InferConfig ic;
        ic.beam_width = pr_k;
        ic.top_labels = pr_m;
        std::vector<GroupTrace> traces;
        std::vector<GroupTrace>* tp = pr_dump.empty() ? nullptr : &traces;
        const auto preds = predict_batch(em, d, ic, pr_threads, tp);
        std::size_t failed = 0;
        for (const auto& p : preds) failed += p.failed ? 1 : 0;
        if (failed) {
            std::cerr << "warning: " << failed
                      << " instance(s) could not be scored; empty prediction lines written\n";
        }
        if (pr_out.empty()) {
            write_predictions(std::cout, preds);
        } else {
            write_predictions(pr_out, preds);
        }
        if (tp) {
            std::ofstream dump(pr_dump, std::ios::binary);
            if (!dump) throw DataError("cannot open file for writing: " + pr_dump);
            std::string buf;
            for (std::size_t i = 0; i < traces.size(); ++i) {
                for (std::size_t lvl = 0; lvl < traces[i].size(); ++lvl) {
                    buf += std::to_string(i);
                    buf += ' ';
                    buf += std::to_string(lvl);
                    for (const ScoredLabel& sl : traces[i][lvl]) {
                        buf += ' ';
                        buf += std::to_string(sl.label);
                        buf += ':';
                        append_double(buf, sl.score);
                    }
                    buf += '\n';
                }
            }
            dump << buf;
            if (!dump) throw DataError("failed writing file: " + pr_dump);
        }
    });

    // evaluate
    std::string ev_pred, ev_data;
    std::vector<std::uint32_t> ev_ks = {1, 3, 5};
    bool ev_kv = false;
    auto* ev_cmd = app.add_subcommand("evaluate", "Score predictions against ground truth");
    ev_cmd->add_option("predictions", ev_pred, "prediction file from predict")->required();
    ev_cmd->add_option("data", ev_data, "ground-truth dataset file")->required();
    ev_cmd->add_option("--ks", ev_ks, "metric depths")->capture_default_str()->delimiter(',');
    ev_cmd->add_flag("--kv", ev_kv, "append machine-readable key=value lines");
    ev_cmd->callback([&] {
        const auto preds = read_predictions(ev_pred);
        const Dataset truth = load_dataset(ev_data);
        std::vector<std::vector<std::uint32_t>> rankings;
        rankings.reserve(preds.size());
        for (const auto& p : preds) {
            std::vector<std::uint32_t> r;
            r.reserve(p.items.size());
            for (const ScoredLabel& sl : p.items) r.push_back(sl.label);
            rankings.push_back(std::move(r));
        }
        const MetricsReport rep = evaluate_rankings(rankings, truth, ev_ks);
        std::cout << format_report(rep, ev_kv);
    });

    // synth
    std::string sy_out;
    std::uint32_t sy_clusters = 4, sy_ipc = 50, sy_lpc = 16;
    double sy_noise = 0.0;
    std::uint64_t sy_seed = 42;
    auto* sy_cmd = app.add_subcommand("synth", "Generate a clustered synthetic dataset");
    sy_cmd->add_option("--clusters", sy_clusters, "latent clusters")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sy_cmd->add_option("--instances-per-cluster", sy_ipc, "instances per cluster")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sy_cmd->add_option("--labels-per-cluster", sy_lpc, "labels per cluster")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sy_cmd->add_option("--noise", sy_noise, "probability of an off-cluster feature")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    auto* sy_seed_opt = sy_cmd->add_option("--seed", sy_seed, "sampling seed")->capture_default_str();
    sy_cmd->add_option("--out", sy_out, "output dataset file")->required();
    sy_cmd->callback([&] {
        seed_notice(sy_seed_opt);
        const Dataset d = synth_dataset(sy_clusters, sy_ipc, sy_lpc, sy_noise, sy_seed);
        save_dataset(d, sy_out);
        std::cout << "N=" << d.instances.size() << '\n'
                  << "D=" << d.num_features << '\n'
                  << "L=" << d.num_labels << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
