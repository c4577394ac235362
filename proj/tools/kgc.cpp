// kgc: command-line driver for dataset ingestion, path mining, training,
// evaluation, prediction and embedding export.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kgc/checkpoint.hpp"
#include "kgc/config.hpp"
#include "kgc/errors.hpp"
#include "kgc/eval.hpp"
#include "kgc/graph.hpp"
#include "kgc/paths.hpp"
#include "kgc/ranker.hpp"
#include "kgc/synthetic.hpp"
#include "kgc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode : int {
    kOk = 0,
    kInputError = 2,
    kVocabError = 3,
    kIntegrityError = 4,
    kDivergence = 5,
};

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw kgc::ParseError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// Files a checkpoint directory holds besides manifest.json / tensors.bin.
constexpr const char* kDatasetFile = "dataset.bin";
constexpr const char* kPathsFile = "paths.bin";
constexpr const char* kConfigFile = "config.json";
constexpr const char* kEntityCache = "entity_embeddings.bin";
constexpr const char* kMetricsFile = "metrics.jsonl";

struct LoadedRun {
    kgc::Checkpoint checkpoint;
    kgc::RunConfig config;
    kgc::DatasetSplit split;
    kgc::KnowledgeGraph graph;
};

LoadedRun load_run(const fs::path& dir) {
    LoadedRun run;
    run.checkpoint = kgc::load_checkpoint(dir);
    run.config = kgc::load_run_config(dir / kConfigFile);
    run.split = kgc::DatasetSplit::load(dir / kDatasetFile);
    run.graph = kgc::build_train_graph(run.split);
    if (run.split.num_entities() != run.checkpoint.state.model.dims.num_entities ||
        run.split.num_relations() != run.checkpoint.state.model.dims.num_relations)
        throw kgc::IntegrityError("dataset bundle does not match checkpoint dimensions");
    return run;
}

kgc::Mat entity_matrix(const LoadedRun& run, const fs::path& dir) {
    const auto cache = dir / kEntityCache;
    if (fs::exists(cache)) {
        auto m = kgc::load_embeddings(cache);
        if (m.rows() == static_cast<Eigen::Index>(run.split.num_entities()) &&
            m.cols() == static_cast<Eigen::Index>(run.checkpoint.state.model.dims.encoder.d_emb))
            return m;
    }
    return kgc::encode_all_entities(run.checkpoint.state.model, run.config.threads);
}

int cmd_ingest(const std::string& train, const std::string& valid, const std::string& test, const std::string& out,
               bool strict) {
    const auto split = kgc::load_split(train, valid, test, strict);
    const auto graph = kgc::build_train_graph(split);
    split.save(out);
    if (graph.duplicates_dropped() > 0)
        std::cerr << "warning: dropped " << graph.duplicates_dropped() << " duplicate training triples\n";
    std::cout << json{{"entities", split.num_entities()},
                      {"relations", split.num_base_relations()},
                      {"relation_ids", split.num_relations()},
                      {"train", split.train.size()},
                      {"valid", split.valid.size()},
                      {"test", split.test.size()},
                      {"stored_train_triples", graph.num_triples()},
                      {"duplicates_dropped", graph.duplicates_dropped()}}
                     .dump()
              << '\n';
    return kOk;
}

int cmd_mine(const std::string& bundle, const kgc::MiningOptions& mining, const std::string& out) {
    const auto split = kgc::DatasetSplit::load(bundle);
    const auto graph = kgc::build_train_graph(split);
    const auto examples = kgc::training_examples(split);
    const auto index = kgc::mine_training_paths(graph, examples, mining);
    index.save(out);
    auto summary = kgc::path_index_summary(index, examples.size());
    if (!split.test.empty()) summary["test_coverage"] = kgc::path_coverage_stats(graph, split.test, mining.threads).to_json();
    write_json(out + ".json", summary);
    std::cout << summary.dump() << '\n';
    return kOk;
}

int cmd_path_stats(const std::string& bundle, const std::string& which, unsigned threads) {
    const auto split = kgc::DatasetSplit::load(bundle);
    const auto graph = kgc::build_train_graph(split);
    const auto& triples = which == "valid" ? split.valid : split.test;
    auto report = kgc::path_coverage_stats(graph, triples, threads).to_json();
    report["split"] = which;
    std::cout << report.dump() << '\n';
    return kOk;
}

int cmd_train(const std::string& config_path, const fs::path& out) {
    auto cfg = kgc::load_run_config(config_path);
    cfg.train.mining.threads = cfg.threads;
    const auto split = kgc::load_dataset(cfg.data);
    const auto graph = kgc::build_train_graph(split);
    fs::create_directories(out);
    split.save(out / kDatasetFile);
    write_json(out / kConfigFile, kgc::run_config_to_json(cfg));

    const auto examples = kgc::training_examples(split);
    const auto index = kgc::mine_training_paths(graph, examples, cfg.train.mining);
    index.save(out / kPathsFile);
    std::cerr << "mined paths: " << kgc::path_index_summary(index, examples.size()).dump() << '\n';

    auto state = kgc::init_training(split, cfg.train);
    std::ofstream metrics(out / kMetricsFile, std::ios::trunc);
    try {
        kgc::train(state, examples, graph, index, cfg.train, [&](const json& j) { metrics << j.dump() << '\n'; });
    } catch (const kgc::DivergenceError& e) {
        std::ofstream dump(out / "divergence.txt", std::ios::trunc);
        dump << e.what() << '\n';
        throw;
    }
    for (const auto& m : state.history)
        std::cerr << "epoch " << m.epoch << " loss " << m.mean.total << " tau " << m.tau << '\n';
    kgc::save_checkpoint(out, state, cfg.train);
    kgc::save_embeddings(out / kEntityCache, kgc::encode_all_entities(state.model, cfg.threads));
    return kOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string split = "test";
    int N = -1;
    bool no_alpha = false;
    bool stratify = false;
    std::size_t candidates = 0;
    bool raw = false;
    std::string out;
};

int cmd_eval(const EvalArgs& a) {
    const fs::path dir = a.checkpoint;
    const auto run = load_run(dir);
    auto opts = run.config.eval_options();
    if (a.N >= 0) opts.rank.N = static_cast<std::size_t>(a.N);
    if (a.no_alpha) opts.rank.alpha_enabled = false;
    if (a.stratify) opts.stratify = true;
    if (a.candidates > 0) opts.candidates = a.candidates;
    if (a.raw) opts.filtered = false;
    if (a.split != "test" && a.split != "valid") throw kgc::ParseError("--split must be test or valid");
    const auto& triples = a.split == "valid" ? run.split.valid : run.split.test;
    if (triples.empty()) throw kgc::ParseError("split " + a.split + " is empty");

    const auto filter = kgc::build_filter_graph(run.split);
    const auto matrix = entity_matrix(run, dir);
    kgc::EvalTimings timings;
    const auto report = kgc::evaluate_split(run.checkpoint.state.model, triples, run.graph, filter, opts, nullptr,
                                            &timings, &matrix);
    auto j = report.to_json();
    j["split"] = a.split;
    j["N"] = opts.rank.N;
    j["alpha"] = opts.rank.alpha_enabled;
    j["filtered"] = opts.filtered;
    j["candidates"] = opts.candidates;
    const fs::path out = a.out.empty() ? dir / ("eval_" + a.split + ".json") : fs::path(a.out);
    write_json(out, j);
    std::cout << j.dump() << '\n';
    std::cerr << "timing: entity encoding " << timings.entity_encoding_s << " s, ranking " << timings.ranking_s << " s\n";
    return kOk;
}

int cmd_predict(const std::string& checkpoint, const std::string& head, const std::string& relation, std::size_t topk,
                int N, const std::string& gold) {
    const fs::path dir = checkpoint;
    const auto run = load_run(dir);
    const auto h = run.split.entities.at(head);
    const auto r = run.split.relation_id(relation);
    std::optional<kgc::EntityId> g;
    if (!gold.empty()) g = run.split.entities.at(gold);
    auto opts = run.config.eval_options().rank;
    if (N >= 0) opts.N = static_cast<std::size_t>(N);
    const auto filter = kgc::build_filter_graph(run.split);
    const auto matrix = entity_matrix(run, dir);
    const auto res = kgc::rank_query(run.checkpoint.state.model, matrix, run.graph, h, r, opts, g, &filter);

    json items = json::array();
    for (std::size_t k = 0; k < std::min(topk, res.order.size()); ++k) {
        const auto i = res.order[k];
        items.push_back({{"entity", run.split.entities.name(res.candidates[i])},
                         {"base", res.base[i]},
                         {"alpha", res.alpha[i] ? json(*res.alpha[i]) : json(nullptr)},
                         {"final", res.final_score[i]}});
    }
    json line = {{"head", head}, {"relation", relation}, {"topk", items}};
    if (res.gold_rank) line["gold_rank"] = *res.gold_rank;
    std::cout << line.dump() << '\n';
    return kOk;
}

int cmd_export(const std::string& checkpoint, const std::string& what, const std::string& out) {
    const fs::path dir = checkpoint;
    const auto run = load_run(dir);
    const auto& model = run.checkpoint.state.model;
    std::ofstream ids(out + ".ids.tsv", std::ios::trunc);
    if (!ids) throw kgc::ParseError("cannot write " + out + ".ids.tsv");
    if (what == "entities") {
        const auto m = kgc::encode_all_entities(model, run.config.threads);
        kgc::save_embeddings(out + ".bin", m);
        for (std::size_t i = 0; i < run.split.num_entities(); ++i) ids << i << '\t' << run.split.entities.name(i) << '\n';
        return kOk;
    }
    if (what != "queries") throw kgc::ParseError("--what must be entities or queries");
    // Relation and soft-path query embeddings for every test triple, both directions.
    const auto max_tokens = model.dims.encoder.max_tokens;
    std::vector<kgc::Vec> rows;
    for (const auto& t : run.split.test) {
        for (const auto& q : {t, kgc::Triple{t.tail, kgc::inverse(t.relation), t.head}}) {
            for (const auto kind : {kgc::QueryKind::Relation, kgc::QueryKind::Soft}) {
                const auto l = kind == kgc::QueryKind::Soft ? model.dims.soft.l : 0;
                rows.push_back(kgc::encode_query(model, kgc::build_query(model.vocab, q.head, q.relation, kind, nullptr, l, max_tokens)));
                ids << rows.size() - 1 << '\t' << run.split.entities.name(q.head) << '\t'
                    << run.split.relation_name(q.relation) << '\t' << (kind == kgc::QueryKind::Soft ? "soft" : "relation")
                    << '\n';
            }
        }
    }
    kgc::Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(model.dims.encoder.d_emb));
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    kgc::save_embeddings(out + ".bin", m);
    return kOk;
}

int cmd_synth(const kgc::SyntheticOptions& opts, const std::string& out) {
    const auto split = kgc::generate_synthetic_kg(opts);
    kgc::write_synthetic(out, opts, split);
    std::cout << kgc::synthetic_manifest(opts, split)["counts"].dump() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge graph completion with soft reasoning paths"};
    app.require_subcommand(1);
    unsigned threads = 1;
    app.add_option("--threads", threads, "worker threads (fixes determinism)")->check(CLI::PositiveNumber);

    std::string train, valid, test, out, bundle, config, checkpoint;
    bool strict = false;
    auto* ingest = app.add_subcommand("ingest", "load TSV splits and write a dataset bundle");
    ingest->add_option("--train", train)->required();
    ingest->add_option("--valid", valid)->required();
    ingest->add_option("--test", test)->required();
    ingest->add_option("--out", out)->required();
    ingest->add_flag("--strict", strict, "reject valid/test symbols unseen in train");

    kgc::MiningOptions mining;
    auto* mine = app.add_subcommand("mine-paths", "mine PCRA-scored 2/3-hop paths for training triples");
    mine->add_option("--graph", bundle, "dataset bundle")->required();
    mine->add_option("--K", mining.K, "paths kept per hop count")->check(CLI::PositiveNumber);
    mine->add_option("--min-confidence", mining.min_confidence);
    mine->add_option("--max-hops", mining.max_hops)->check(CLI::IsMember({2, 3}));
    mine->add_option("--out", out)->required();

    std::string which = "test";
    auto* stats = app.add_subcommand("path-stats", "share of split triples without a 2/3-hop path");
    stats->add_option("--graph", bundle)->required();
    stats->add_option("--split", which)->check(CLI::IsMember({"test", "valid"}));

    auto* trn = app.add_subcommand("train", "train a model from a JSON run config");
    trn->add_option("--config", config)->required();
    trn->add_option("--out", out)->required();

    EvalArgs ev;
    auto* evl = app.add_subcommand("eval", "filtered link-prediction metrics");
    evl->add_option("--checkpoint", ev.checkpoint)->required();
    evl->add_option("--split", ev.split)->check(CLI::IsMember({"test", "valid"}));
    evl->add_option("--N", ev.N, "top-N survivors for path reranking");
    evl->add_flag("--no-alpha", ev.no_alpha);
    evl->add_flag("--stratify-paths", ev.stratify);
    evl->add_option("--candidates", ev.candidates, "rank against this many sampled candidates incl. the gold");
    evl->add_flag("--raw", ev.raw, "unfiltered ranks");
    evl->add_option("--out", ev.out);

    std::string head, relation, gold;
    std::size_t topk = 10;
    int N = -1;
    auto* pred = app.add_subcommand("predict", "rank tails for one (head, relation) query");
    pred->add_option("--checkpoint", checkpoint)->required();
    pred->add_option("--head", head)->required();
    pred->add_option("--relation", relation)->required();
    pred->add_option("--topk", topk);
    pred->add_option("--N", N);
    pred->add_option("--gold", gold, "report this entity's filtered rank");

    std::string what;
    auto* exp = app.add_subcommand("export-embeddings", "dump embedding vectors with an id map");
    exp->add_option("--checkpoint", checkpoint)->required();
    exp->add_option("--what", what)->required()->check(CLI::IsMember({"entities", "queries"}));
    exp->add_option("--out", out)->required();

    kgc::SyntheticOptions synth_opts;
    std::vector<std::string> rules;
    auto* syn = app.add_subcommand("synth", "emit a synthetic compositional family KG");
    syn->add_option("--seed", synth_opts.seed);
    syn->add_option("--n", synth_opts.n_people);
    syn->add_option("--rules", rules, "target=first.second (repeatable); default grandparent and uncle");
    syn->add_option("--holdout", synth_opts.holdout_fraction);
    syn->add_option("--valid-fraction", synth_opts.valid_fraction);
    syn->add_option("--generations", synth_opts.generations);
    syn->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kInputError;
    }

    try {
        if (*ingest) return cmd_ingest(train, valid, test, out, strict);
        if (*mine) {
            mining.threads = threads;
            return cmd_mine(bundle, mining, out);
        }
        if (*stats) return cmd_path_stats(bundle, which, threads);
        if (*trn) return cmd_train(config, out);
        if (*evl) return cmd_eval(ev);
        if (*pred) return cmd_predict(checkpoint, head, relation, topk, N, gold);
        if (*exp) return cmd_export(checkpoint, what, out);
        if (*syn) {
            if (rules.empty()) synth_opts.rules = kgc::default_family_rules();
            for (const auto& r : rules) synth_opts.rules.push_back(kgc::CompositionRule::parse(r));
            return cmd_synth(synth_opts, out);
        }
    } catch (const kgc::VocabularyError& e) {
        std::cerr << "vocabulary error: " << e.what() << '\n';
        return kVocabError;
    } catch (const kgc::IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << '\n';
        return kIntegrityError;
    } catch (const kgc::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return kDivergence;
    } catch (const kgc::ParseError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kInputError;
    } catch (const kgc::GenerationError& e) {
        std::cerr << "generation error: " << e.what() << '\n';
        return kInputError;
    } catch (const kgc::ContractError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kInputError;
    }
    return kOk;
}
