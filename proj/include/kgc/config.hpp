#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "kgc/eval.hpp"
#include "kgc/ranker.hpp"
#include "kgc/trainer.hpp"

namespace kgc {

struct DataConfig {
    std::string bundle;  // binary dataset bundle written by `ingest`; used when set
    std::string train;
    std::string valid;
    std::string test;
    bool strict = false;  // valid/test may not introduce unseen symbols
};

struct EvalConfig {
    std::string split = "test";
    bool stratify = false;
    bool filtered = true;
    std::size_t candidates = 0;
    std::uint64_t seed = 0;
};

/// Whole-run configuration, one JSON document with sections
/// data, mining, encoder, train, rank, eval plus a top-level thread count.
struct RunConfig {
    DataConfig data;
    TrainConfig train;
    RankOptions rank;
    EvalConfig eval;
    unsigned threads = 1;

    /// Options for evaluate_split, with mining/prefix settings taken from training.
    EvalOptions eval_options() const;
};

/// {mining, encoder, train} sections.
nlohmann::json train_config_to_json(const TrainConfig& config);
/// Strict: unknown sections or keys raise ParseError; absent keys keep defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

DatasetSplit load_dataset(const DataConfig& data);

}  // namespace kgc
