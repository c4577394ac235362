#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgc/encoder.hpp"
#include "kgc/graph.hpp"
#include "kgc/ranker.hpp"

namespace kgc {

struct MetricSet {
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;
    std::size_t n_queries = 0;

    nlohmann::json to_json() const;
    friend bool operator==(const MetricSet&, const MetricSet&) = default;
};

struct EvalReport {
    MetricSet overall;
    std::optional<MetricSet> with_path;
    std::optional<MetricSet> without_path;

    nlohmann::json to_json() const;
    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// MRR = mean(1/rank), Hits@k = mean(rank <= k). Throws ContractError on empty input or rank 0.
MetricSet compute_metrics(std::span<const std::size_t> ranks);

/// 1 + number of candidates ordered before the gold that are not known true tails of
/// (head, relation) in `known`. With `known` null this is the raw rank.
std::size_t filtered_rank(const RankResult& result, EntityId gold, const KnowledgeGraph* known);

struct EvalOptions {
    RankOptions rank;
    bool filtered = true;
    bool stratify = false;
    std::size_t candidates = 0;  // 0: rank against every entity; otherwise sample this many incl. the gold
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct EvalTimings {
    double entity_encoding_s = 0.0;
    double ranking_s = 0.0;
};

/// One query per direction: (h, r, ?) with gold t and (t, r^-1, ?) with gold h.
/// `graph` is the train graph used for path search; `filter` holds train+valid+test.
EvalReport evaluate_split(const Model& model, std::span<const Triple> triples, const KnowledgeGraph& graph,
                          const KnowledgeGraph& filter, const EvalOptions& options,
                          std::vector<std::size_t>* ranks_out = nullptr, EvalTimings* timings = nullptr,
                          const Mat* entity_matrix = nullptr);

/// Mean cosine of held-out true paths against the soft query and the plain relation query.
struct AlignmentStats {
    double soft_cos = 0.0;      // mean cos(e_hrs, e_path)
    double relation_cos = 0.0;  // mean cos(e_hr, e_path)
    std::size_t n_paths = 0;
};

/// Paths from each triple's head to its tail in `graph` (top-K per hop, both directions).
AlignmentStats path_alignment(const Model& model, std::span<const Triple> triples, const KnowledgeGraph& graph,
                              const MiningOptions& mining, bool relation_prefix = true);

}  // namespace kgc
