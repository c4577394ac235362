#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "kgc/encoder.hpp"
#include "kgc/graph.hpp"
#include "kgc/paths.hpp"

namespace kgc {

struct RankOptions {
    std::size_t N = 100;         // survivors that receive path search
    bool alpha_enabled = true;   // false: final = base everywhere
    bool clamp_alpha = false;    // clamp negative alpha to 0
    bool relation_prefix = true; // must match training
    MiningOptions mining;
};

/// Scores for one (h, r) query over a candidate list.
struct RankResult {
    EntityId head = 0;
    RelationId relation = 0;
    std::vector<EntityId> candidates;
    std::vector<double> base;
    std::vector<std::optional<double>> alpha;
    std::vector<double> final_score;
    /// Indices into `candidates`, best first (final desc, entity id asc).
    std::vector<std::size_t> order;
    std::optional<std::size_t> gold_rank;
};

/// cos(e_hr, e_t) + cos(e_hrs, e_t) for every row of `entity_matrix`.
std::vector<double> base_scores(const Model& model, EntityId h, RelationId r, const Mat& entity_matrix);

/// Indices of the N highest scores, ties broken by lower index (entity id) first.
std::vector<std::size_t> top_n(std::span<const double> scores, std::size_t N);

/// alpha = max over the survivor's retained paths of cos(e_path, e_hrs). Survivors
/// without any 2- or 3-hop path are absent from the result.
std::map<EntityId, double> alpha_rerank(const Model& model, EntityId h, RelationId r,
                                        std::span<const EntityId> survivors, const KnowledgeGraph& graph,
                                        const RankOptions& options);

/// Full hierarchical ranking over `candidates` (all entities when empty).
/// When `gold` is set the filtered rank is computed against `filter` (raw rank when null).
RankResult rank_query(const Model& model, const Mat& entity_matrix, const KnowledgeGraph& graph, EntityId h,
                      RelationId r, const RankOptions& options, std::optional<EntityId> gold = std::nullopt,
                      const KnowledgeGraph* filter = nullptr, std::span<const EntityId> candidates = {});

}  // namespace kgc
