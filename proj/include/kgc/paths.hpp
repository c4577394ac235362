#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgc/graph.hpp"

namespace kgc {

/// Entity-free relation sequence of two or three hops.
struct RelationPath {
    std::vector<RelationId> relations;
    double confidence = 0.0;

    std::size_t hops() const noexcept { return relations.size(); }
    friend bool operator==(const RelationPath&, const RelationPath&) = default;
};

/// Highest confidence first, then lexicographic relation ids.
bool path_rank_less(const RelationPath& a, const RelationPath& b);

/// Retained paths for one query, split by hop count, each list in path_rank_less order.
struct PathSet {
    std::vector<RelationPath> two_hop;
    std::vector<RelationPath> three_hop;

    bool empty() const noexcept { return two_hop.empty() && three_hop.empty(); }
    std::size_t size() const noexcept { return two_hop.size() + three_hop.size(); }
    const std::vector<RelationPath>& by_hops(std::size_t hops) const { return hops == 2 ? two_hop : three_hop; }
    friend bool operator==(const PathSet&, const PathSet&) = default;
};

struct MiningOptions {
    std::size_t K = 3;             // retained paths per hop count
    double min_confidence = 0.0;   // paths strictly below are dropped
    std::size_t max_hops = 3;      // 2 or 3
    unsigned threads = 1;
};

/// PCRA resource reaching t: one unit starts at h and at every hop the resource held by a
/// node is split evenly across its tails under that hop's relation. When `excluded` is
/// set, that edge and its inverse are treated as absent.
double pcra_confidence(const KnowledgeGraph& graph, EntityId h, std::span<const RelationId> path, EntityId t,
                       const std::optional<Triple>& excluded = std::nullopt);

/// Every distinct relation sequence of exactly 2 hops (and of 3 when max_hops == 3) with an
/// instantiation from h to t avoiding `excluded`, with its PCRA confidence. Two-hop paths
/// come first; each group is in path_rank_less order.
std::vector<RelationPath> enumerate_paths(const KnowledgeGraph& graph, EntityId h, EntityId t,
                                          std::size_t max_hops = 3,
                                          const std::optional<Triple>& excluded = std::nullopt);

/// Splits enumerate_paths output by hop count and keeps the top K of each.
PathSet retain_top(std::vector<RelationPath> paths, const MiningOptions& options);

/// True when at least one 2- or 3-hop walk joins h to t. Cheaper than enumeration.
bool has_path(const KnowledgeGraph& graph, EntityId h, EntityId t);

/// Mined paths per training triple.
class PathIndex {
public:
    PathIndex() = default;
    explicit PathIndex(std::size_t K) : K_(K) {}

    std::size_t K() const noexcept { return K_; }
    /// Triples with at least one retained path.
    std::size_t size() const noexcept { return entries_.size(); }
    /// Empty set when the triple has no retained path.
    const PathSet& lookup(const Triple& triple) const;
    const std::vector<std::pair<Triple, PathSet>>& entries() const noexcept { return entries_; }

    /// Inserts in any order; call finalize() before lookups.
    void add(const Triple& triple, PathSet paths);
    void finalize();

    void save(const std::filesystem::path& path) const;
    static PathIndex load(const std::filesystem::path& path);

    friend bool operator==(const PathIndex&, const PathIndex&) = default;

private:
    std::size_t K_ = 3;
    std::vector<std::pair<Triple, PathSet>> entries_;
};

/// Mines paths for each triple with its own edge (and inverse) excluded from the search.
PathIndex mine_training_paths(const KnowledgeGraph& graph, std::span<const Triple> triples,
                              const MiningOptions& options);

/// Inference-time search from h to each candidate, no exclusion, top-K retention.
std::map<EntityId, PathSet> search_paths(const KnowledgeGraph& graph, EntityId h,
                                         std::span<const EntityId> candidates, const MiningOptions& options);

struct CoverageReport {
    std::size_t n_triples = 0;
    std::size_t n_pathless = 0;
    double pathless_fraction = 0.0;

    nlohmann::json to_json() const;
};

/// Fraction of `triples` whose head reaches the tail by no 2- or 3-hop walk in `graph`.
CoverageReport path_coverage_stats(const KnowledgeGraph& graph, std::span<const Triple> triples,
                                   unsigned threads = 1);

nlohmann::json path_index_summary(const PathIndex& index, std::size_t n_mined);

}  // namespace kgc
