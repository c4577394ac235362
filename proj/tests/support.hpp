#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "kgc/graph.hpp"
#include "kgc/paths.hpp"

namespace kgc::oracle {

struct RandomGraph {
    std::size_t n_entities = 0;
    std::size_t n_base_relations = 0;
    std::vector<Triple> forward;  // may contain duplicates and self-loops
    KnowledgeGraph graph;
};

inline RandomGraph random_graph(std::mt19937_64& rng, std::size_t max_nodes, std::size_t max_rel,
                                std::size_t max_edges) {
    RandomGraph g;
    g.n_entities = std::uniform_int_distribution<std::size_t>(2, max_nodes)(rng);
    g.n_base_relations = std::uniform_int_distribution<std::size_t>(1, max_rel)(rng);
    const auto n_edges = std::uniform_int_distribution<std::size_t>(1, max_edges)(rng);
    std::uniform_int_distribution<EntityId> ent(0, static_cast<EntityId>(g.n_entities - 1));
    std::uniform_int_distribution<std::uint32_t> rel(0, static_cast<std::uint32_t>(g.n_base_relations - 1));
    for (std::size_t i = 0; i < n_edges; ++i) g.forward.push_back({ent(rng), forward_id(rel(rng)), ent(rng)});
    g.graph = augment_inverses(g.forward, g.n_entities, g.n_base_relations);
    return g;
}

/// Plain edge-set view built directly from the forward triples, independent of KnowledgeGraph.
struct EdgeOracle {
    std::set<Triple> edges;

    EdgeOracle(const std::vector<Triple>& forward, const std::optional<Triple>& excluded) {
        for (const auto& t : forward) {
            edges.insert(t);
            edges.insert({t.tail, inverse(t.relation), t.head});
        }
        if (excluded) {
            edges.erase(*excluded);
            edges.erase({excluded->tail, inverse(excluded->relation), excluded->head});
        }
    }

    std::vector<EntityId> tails(EntityId h, RelationId r) const {
        std::vector<EntityId> out;
        for (const auto& e : edges)
            if (e.head == h && e.relation == r) out.push_back(e.tail);
        return out;
    }

    /// Dense resource propagation.
    double pcra(std::size_t n, EntityId h, const std::vector<RelationId>& path, EntityId t) const {
        std::vector<double> res(n, 0.0);
        res[h] = 1.0;
        for (const auto r : path) {
            std::vector<double> next(n, 0.0);
            for (EntityId u = 0; u < n; ++u) {
                if (res[u] == 0.0) continue;
                const auto ts = tails(u, r);
                for (const auto v : ts) next[v] += res[u] / static_cast<double>(ts.size());
            }
            res = std::move(next);
        }
        return res[t];
    }

    /// Relation sequences of every 2- and 3-edge walk from h to t, by depth-first search.
    std::set<std::vector<RelationId>> walks(EntityId h, EntityId t, std::size_t max_hops) const {
        std::set<std::vector<RelationId>> out;
        std::vector<RelationId> stack;
        const auto dfs = [&](auto&& self, EntityId node) -> void {
            if ((stack.size() == 2 || stack.size() == 3) && node == t) out.insert(stack);
            if (stack.size() == max_hops) return;
            for (const auto& e : edges) {
                if (e.head != node) continue;
                stack.push_back(e.relation);
                self(self, e.tail);
                stack.pop_back();
            }
        };
        dfs(dfs, h);
        return out;
    }
};

}  // namespace kgc::oracle
