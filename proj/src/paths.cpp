#include "kgc/paths.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <thread>

#include "kgc/binary_io.hpp"
#include "kgc/errors.hpp"

namespace kgc {

bool path_rank_less(const RelationPath& a, const RelationPath& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.relations < b.relations;
}

namespace {

/// Edge filter for a single excluded triple and its inverse.
struct Exclusion {
    bool active = false;
    Triple fwd;
    Triple bwd;

    explicit Exclusion(const std::optional<Triple>& x) {
        if (x) {
            active = true;
            fwd = *x;
            bwd = {x->tail, inverse(x->relation), x->head};
        }
    }

    bool blocks(EntityId a, RelationId r, EntityId b) const {
        if (!active) return false;
        return (a == fwd.head && r == fwd.relation && b == fwd.tail) ||
               (a == bwd.head && r == bwd.relation && b == bwd.tail);
    }

    /// Number of tails of (n, r) that survive the exclusion.
    std::size_t degree(const KnowledgeGraph& g, EntityId n, RelationId r) const {
        auto d = g.tails(n, r).size();
        if (active) {
            if (n == fwd.head && r == fwd.relation && g.contains(fwd)) --d;
            if (n == bwd.head && r == bwd.relation && g.contains(bwd) && !(bwd == fwd)) --d;
        }
        return d;
    }
};

/// Last hop into t: predecessor node, relation and its split weight.
struct InEdge {
    EntityId node;
    RelationId relation;
    double weight;
};

std::vector<InEdge> in_edges(const KnowledgeGraph& g, EntityId t, const Exclusion& ex) {
    std::vector<InEdge> in;
    const auto rels = g.out_relations(t);
    const auto tails = g.out_tails(t);
    for (std::size_t i = 0; i < rels.size(); ++i) {
        // (t, q, n) stored implies (n, q^-1, t) stored.
        const EntityId n = tails[i];
        const RelationId r = inverse(rels[i]);
        if (ex.blocks(n, r, t)) continue;
        in.push_back({n, r, 1.0 / static_cast<double>(ex.degree(g, n, r))});
    }
    std::stable_sort(in.begin(), in.end(), [](const InEdge& a, const InEdge& b) {
        return a.node < b.node;
    });
    return in;
}

template <std::size_t N>
struct Walk {
    std::array<RelationId, N> key;
    double weight;
};

template <std::size_t N>
void reduce_walks(std::vector<Walk<N>>& walks, std::vector<RelationPath>& out) {
    std::stable_sort(walks.begin(), walks.end(), [](const Walk<N>& a, const Walk<N>& b) {
        return a.key < b.key;
    });
    std::vector<RelationPath> group;
    for (std::size_t i = 0; i < walks.size();) {
        double sum = 0.0;
        std::size_t j = i;
        for (; j < walks.size() && walks[j].key == walks[i].key; ++j) sum += walks[j].weight;
        group.push_back({std::vector<RelationId>(walks[i].key.begin(), walks[i].key.end()), sum});
        i = j;
    }
    std::sort(group.begin(), group.end(), path_rank_less);
    out.insert(out.end(), group.begin(), group.end());
}

}  // namespace

double pcra_confidence(const KnowledgeGraph& graph, EntityId h, std::span<const RelationId> path, EntityId t,
                       const std::optional<Triple>& excluded) {
    require(path.size() == 2 || path.size() == 3, "pcra_confidence: path must have 2 or 3 hops");
    const Exclusion ex(excluded);
    std::map<EntityId, double> resource{{h, 1.0}};
    for (const auto r : path) {
        std::map<EntityId, double> next;
        for (const auto& [node, mass] : resource) {
            const auto tails = graph.tails(node, r);
            const auto deg = ex.degree(graph, node, r);
            if (deg == 0) continue;
            const double share = mass / static_cast<double>(deg);
            for (const auto nb : tails)
                if (!ex.blocks(node, r, nb)) next[nb] += share;
        }
        resource = std::move(next);
        if (resource.empty()) return 0.0;
    }
    const auto it = resource.find(t);
    return it == resource.end() ? 0.0 : it->second;
}

std::vector<RelationPath> enumerate_paths(const KnowledgeGraph& graph, EntityId h, EntityId t,
                                          std::size_t max_hops, const std::optional<Triple>& excluded) {
    require(max_hops == 2 || max_hops == 3, "enumerate_paths: max_hops must be 2 or 3");
    const Exclusion ex(excluded);
    const auto in = in_edges(graph, t, ex);
    std::vector<RelationPath> out;
    if (in.empty()) return out;

    const auto arrivals = [&](EntityId node) {
        const auto lo = std::lower_bound(in.begin(), in.end(), node,
                                         [](const InEdge& e, EntityId n) { return e.node < n; });
        auto hi = lo;
        while (hi != in.end() && hi->node == node) ++hi;
        return std::pair{lo, hi};
    };

    std::vector<Walk<2>> two;
    std::vector<Walk<3>> three;
    const auto r1s = graph.out_relations(h);
    const auto n1s = graph.out_tails(h);
    for (std::size_t i = 0; i < r1s.size(); ++i) {
        const auto r1 = r1s[i];
        const auto n1 = n1s[i];
        if (ex.blocks(h, r1, n1)) continue;
        const double w1 = 1.0 / static_cast<double>(ex.degree(graph, h, r1));
        for (auto [it, end] = arrivals(n1); it != end; ++it) two.push_back({{r1, it->relation}, w1 * it->weight});
        if (max_hops < 3) continue;
        const auto r2s = graph.out_relations(n1);
        const auto n2s = graph.out_tails(n1);
        for (std::size_t j = 0; j < r2s.size(); ++j) {
            const auto r2 = r2s[j];
            const auto n2 = n2s[j];
            if (ex.blocks(n1, r2, n2)) continue;
            auto [it, end] = arrivals(n2);
            if (it == end) continue;
            const double w2 = w1 / static_cast<double>(ex.degree(graph, n1, r2));
            for (; it != end; ++it) three.push_back({{r1, r2, it->relation}, w2 * it->weight});
        }
    }
    reduce_walks(two, out);
    reduce_walks(three, out);
    return out;
}

PathSet retain_top(std::vector<RelationPath> paths, const MiningOptions& options) {
    PathSet set;
    for (auto& p : paths) {
        if (p.confidence < options.min_confidence) continue;
        auto& bucket = p.hops() == 2 ? set.two_hop : set.three_hop;
        bucket.push_back(std::move(p));
    }
    for (auto* bucket : {&set.two_hop, &set.three_hop}) {
        std::sort(bucket->begin(), bucket->end(), path_rank_less);
        if (bucket->size() > options.K) bucket->resize(options.K);
    }
    return set;
}

bool has_path(const KnowledgeGraph& graph, EntityId h, EntityId t) {
    // By inversion closure the in-neighbours of t are its out-neighbours.
    const auto tn = graph.out_tails(t);
    if (tn.empty() || graph.out_degree(h) == 0) return false;
    std::vector<EntityId> near_t(tn.begin(), tn.end());
    std::sort(near_t.begin(), near_t.end());
    near_t.erase(std::unique(near_t.begin(), near_t.end()), near_t.end());
    const auto near = [&](EntityId n) { return std::binary_search(near_t.begin(), near_t.end(), n); };

    std::vector<EntityId> hn(graph.out_tails(h).begin(), graph.out_tails(h).end());
    std::sort(hn.begin(), hn.end());
    hn.erase(std::unique(hn.begin(), hn.end()), hn.end());
    for (const auto n1 : hn)
        if (near(n1)) return true;
    for (const auto n1 : hn)
        for (const auto n2 : graph.out_tails(n1))
            if (near(n2)) return true;
    return false;
}

const PathSet& PathIndex::lookup(const Triple& triple) const {
    static const PathSet kEmpty;
    const auto it = std::lower_bound(entries_.begin(), entries_.end(), triple,
                                     [](const auto& e, const Triple& t) { return e.first < t; });
    return it != entries_.end() && it->first == triple ? it->second : kEmpty;
}

void PathIndex::add(const Triple& triple, PathSet paths) {
    if (!paths.empty()) entries_.emplace_back(triple, std::move(paths));
}

void PathIndex::finalize() {
    std::stable_sort(entries_.begin(), entries_.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < entries_.size(); ++i)
        if (entries_[i].first == entries_[i - 1].first) throw ContractError("duplicate triple in path index");
}

namespace {
constexpr char kIndexMagic[5] = "KGPI";
constexpr std::uint32_t kIndexVersion = 1;
}  // namespace

void PathIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    binio::put_magic(out, kIndexMagic, kIndexVersion);
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(K_));
    std::uint64_t n_records = 0;
    for (const auto& [_, set] : entries_) n_records += set.size();
    binio::put<std::uint64_t>(out, n_records);
    for (const auto& [tr, set] : entries_) {
        for (const auto* bucket : {&set.two_hop, &set.three_hop}) {
            for (const auto& p : *bucket) {
                binio::put<std::uint32_t>(out, tr.head);
                binio::put<std::uint32_t>(out, tr.relation);
                binio::put<std::uint32_t>(out, tr.tail);
                binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(p.hops()));
                for (auto r : p.relations) binio::put<std::uint32_t>(out, r);
                binio::put<double>(out, p.confidence);
            }
        }
    }
    if (!out) throw ParseError("write failed: " + path.string());
}

PathIndex PathIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    binio::expect_magic(in, kIndexMagic, kIndexVersion);
    PathIndex index(binio::get<std::uint32_t>(in));
    const auto n_records = binio::get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n_records; ++i) {
        Triple tr;
        tr.head = binio::get<std::uint32_t>(in);
        tr.relation = binio::get<std::uint32_t>(in);
        tr.tail = binio::get<std::uint32_t>(in);
        const auto hops = binio::get<std::uint8_t>(in);
        if (hops != 2 && hops != 3) throw IntegrityError("path record with hop count " + std::to_string(hops));
        RelationPath p;
        for (std::uint8_t k = 0; k < hops; ++k) p.relations.push_back(binio::get<std::uint32_t>(in));
        p.confidence = binio::get<double>(in);
        if (!(p.confidence > 0.0 && p.confidence <= 1.0 + 1e-9)) throw IntegrityError("path confidence out of (0, 1]");
        if (index.entries_.empty() || !(index.entries_.back().first == tr)) index.entries_.push_back({tr, {}});
        auto& set = index.entries_.back().second;
        (hops == 2 ? set.two_hop : set.three_hop).push_back(std::move(p));
    }
    in.peek();
    if (!in.eof()) throw IntegrityError("trailing bytes in path index " + path.string());
    index.finalize();
    return index;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1u, threads);
    if (threads == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += threads) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

PathIndex mine_training_paths(const KnowledgeGraph& graph, std::span<const Triple> triples,
                              const MiningOptions& options) {
    std::vector<PathSet> results(triples.size());
    parallel_for(triples.size(), options.threads, [&](std::size_t i) {
        const auto& tr = triples[i];
        results[i] = retain_top(enumerate_paths(graph, tr.head, tr.tail, options.max_hops, tr), options);
    });
    PathIndex index(options.K);
    for (std::size_t i = 0; i < triples.size(); ++i) index.add(triples[i], std::move(results[i]));
    index.finalize();
    return index;
}

std::map<EntityId, PathSet> search_paths(const KnowledgeGraph& graph, EntityId h,
                                         std::span<const EntityId> candidates, const MiningOptions& options) {
    std::map<EntityId, PathSet> out;
    for (const auto c : candidates) {
        if (out.contains(c)) continue;
        out.emplace(c, retain_top(enumerate_paths(graph, h, c, options.max_hops), options));
    }
    return out;
}

nlohmann::json CoverageReport::to_json() const {
    return {{"n_triples", n_triples},
            {"n_pathless", n_pathless},
            {"pathless_fraction", pathless_fraction},
            {"pathless_percent", 100.0 * pathless_fraction}};
}

CoverageReport path_coverage_stats(const KnowledgeGraph& graph, std::span<const Triple> triples,
                                   unsigned threads) {
    std::vector<char> found(triples.size(), 0);
    parallel_for(triples.size(), threads,
                 [&](std::size_t i) { found[i] = has_path(graph, triples[i].head, triples[i].tail) ? 1 : 0; });
    CoverageReport r;
    r.n_triples = triples.size();
    r.n_pathless = static_cast<std::size_t>(std::count(found.begin(), found.end(), 0));
    r.pathless_fraction = r.n_triples == 0 ? 0.0 : static_cast<double>(r.n_pathless) / static_cast<double>(r.n_triples);
    return r;
}

nlohmann::json path_index_summary(const PathIndex& index, std::size_t n_mined) {
    std::size_t with2 = 0, with3 = 0, n_paths = 0;
    for (const auto& [_, set] : index.entries()) {
        with2 += !set.two_hop.empty();
        with3 += !set.three_hop.empty();
        n_paths += set.size();
    }
    const auto pct = [&](std::size_t k) {
        return n_mined == 0 ? 0.0 : 100.0 * static_cast<double>(k) / static_cast<double>(n_mined);
    };
    return {{"K", index.K()},
            {"n_triples", n_mined},
            {"n_with_path", index.size()},
            {"n_with_2hop", with2},
            {"n_with_3hop", with3},
            {"n_paths", n_paths},
            {"coverage_percent", pct(index.size())},
            {"coverage_2hop_percent", pct(with2)},
            {"coverage_3hop_percent", pct(with3)},
            {"pathless_percent", 100.0 - pct(index.size())}};
}

}  // namespace kgc
