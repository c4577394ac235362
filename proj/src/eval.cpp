#include "kgc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <thread>

#include "kgc/errors.hpp"

namespace kgc {

nlohmann::json MetricSet::to_json() const {
    return {{"mrr", mrr},
            {"hits", {{"1", hits1}, {"3", hits3}, {"10", hits10}}},
            {"n_queries", n_queries}};
}

nlohmann::json EvalReport::to_json() const {
    auto j = overall.to_json();
    if (with_path || without_path) {
        j["stratified"] = nlohmann::json::object();
        if (with_path) j["stratified"]["with_path"] = with_path->to_json();
        if (without_path) j["stratified"]["without_path"] = without_path->to_json();
    }
    return j;
}

MetricSet compute_metrics(std::span<const std::size_t> ranks) {
    require(!ranks.empty(), "compute_metrics: no ranks");
    double rr = 0.0;
    std::size_t h1 = 0, h3 = 0, h10 = 0;
    for (const auto r : ranks) {
        require(r >= 1, "compute_metrics: ranks start at 1");
        rr += 1.0 / static_cast<double>(r);
        h1 += r <= 1;
        h3 += r <= 3;
        h10 += r <= 10;
    }
    const auto n = static_cast<double>(ranks.size());
    return {rr / n, static_cast<double>(h1) / n, static_cast<double>(h3) / n, static_cast<double>(h10) / n,
            ranks.size()};
}

std::size_t filtered_rank(const RankResult& result, EntityId gold, const KnowledgeGraph* known) {
    std::size_t rank = 1;
    for (const auto idx : result.order) {
        const auto c = result.candidates[idx];
        if (c == gold) return rank;
        if (known && known->contains(result.head, result.relation, c)) continue;
        ++rank;
    }
    throw ContractError("filtered_rank: gold entity is not among the candidates");
}

namespace {

struct Query {
    EntityId head;
    RelationId relation;
    EntityId gold;
};

std::vector<EntityId> sample_candidates(std::size_t n_entities, EntityId gold, std::size_t count, std::uint64_t seed) {
    std::vector<EntityId> out{gold};
    if (count >= n_entities) {
        out.resize(n_entities);
        for (std::size_t i = 0; i < n_entities; ++i) out[i] = static_cast<EntityId>(i);
        return out;
    }
    std::mt19937_64 rng(seed);
    std::vector<char> used(n_entities, 0);
    used[gold] = 1;
    while (out.size() < count) {
        const auto e = static_cast<EntityId>(rng() % n_entities);
        if (used[e]) continue;
        used[e] = 1;
        out.push_back(e);
    }
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

EvalReport evaluate_split(const Model& model, std::span<const Triple> triples, const KnowledgeGraph& graph,
                          const KnowledgeGraph& filter, const EvalOptions& options, std::vector<std::size_t>* ranks_out,
                          EvalTimings* timings, const Mat* entity_matrix) {
    require(!triples.empty(), "evaluate_split: no triples");
    const auto t0 = std::chrono::steady_clock::now();
    Mat own_matrix;
    if (!entity_matrix) {
        own_matrix = encode_all_entities(model, options.threads);
        entity_matrix = &own_matrix;
    }
    if (timings) timings->entity_encoding_s = seconds_since(t0);

    std::vector<Query> queries;
    queries.reserve(2 * triples.size());
    for (const auto& t : triples) {
        queries.push_back({t.head, t.relation, t.tail});
        queries.push_back({t.tail, inverse(t.relation), t.head});
    }

    const auto t1 = std::chrono::steady_clock::now();
    std::vector<std::size_t> ranks(queries.size(), 0);
    std::vector<char> pathful(queries.size(), 0);
    const auto work = [&](std::size_t i) {
        const auto& q = queries[i];
        std::vector<EntityId> cands;
        if (options.candidates > 0)
            cands = sample_candidates(model.dims.num_entities, q.gold, options.candidates, options.seed + i);
        const auto res = rank_query(model, *entity_matrix, graph, q.head, q.relation, options.rank, q.gold,
                                    options.filtered ? &filter : nullptr, cands);
        ranks[i] = *res.gold_rank;
        if (options.stratify) pathful[i] = has_path(graph, q.head, q.gold) ? 1 : 0;
    };
    const unsigned threads = std::max(1u, options.threads);
    if (threads == 1) {
        for (std::size_t i = 0; i < queries.size(); ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < queries.size(); i += threads) work(i);
            });
        for (auto& th : pool) th.join();
    }
    if (timings) timings->ranking_s = seconds_since(t1);

    EvalReport report;
    report.overall = compute_metrics(ranks);
    if (options.stratify) {
        std::vector<std::size_t> with, without;
        for (std::size_t i = 0; i < ranks.size(); ++i) (pathful[i] ? with : without).push_back(ranks[i]);
        if (!with.empty()) report.with_path = compute_metrics(with);
        else report.with_path = MetricSet{};
        if (!without.empty()) report.without_path = compute_metrics(without);
        else report.without_path = MetricSet{};
    }
    if (ranks_out) *ranks_out = std::move(ranks);
    return report;
}

AlignmentStats path_alignment(const Model& model, std::span<const Triple> triples, const KnowledgeGraph& graph,
                              const MiningOptions& mining, bool relation_prefix) {
    AlignmentStats s;
    const auto max_tokens = model.dims.encoder.max_tokens;
    double soft_sum = 0.0, rel_sum = 0.0;
    for (const auto& t : triples) {
        for (const auto& q : {t, Triple{t.tail, inverse(t.relation), t.head}}) {
            const auto set = retain_top(enumerate_paths(graph, q.head, q.tail, mining.max_hops), mining);
            if (set.empty()) continue;
            const Vec hr = encode_query(model, build_query(model.vocab, q.head, q.relation, QueryKind::Relation, nullptr, 0, max_tokens));
            const Vec hrs = encode_query(model, build_query(model.vocab, q.head, q.relation, QueryKind::Soft, nullptr,
                                                            model.dims.soft.l, max_tokens));
            for (const auto* bucket : {&set.two_hop, &set.three_hop}) {
                for (const auto& p : *bucket) {
                    const auto kind = p.hops() == 2 ? QueryKind::Path2 : QueryKind::Path3;
                    const Vec e = encode_query(model, build_query(model.vocab, q.head, q.relation, kind, &p, 0,
                                                                  max_tokens, relation_prefix));
                    soft_sum += score(hrs, e);
                    rel_sum += score(hr, e);
                    ++s.n_paths;
                }
            }
        }
    }
    if (s.n_paths > 0) {
        s.soft_cos = soft_sum / static_cast<double>(s.n_paths);
        s.relation_cos = rel_sum / static_cast<double>(s.n_paths);
    }
    return s;
}

}  // namespace kgc
