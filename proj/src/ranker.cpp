#include "kgc/ranker.hpp"

#include <algorithm>
#include <numeric>

#include "kgc/errors.hpp"
#include "kgc/eval.hpp"

namespace kgc {

std::vector<double> base_scores(const Model& model, EntityId h, RelationId r, const Mat& entity_matrix) {
    const auto max_tokens = model.dims.encoder.max_tokens;
    const Vec hr = encode_query(model, build_query(model.vocab, h, r, QueryKind::Relation, nullptr, 0, max_tokens));
    const Vec hrs = encode_query(model, build_query(model.vocab, h, r, QueryKind::Soft, nullptr, model.dims.soft.l, max_tokens));
    const Vec a = entity_matrix * hr;
    const Vec b = entity_matrix * hrs;
    std::vector<double> out(static_cast<std::size_t>(a.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i) out[static_cast<std::size_t>(i)] = a[i] + b[i];
    return out;
}

std::vector<std::size_t> top_n(std::span<const double> scores, std::size_t N) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto better = [&](std::size_t a, std::size_t b) {
        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    };
    const auto n = std::min(N, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), better);
    idx.resize(n);
    return idx;
}

std::map<EntityId, double> alpha_rerank(const Model& model, EntityId h, RelationId r,
                                        std::span<const EntityId> survivors, const KnowledgeGraph& graph,
                                        const RankOptions& options) {
    std::map<EntityId, double> alpha;
    if (survivors.empty()) return alpha;
    const auto max_tokens = model.dims.encoder.max_tokens;
    const Vec hrs = encode_query(model, build_query(model.vocab, h, r, QueryKind::Soft, nullptr, model.dims.soft.l, max_tokens));

    // Many survivors share relation sequences; encode each sequence once.
    std::map<std::vector<RelationId>, double> cosine;
    const auto path_cos = [&](const RelationPath& p) {
        auto it = cosine.find(p.relations);
        if (it != cosine.end()) return it->second;
        const auto kind = p.hops() == 2 ? QueryKind::Path2 : QueryKind::Path3;
        const Vec e = encode_query(model, build_query(model.vocab, h, r, kind, &p, 0, max_tokens, options.relation_prefix));
        const double c = score(e, hrs);
        cosine.emplace(p.relations, c);
        return c;
    };

    for (const auto& [cand, set] : search_paths(graph, h, survivors, options.mining)) {
        if (set.empty()) continue;
        double best = -std::numeric_limits<double>::infinity();
        for (const auto* bucket : {&set.two_hop, &set.three_hop})
            for (const auto& p : *bucket) best = std::max(best, path_cos(p));
        alpha.emplace(cand, options.clamp_alpha ? std::max(0.0, best) : best);
    }
    return alpha;
}

RankResult rank_query(const Model& model, const Mat& entity_matrix, const KnowledgeGraph& graph, EntityId h,
                      RelationId r, const RankOptions& options, std::optional<EntityId> gold,
                      const KnowledgeGraph* filter, std::span<const EntityId> candidates) {
    if (h >= model.dims.num_entities) throw VocabularyError("unknown head entity id " + std::to_string(h));
    if (r >= model.dims.num_relations) throw VocabularyError("unknown relation id " + std::to_string(r));

    RankResult res;
    res.head = h;
    res.relation = r;
    const auto all = base_scores(model, h, r, entity_matrix);
    if (candidates.empty()) {
        res.candidates.resize(all.size());
        std::iota(res.candidates.begin(), res.candidates.end(), EntityId{0});
        res.base = all;
    } else {
        res.candidates.assign(candidates.begin(), candidates.end());
        std::sort(res.candidates.begin(), res.candidates.end());
        res.candidates.erase(std::unique(res.candidates.begin(), res.candidates.end()), res.candidates.end());
        for (auto c : res.candidates) {
            require(c < all.size(), "candidate entity out of range");
            res.base.push_back(all[c]);
        }
    }
    res.alpha.assign(res.candidates.size(), std::nullopt);
    res.final_score = res.base;

    if (options.alpha_enabled && options.N > 0) {
        const auto survivors_idx = top_n(res.base, options.N);
        std::vector<EntityId> survivors;
        for (auto i : survivors_idx) survivors.push_back(res.candidates[i]);
        const auto alpha = alpha_rerank(model, h, r, survivors, graph, options);
        for (auto i : survivors_idx) {
            if (auto it = alpha.find(res.candidates[i]); it != alpha.end()) {
                res.alpha[i] = it->second;
                res.final_score[i] = res.base[i] + it->second;
            }
        }
    }

    // Candidates are sorted by id, so index order is the entity-id tie-break.
    res.order = top_n(res.final_score, res.final_score.size());
    if (gold) res.gold_rank = filtered_rank(res, *gold, filter);
    return res;
}

}  // namespace kgc
