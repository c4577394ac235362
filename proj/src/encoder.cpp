#include "kgc/encoder.hpp"

#include <cmath>
#include <thread>

#include "kgc/errors.hpp"

namespace kgc {

TokenId TokenVocab::entity(EntityId e) const {
    require(e < num_entities_, "entity id out of token range");
    return kNumSpecial + e;
}

TokenId TokenVocab::relation(RelationId r) const {
    require(r < num_relations_, "relation id out of token range");
    return static_cast<TokenId>(kNumSpecial + num_entities_ + r);
}

QuerySequence build_query(const TokenVocab& vocab, EntityId h, RelationId r, QueryKind kind,
                          const RelationPath* path, std::size_t soft_count, std::size_t max_tokens,
                          bool relation_prefix) {
    QuerySequence q;
    q.kind = kind;
    const bool is_path = kind == QueryKind::Path2 || kind == QueryKind::Path3;
    require(is_path == (path != nullptr), "build_query: a path is required exactly for Path2/Path3 queries");
    if (is_path) {
        const std::size_t want = kind == QueryKind::Path2 ? 2 : 3;
        require(path->hops() == want, "build_query: path hop count does not match query kind");
    }

    q.tokens = {TokenVocab::kCls, vocab.entity(h), TokenVocab::kSep};
    if (!is_path || relation_prefix) q.tokens.push_back(vocab.relation(r));
    if (is_path) {
        // Keep room for the closing SEP; drop trailing path relations if needed.
        const std::size_t room = max_tokens > q.tokens.size() + 1 ? max_tokens - q.tokens.size() - 1 : 0;
        const std::size_t keep = std::min(room, path->hops());
        for (std::size_t i = 0; i < keep; ++i) q.tokens.push_back(vocab.relation(path->relations[i]));
    }
    if (kind == QueryKind::Soft) {
        require(soft_count > 0, "build_query: soft query needs at least one prompt vector");
        q.soft_slot = q.tokens.size();
        q.soft_count = soft_count;
        q.soft_relation = r;
    }
    q.tokens.push_back(TokenVocab::kSep);
    require(q.length() <= max_tokens, "build_query: query longer than max_tokens");
    return q;
}

QuerySequence build_entity_sequence(const TokenVocab& vocab, EntityId t) {
    QuerySequence q;
    q.kind = QueryKind::Relation;
    q.tokens = {TokenVocab::kCls, vocab.entity(t), TokenVocab::kSep};
    return q;
}

namespace {

constexpr double kNormEps = 1e-12;

double uniform(std::mt19937_64& rng, double bound) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return (2.0 * u - 1.0) * bound;
}

Mat random_mat(std::size_t rows, std::size_t cols, double fan_in, std::mt19937_64& rng) {
    Mat m(rows, cols);
    const double bound = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, bound);
    return m;
}

TowerParams init_tower(const ModelDims& d, std::size_t vocab, std::mt19937_64& rng) {
    const auto& e = d.encoder;
    TowerParams t;
    t.tok = random_mat(vocab, e.d_tok, static_cast<double>(e.d_tok), rng);
    t.pos = random_mat(e.max_tokens, e.d_tok, static_cast<double>(e.d_tok), rng);
    t.w_a = random_mat(e.d_proj, e.d_tok, static_cast<double>(e.d_tok), rng);
    t.b_a = random_mat(e.d_proj, 1, static_cast<double>(e.d_tok), rng);
    t.w_b = random_mat(e.d_emb, e.d_proj, static_cast<double>(e.d_proj), rng);
    t.b_b = random_mat(e.d_emb, 1, static_cast<double>(e.d_proj), rng);
    return t;
}

TowerParams zero_tower(const TowerParams& o) {
    return {Mat::Zero(o.tok.rows(), o.tok.cols()), Mat::Zero(o.pos.rows(), o.pos.cols()),
            Mat::Zero(o.w_a.rows(), o.w_a.cols()), Mat::Zero(o.b_a.rows(), o.b_a.cols()),
            Mat::Zero(o.w_b.rows(), o.w_b.cols()), Mat::Zero(o.b_b.rows(), o.b_b.cols())};
}

template <typename M, typename T>
void collect(T& tower, const std::string& prefix, std::vector<M>& out) {
    out.push_back({prefix + ".tok", &tower.tok});
    out.push_back({prefix + ".pos", &tower.pos});
    out.push_back({prefix + ".w_a", &tower.w_a});
    out.push_back({prefix + ".b_a", &tower.b_a});
    out.push_back({prefix + ".w_b", &tower.w_b});
    out.push_back({prefix + ".b_b", &tower.b_b});
}

template <typename M, typename Self>
std::vector<M> all_tensors(Self& self) {
    std::vector<M> out;
    collect<M>(self.query, "query", out);
    collect<M>(self.entity, "entity", out);
    out.push_back({"soft.x", &self.soft.x});
    out.push_back({"soft.w1", &self.soft.w1});
    out.push_back({"soft.w2", &self.soft.w2});
    out.push_back({"log_tau", &self.log_tau});
    return out;
}

}  // namespace

Model Model::initialize(const ModelDims& dims, std::uint64_t seed, double tau_init) {
    require(tau_init > 0.0, "initial temperature must be positive");
    require(dims.encoder.max_tokens >= 5 + dims.soft.l, "max_tokens too small for soft queries");
    Model m;
    m.dims = dims;
    m.vocab = TokenVocab(dims.num_entities, dims.num_relations);
    std::mt19937_64 rng(seed);
    m.query = init_tower(dims, m.vocab.size(), rng);
    m.entity = init_tower(dims, m.vocab.size(), rng);
    const auto& s = dims.soft;
    m.soft.x = random_mat(dims.num_relations, s.d_in, static_cast<double>(s.d_in), rng);
    m.soft.w1 = random_mat(s.d_h, s.d_in, static_cast<double>(s.d_in), rng);
    m.soft.w2 = random_mat(s.l * dims.encoder.d_tok, s.d_h, static_cast<double>(s.d_h), rng);
    m.log_tau = Mat::Constant(1, 1, std::log(tau_init));
    return m;
}

Model Model::zeros_like(const Model& o) {
    Model m;
    m.dims = o.dims;
    m.vocab = o.vocab;
    m.query = zero_tower(o.query);
    m.entity = zero_tower(o.entity);
    m.soft.x = Mat::Zero(o.soft.x.rows(), o.soft.x.cols());
    m.soft.w1 = Mat::Zero(o.soft.w1.rows(), o.soft.w1.cols());
    m.soft.w2 = Mat::Zero(o.soft.w2.rows(), o.soft.w2.cols());
    m.log_tau = Mat::Zero(1, 1);
    return m;
}

std::vector<Model::Tensor> Model::tensors() { return all_tensors<Tensor>(*this); }
std::vector<Model::ConstTensor> Model::tensors() const { return all_tensors<ConstTensor>(*this); }

Mat soft_path_vectors(const SoftPathParams& soft, RelationId r, std::size_t l) {
    require(r < static_cast<RelationId>(soft.x.rows()), "soft_path_vectors: relation out of range");
    const Vec pre = soft.w1 * soft.x.row(r).transpose();
    const Vec flat = soft.w2 * pre.cwiseMax(0.0);
    require(flat.size() % static_cast<Eigen::Index>(l) == 0, "soft output width not divisible by l");
    const auto width = flat.size() / static_cast<Eigen::Index>(l);
    return Eigen::Map<const Mat>(flat.data(), static_cast<Eigen::Index>(l), width);
}

Vec encode(const TowerParams& tower, const SoftPathParams* soft, const QuerySequence& seq, EncodeCache* cache) {
    const auto n = seq.length();
    require(n <= static_cast<std::size_t>(tower.pos.rows()), "sequence longer than max_tokens");
    const auto d = tower.tok.cols();

    Vec soft_pre, soft_hid;
    Mat soft_vecs;
    if (seq.soft_count > 0) {
        require(soft != nullptr, "soft query encoded without soft-path parameters");
        soft_pre = soft->w1 * soft->x.row(seq.soft_relation).transpose();
        soft_hid = soft_pre.cwiseMax(0.0);
        const Vec flat = soft->w2 * soft_hid;
        require(flat.size() == static_cast<Eigen::Index>(seq.soft_count) * d, "soft output width mismatch");
        soft_vecs = Eigen::Map<const Mat>(flat.data(), static_cast<Eigen::Index>(seq.soft_count), d);
    }

    Vec pooled = Vec::Zero(d);
    std::size_t n_pooled = 0;
    for (std::size_t p = 0; p < n; ++p) {
        if (seq.soft_count > 0 && p >= seq.soft_slot && p < seq.soft_slot + seq.soft_count) {
            pooled += soft_vecs.row(static_cast<Eigen::Index>(p - seq.soft_slot)).transpose();
        } else {
            const auto k = (seq.soft_count > 0 && p >= seq.soft_slot) ? p - seq.soft_count : p;
            const auto tok = seq.tokens[k];
            if (tok == TokenVocab::kPad) continue;
            pooled += tower.tok.row(tok).transpose();
        }
        pooled += tower.pos.row(static_cast<Eigen::Index>(p)).transpose();
        ++n_pooled;
    }
    require(n_pooled > 0, "sequence has no non-PAD position");
    pooled /= static_cast<double>(n_pooled);

    Vec pre = tower.w_a * pooled + tower.b_a.col(0);
    Vec hidden = pre.cwiseMax(0.0);
    Vec z = tower.w_b * hidden + tower.b_b.col(0);
    const double norm = std::max(z.norm(), kNormEps);
    Vec out = z / norm;

    if (cache) {
        cache->seq = seq;
        cache->n_pooled = n_pooled;
        cache->pooled = std::move(pooled);
        cache->pre = std::move(pre);
        cache->hidden = std::move(hidden);
        cache->z = std::move(z);
        cache->norm = norm;
        cache->out = out;
        cache->soft_pre = std::move(soft_pre);
        cache->soft_hid = std::move(soft_hid);
        cache->soft_vecs = std::move(soft_vecs);
    }
    return out;
}

Vec encode_query(const Model& model, const QuerySequence& seq, EncodeCache* cache) {
    return encode(model.query, &model.soft, seq, cache);
}

Vec encode_entity(const Model& model, EntityId t, EncodeCache* cache) {
    return encode(model.entity, nullptr, build_entity_sequence(model.vocab, t), cache);
}

Mat encode_all_entities(const Model& model, unsigned threads) {
    const auto n = static_cast<Eigen::Index>(model.dims.num_entities);
    Mat out(n, static_cast<Eigen::Index>(model.dims.encoder.d_emb));
    const auto work = [&](Eigen::Index begin, Eigen::Index step) {
        for (Eigen::Index i = begin; i < n; i += step)
            out.row(i) = encode_entity(model, static_cast<EntityId>(i)).transpose();
    };
    threads = std::max(1u, threads);
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w, threads);
        for (auto& th : pool) th.join();
    }
    return out;
}

void backward(const TowerParams& tower, const SoftPathParams* soft, const EncodeCache& c, const Vec& grad_out,
              TowerParams& tg, SoftPathParams* sg) {
    const Vec dz = c.z.norm() > kNormEps ? Vec((grad_out - c.out * c.out.dot(grad_out)) / c.norm) : Vec(grad_out / kNormEps);
    tg.w_b.noalias() += dz * c.hidden.transpose();
    tg.b_b.col(0) += dz;
    const Vec dpre = (tower.w_b.transpose() * dz).cwiseProduct(
        c.pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
    tg.w_a.noalias() += dpre * c.pooled.transpose();
    tg.b_a.col(0) += dpre;
    const Vec dx = tower.w_a.transpose() * dpre / static_cast<double>(c.n_pooled);

    const auto& seq = c.seq;
    Mat dsoft;
    if (seq.soft_count > 0) dsoft = Mat::Zero(static_cast<Eigen::Index>(seq.soft_count), tower.tok.cols());
    for (std::size_t p = 0; p < seq.length(); ++p) {
        if (seq.soft_count > 0 && p >= seq.soft_slot && p < seq.soft_slot + seq.soft_count) {
            dsoft.row(static_cast<Eigen::Index>(p - seq.soft_slot)) += dx.transpose();
        } else {
            const auto k = (seq.soft_count > 0 && p >= seq.soft_slot) ? p - seq.soft_count : p;
            const auto tok = seq.tokens[k];
            if (tok == TokenVocab::kPad) continue;
            tg.tok.row(tok) += dx.transpose();
        }
        tg.pos.row(static_cast<Eigen::Index>(p)) += dx.transpose();
    }

    if (seq.soft_count > 0 && sg != nullptr) {
        const Eigen::Map<const Vec> dflat(dsoft.data(), dsoft.size());
        sg->w2.noalias() += dflat * c.soft_hid.transpose();
        const Vec da = (soft->w2.transpose() * dflat)
                           .cwiseProduct(c.soft_pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
        const auto r = static_cast<Eigen::Index>(seq.soft_relation);
        sg->w1.noalias() += da * soft->x.row(r);
        sg->x.row(r) += (soft->w1.transpose() * da).transpose();
    }
}

}  // namespace kgc
