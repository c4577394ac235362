#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kgc/graph.hpp"
#include "kgc/paths.hpp"

namespace kgc {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

using TokenId = std::uint32_t;

/// Token ids: specials first, then entities, then augmented relations.
class TokenVocab {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kCls = 1;
    static constexpr TokenId kSep = 2;
    static constexpr TokenId kNumSpecial = 3;

    TokenVocab() = default;
    TokenVocab(std::size_t num_entities, std::size_t num_relations)
        : num_entities_(num_entities), num_relations_(num_relations) {}

    TokenId entity(EntityId e) const;
    TokenId relation(RelationId r) const;
    std::size_t size() const noexcept { return kNumSpecial + num_entities_ + num_relations_; }
    std::size_t num_entities() const noexcept { return num_entities_; }
    std::size_t num_relations() const noexcept { return num_relations_; }

private:
    std::size_t num_entities_ = 0;
    std::size_t num_relations_ = 0;
};

enum class QueryKind { Relation, Path2, Path3, Soft };

/// Token-level query. For Soft queries `soft_count` prompt vectors for `soft_relation`
/// are spliced in at `soft_slot` (just after the relation token) at the embedding level.
struct QuerySequence {
    QueryKind kind = QueryKind::Relation;
    std::vector<TokenId> tokens;
    std::size_t soft_slot = 0;
    std::size_t soft_count = 0;
    RelationId soft_relation = 0;

    /// Positions after prompt insertion.
    std::size_t length() const noexcept { return tokens.size() + soft_count; }
    friend bool operator==(const QuerySequence&, const QuerySequence&) = default;
};

struct EncoderDims {
    std::size_t d_tok = 64;
    std::size_t d_proj = 128;
    std::size_t d_emb = 64;
    std::size_t max_tokens = 50;
};

struct SoftDims {
    std::size_t l = 8;      // prompt vectors per relation
    std::size_t d_in = 144;
    std::size_t d_h = 72;
};

/// [CLS] h [SEP] r [path relations] [SEP], or the soft variant with l prompt slots.
/// Path relations are dropped when `relation_prefix` is false (the token r is omitted).
/// Overlength path queries lose trailing path tokens; the head/relation prefix is kept.
QuerySequence build_query(const TokenVocab& vocab, EntityId h, RelationId r, QueryKind kind,
                          const RelationPath* path, std::size_t soft_count, std::size_t max_tokens,
                          bool relation_prefix = true);

/// [CLS] t [SEP]
QuerySequence build_entity_sequence(const TokenVocab& vocab, EntityId t);

/// One tower of the dual encoder: embeddings, mean pooling, two-layer MLP, L2 normalisation.
struct TowerParams {
    Mat tok;  // vocab x d_tok
    Mat pos;  // max_tokens x d_tok
    Mat w_a;  // d_proj x d_tok
    Mat b_a;  // d_proj x 1
    Mat w_b;  // d_emb x d_proj
    Mat b_b;  // d_emb x 1
};

/// S_r = W2 * ReLU(W1 * x_r), reshaped row-major to l x d_tok.
struct SoftPathParams {
    Mat x;   // m x d_in
    Mat w1;  // d_h x d_in
    Mat w2;  // (l * d_tok) x d_h
};

struct ModelDims {
    std::size_t num_entities = 0;
    std::size_t num_relations = 0;  // augmented
    EncoderDims encoder;
    SoftDims soft;
};

/// Query tower, entity tower, soft-path stack and log-temperature.
struct Model {
    ModelDims dims;
    TokenVocab vocab;
    TowerParams query;
    TowerParams entity;
    SoftPathParams soft;
    Mat log_tau;  // 1 x 1

    static Model initialize(const ModelDims& dims, std::uint64_t seed, double tau_init);
    /// Same shapes, all zeros.
    static Model zeros_like(const Model& other);

    double tau() const { return std::exp(log_tau(0, 0)); }

    struct Tensor {
        std::string name;
        Mat* value;
    };
    struct ConstTensor {
        std::string name;
        const Mat* value;
    };
    /// Every parameter tensor in a fixed order.
    std::vector<Tensor> tensors();
    std::vector<ConstTensor> tensors() const;
};

/// l x d_tok prompt vectors for relation r.
Mat soft_path_vectors(const SoftPathParams& soft, RelationId r, std::size_t l);

/// Forward state kept for the backward pass.
struct EncodeCache {
    QuerySequence seq;
    std::size_t n_pooled = 0;
    Vec pooled;
    Vec pre;     // W_a * pooled + b_a
    Vec hidden;  // ReLU(pre)
    Vec z;       // W_b * hidden + b_b
    double norm = 0.0;
    Vec out;     // z / |z|
    Vec soft_pre;   // W1 * x_r
    Vec soft_hid;   // ReLU(soft_pre)
    Mat soft_vecs;  // l x d_tok
};

Vec encode(const TowerParams& tower, const SoftPathParams* soft, const QuerySequence& seq,
           EncodeCache* cache = nullptr);
Vec encode_query(const Model& model, const QuerySequence& seq, EncodeCache* cache = nullptr);
Vec encode_entity(const Model& model, EntityId t, EncodeCache* cache = nullptr);
/// Row i is encode_entity(model, i).
Mat encode_all_entities(const Model& model, unsigned threads = 1);

/// Accumulates d(loss)/d(params) given d(loss)/d(output) of a cached encoding.
void backward(const TowerParams& tower, const SoftPathParams* soft, const EncodeCache& cache,
              const Vec& grad_out, TowerParams& tower_grad, SoftPathParams* soft_grad);

/// Cosine of unit vectors.
inline double score(const Vec& a, const Vec& b) { return a.dot(b); }

}  // namespace kgc
