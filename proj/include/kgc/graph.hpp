#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgc {

using EntityId = std::uint32_t;

/// Relation ids live in the augmented space: forward relation b is 2b, its
/// inverse is 2b+1, so inverse() is a single bit flip.
using RelationId = std::uint32_t;

constexpr RelationId inverse(RelationId r) noexcept { return r ^ 1u; }
constexpr bool is_inverse(RelationId r) noexcept { return (r & 1u) != 0; }
constexpr RelationId forward_id(std::uint32_t base_index) noexcept { return base_index * 2u; }
constexpr std::uint32_t base_index(RelationId r) noexcept { return r / 2u; }

/// Suffix that names the inverse of a relation. Base relation names may not end with it.
inline constexpr std::string_view kInverseMarker = "^-1";

struct Triple {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;

    friend bool operator==(const Triple&, const Triple&) = default;
    friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Dense symbol table; ids are assigned in first-appearance order.
class Vocabulary {
public:
    /// Returns the id of `name`, adding it if absent.
    std::uint32_t intern(std::string_view name);
    /// Throws VocabularyError when absent.
    std::uint32_t at(std::string_view name) const;
    bool contains(std::string_view name) const;
    const std::string& name(std::uint32_t id) const { return names_.at(id); }
    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.names_ == b.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

/// Train/valid/test triples sharing one entity and one (forward) relation vocabulary.
/// Triples carry augmented-space forward relation ids.
struct DatasetSplit {
    Vocabulary entities;
    Vocabulary relations;  // base (forward) names only
    std::vector<Triple> train;
    std::vector<Triple> valid;
    std::vector<Triple> test;

    std::size_t num_entities() const noexcept { return entities.size(); }
    std::size_t num_base_relations() const noexcept { return relations.size(); }
    std::size_t num_relations() const noexcept { return 2 * relations.size(); }

    /// Name of an augmented relation id (inverse names carry kInverseMarker).
    std::string relation_name(RelationId r) const;
    /// Accepts forward names and names with the inverse marker.
    RelationId relation_id(std::string_view name) const;

    void save(const std::filesystem::path& path) const;
    static DatasetSplit load(const std::filesystem::path& path);
};

enum class VocabMode {
    Extend,  // unknown symbols are added
    Frozen,  // unknown symbols raise VocabularyError
};

/// Parses `head<TAB>relation<TAB>tail` lines. Empty lines are skipped.
std::vector<Triple> load_triples(std::istream& in, Vocabulary& entities, Vocabulary& relations,
                                 VocabMode mode = VocabMode::Extend,
                                 const std::string& source = "<stream>");
std::vector<Triple> load_triples(const std::filesystem::path& path, Vocabulary& entities,
                                 Vocabulary& relations, VocabMode mode = VocabMode::Extend);

/// Loads the three split files. In strict mode valid/test may not introduce new symbols.
DatasetSplit load_split(const std::filesystem::path& train, const std::filesystem::path& valid,
                        const std::filesystem::path& test, bool strict = false);

void write_triples(std::ostream& out, const DatasetSplit& split, std::span<const Triple> triples);

/// Immutable directed multigraph closed under relation inversion.
///
/// Out-edges of every head are stored contiguously, sorted by (relation, tail),
/// so tails(h, r) is a contiguous sorted range and membership is a binary search.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    std::size_t num_entities() const noexcept { return num_entities_; }
    std::size_t num_relations() const noexcept { return num_relations_; }
    std::size_t num_triples() const noexcept { return edge_tail_.size(); }
    /// Input triples dropped because they repeated an earlier one.
    std::size_t duplicates_dropped() const noexcept { return duplicates_dropped_; }

    /// Sorted tails t with (h, r, t) stored.
    std::span<const EntityId> tails(EntityId h, RelationId r) const;
    std::vector<EntityId> known_tails(EntityId h, RelationId r) const;
    bool contains(EntityId h, RelationId r, EntityId t) const;
    bool contains(const Triple& t) const { return contains(t.head, t.relation, t.tail); }

    /// Out-edges of h as parallel (relation, tail) arrays sorted by (relation, tail).
    std::span<const RelationId> out_relations(EntityId h) const;
    std::span<const EntityId> out_tails(EntityId h) const;
    std::size_t out_degree(EntityId h) const;

    /// Every stored triple, ordered by (head, relation, tail).
    std::vector<Triple> triples() const;

private:
    friend KnowledgeGraph augment_inverses(std::span<const Triple>, std::size_t, std::size_t);

    std::size_t num_entities_ = 0;
    std::size_t num_relations_ = 0;
    std::size_t duplicates_dropped_ = 0;
    std::vector<std::size_t> offsets_;  // size num_entities_ + 1
    std::vector<RelationId> edge_rel_;
    std::vector<EntityId> edge_tail_;
};

/// Builds the inversion-closed graph from forward triples. Duplicates are dropped and counted.
KnowledgeGraph augment_inverses(std::span<const Triple> forward, std::size_t num_entities,
                                std::size_t num_base_relations);

/// Graph over train triples only.
KnowledgeGraph build_train_graph(const DatasetSplit& split);
/// Graph over train ∪ valid ∪ test, used as the filter set for ranking.
KnowledgeGraph build_filter_graph(const DatasetSplit& split);

}  // namespace kgc
