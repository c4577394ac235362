#include "kgc/graph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "kgc/binary_io.hpp"
#include "kgc/errors.hpp"

namespace kgc {

std::uint32_t Vocabulary::intern(std::string_view name) {
    const std::string key(name);
    if (auto it = index_.find(key); it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.push_back(key);
    index_.emplace(key, id);
    return id;
}

std::uint32_t Vocabulary::at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw VocabularyError("unknown symbol: " + std::string(name));
    return it->second;
}

bool Vocabulary::contains(std::string_view name) const {
    return index_.contains(std::string(name));
}

std::string DatasetSplit::relation_name(RelationId r) const {
    const auto& base = relations.name(base_index(r));
    return is_inverse(r) ? base + std::string(kInverseMarker) : base;
}

RelationId DatasetSplit::relation_id(std::string_view name) const {
    if (name.ends_with(kInverseMarker)) {
        name.remove_suffix(kInverseMarker.size());
        return inverse(forward_id(relations.at(name)));
    }
    return forward_id(relations.at(name));
}

namespace {

constexpr char kSplitMagic[5] = "KGDS";
constexpr std::uint32_t kSplitVersion = 1;

void put_vocab(std::ostream& out, const Vocabulary& v) {
    binio::put<std::uint64_t>(out, v.size());
    for (const auto& n : v.names()) binio::put_string(out, n);
}

Vocabulary get_vocab(std::istream& in) {
    Vocabulary v;
    const auto n = binio::get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto name = binio::get_string(in);
        if (v.intern(name) != i) throw IntegrityError("duplicate vocabulary entry: " + name);
    }
    return v;
}

void put_triples(std::ostream& out, const std::vector<Triple>& ts) {
    binio::put<std::uint64_t>(out, ts.size());
    for (const auto& t : ts) {
        binio::put<std::uint32_t>(out, t.head);
        binio::put<std::uint32_t>(out, t.relation);
        binio::put<std::uint32_t>(out, t.tail);
    }
}

std::vector<Triple> get_triples(std::istream& in, std::size_t n_ent, std::size_t n_rel) {
    const auto n = binio::get<std::uint64_t>(in);
    std::vector<Triple> ts;
    ts.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Triple t;
        t.head = binio::get<std::uint32_t>(in);
        t.relation = binio::get<std::uint32_t>(in);
        t.tail = binio::get<std::uint32_t>(in);
        if (t.head >= n_ent || t.tail >= n_ent || t.relation >= n_rel || is_inverse(t.relation))
            throw IntegrityError("triple id out of range in dataset bundle");
        ts.push_back(t);
    }
    return ts;
}

}  // namespace

void DatasetSplit::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write " + path.string());
    binio::put_magic(out, kSplitMagic, kSplitVersion);
    put_vocab(out, entities);
    put_vocab(out, relations);
    put_triples(out, train);
    put_triples(out, valid);
    put_triples(out, test);
    if (!out) throw ParseError("write failed: " + path.string());
}

DatasetSplit DatasetSplit::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    binio::expect_magic(in, kSplitMagic, kSplitVersion);
    DatasetSplit s;
    s.entities = get_vocab(in);
    s.relations = get_vocab(in);
    s.train = get_triples(in, s.num_entities(), s.num_relations());
    s.valid = get_triples(in, s.num_entities(), s.num_relations());
    s.test = get_triples(in, s.num_entities(), s.num_relations());
    in.peek();
    if (!in.eof()) throw IntegrityError("trailing bytes in dataset bundle " + path.string());
    return s;
}

std::vector<Triple> load_triples(std::istream& in, Vocabulary& entities, Vocabulary& relations,
                                 VocabMode mode, const std::string& source) {
    std::vector<Triple> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string_view fields[3];
        std::size_t count = 0;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            const auto end = tab == std::string::npos ? line.size() : tab;
            if (count < 3) fields[count] = std::string_view(line).substr(start, end - start);
            ++count;
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (count != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
            throw ParseError(source + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                             std::to_string(count));
        if (fields[1].ends_with(kInverseMarker))
            throw ParseError(source + ":" + std::to_string(line_no) + ": relation name uses reserved suffix " +
                             std::string(kInverseMarker));
        Triple t;
        if (mode == VocabMode::Frozen) {
            try {
                t.head = entities.at(fields[0]);
                t.relation = forward_id(relations.at(fields[1]));
                t.tail = entities.at(fields[2]);
            } catch (const VocabularyError& e) {
                throw VocabularyError(source + ":" + std::to_string(line_no) + ": " + e.what());
            }
        } else {
            t.head = entities.intern(fields[0]);
            t.relation = forward_id(relations.intern(fields[1]));
            t.tail = entities.intern(fields[2]);
        }
        out.push_back(t);
    }
    return out;
}

std::vector<Triple> load_triples(const std::filesystem::path& path, Vocabulary& entities,
                                 Vocabulary& relations, VocabMode mode) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return load_triples(in, entities, relations, mode, path.string());
}

DatasetSplit load_split(const std::filesystem::path& train, const std::filesystem::path& valid,
                        const std::filesystem::path& test, bool strict) {
    DatasetSplit s;
    s.train = load_triples(train, s.entities, s.relations, VocabMode::Extend);
    const auto mode = strict ? VocabMode::Frozen : VocabMode::Extend;
    s.valid = load_triples(valid, s.entities, s.relations, mode);
    s.test = load_triples(test, s.entities, s.relations, mode);
    return s;
}

void write_triples(std::ostream& out, const DatasetSplit& split, std::span<const Triple> triples) {
    for (const auto& t : triples)
        out << split.entities.name(t.head) << '\t' << split.relation_name(t.relation) << '\t'
            << split.entities.name(t.tail) << '\n';
}

std::span<const EntityId> KnowledgeGraph::tails(EntityId h, RelationId r) const {
    if (h >= num_entities_) return {};
    const auto begin = edge_rel_.begin() + static_cast<std::ptrdiff_t>(offsets_[h]);
    const auto end = edge_rel_.begin() + static_cast<std::ptrdiff_t>(offsets_[h + 1]);
    const auto [lo, hi] = std::equal_range(begin, end, r);
    const auto first = static_cast<std::size_t>(lo - edge_rel_.begin());
    return {edge_tail_.data() + first, static_cast<std::size_t>(hi - lo)};
}

std::vector<EntityId> KnowledgeGraph::known_tails(EntityId h, RelationId r) const {
    const auto ts = tails(h, r);
    return {ts.begin(), ts.end()};
}

bool KnowledgeGraph::contains(EntityId h, RelationId r, EntityId t) const {
    const auto ts = tails(h, r);
    return std::binary_search(ts.begin(), ts.end(), t);
}

std::span<const RelationId> KnowledgeGraph::out_relations(EntityId h) const {
    if (h >= num_entities_) return {};
    return {edge_rel_.data() + offsets_[h], offsets_[h + 1] - offsets_[h]};
}

std::span<const EntityId> KnowledgeGraph::out_tails(EntityId h) const {
    if (h >= num_entities_) return {};
    return {edge_tail_.data() + offsets_[h], offsets_[h + 1] - offsets_[h]};
}

std::size_t KnowledgeGraph::out_degree(EntityId h) const {
    return h >= num_entities_ ? 0 : offsets_[h + 1] - offsets_[h];
}

std::vector<Triple> KnowledgeGraph::triples() const {
    std::vector<Triple> out;
    out.reserve(num_triples());
    for (EntityId h = 0; h < num_entities_; ++h)
        for (auto i = offsets_[h]; i < offsets_[h + 1]; ++i) out.push_back({h, edge_rel_[i], edge_tail_[i]});
    return out;
}

KnowledgeGraph augment_inverses(std::span<const Triple> forward, std::size_t num_entities,
                                std::size_t num_base_relations) {
    KnowledgeGraph g;
    g.num_entities_ = num_entities;
    g.num_relations_ = 2 * num_base_relations;

    std::vector<Triple> all;
    all.reserve(2 * forward.size());
    for (const auto& t : forward) {
        require(t.head < num_entities && t.tail < num_entities, "entity id out of range");
        require(t.relation < g.num_relations_ && !is_inverse(t.relation),
                "augment_inverses expects forward relation ids");
        all.push_back(t);
        all.push_back({t.tail, inverse(t.relation), t.head});
    }
    std::sort(all.begin(), all.end());
    const auto before = all.size();
    all.erase(std::unique(all.begin(), all.end()), all.end());
    // Each forward duplicate also duplicated its inverse.
    g.duplicates_dropped_ = (before - all.size()) / 2;

    g.offsets_.assign(num_entities + 1, 0);
    for (const auto& t : all) ++g.offsets_[t.head + 1];
    std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());
    g.edge_rel_.reserve(all.size());
    g.edge_tail_.reserve(all.size());
    for (const auto& t : all) {
        g.edge_rel_.push_back(t.relation);
        g.edge_tail_.push_back(t.tail);
    }
    return g;
}

KnowledgeGraph build_train_graph(const DatasetSplit& split) {
    return augment_inverses(split.train, split.num_entities(), split.num_base_relations());
}

KnowledgeGraph build_filter_graph(const DatasetSplit& split) {
    std::vector<Triple> all;
    all.reserve(split.train.size() + split.valid.size() + split.test.size());
    all.insert(all.end(), split.train.begin(), split.train.end());
    all.insert(all.end(), split.valid.begin(), split.valid.end());
    all.insert(all.end(), split.test.begin(), split.test.end());
    return augment_inverses(all, split.num_entities(), split.num_base_relations());
}

}  // namespace kgc
