#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "kgc/errors.hpp"
#include "kgc/graph.hpp"

using namespace kgc;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("kgc_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Graph, InverseIdsFlipLowBit) {
    EXPECT_EQ(inverse(forward_id(3)), 7u);
    EXPECT_EQ(inverse(inverse(6)), 6u);
    EXPECT_TRUE(is_inverse(7));
    EXPECT_FALSE(is_inverse(6));
    EXPECT_EQ(base_index(7), 3u);
}

TEST(Graph, LoadsTriplesInFirstAppearanceOrder) {
    Vocabulary ents, rels;
    std::istringstream in("a\tr\tb\n\nb\ts\tc\na\tr\tc\n");
    const auto triples = load_triples(in, ents, rels);
    ASSERT_EQ(triples.size(), 3u);
    EXPECT_EQ(ents.names(), (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(rels.names(), (std::vector<std::string>{"r", "s"}));
    EXPECT_EQ(triples[1], (Triple{1, forward_id(1), 2}));
}

TEST(Graph, ParseErrorNamesLine) {
    Vocabulary ents, rels;
    std::istringstream in("a\tr\tb\nbroken line\n");
    try {
        load_triples(in, ents, rels, VocabMode::Extend, "train.txt");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("train.txt:2"), std::string::npos) << e.what();
    }
}

TEST(Graph, RejectsReservedInverseSuffix) {
    Vocabulary ents, rels;
    std::istringstream in("a\tr^-1\tb\n");
    EXPECT_THROW(load_triples(in, ents, rels), ParseError);
}

TEST(Graph, FrozenModeRejectsUnknownSymbols) {
    Vocabulary ents, rels;
    std::istringstream train("a\tr\tb\n");
    load_triples(train, ents, rels);
    std::istringstream test("a\tr\tzzz\n");
    EXPECT_THROW(load_triples(test, ents, rels, VocabMode::Frozen), VocabularyError);
}

TEST(Graph, InversionClosureAndDuplicates) {
    const std::vector<Triple> fwd = {{0, 0, 1}, {0, 0, 2}, {0, 0, 1}, {2, 2, 0}};
    const auto g = augment_inverses(fwd, 3, 2);
    EXPECT_EQ(g.duplicates_dropped(), 1u);
    EXPECT_EQ(g.num_triples(), 6u);
    for (const auto& t : g.triples()) EXPECT_TRUE(g.contains(t.tail, inverse(t.relation), t.head));
    EXPECT_EQ(g.known_tails(0, 0), (std::vector<EntityId>{1, 2}));
    EXPECT_EQ(g.known_tails(1, 1), (std::vector<EntityId>{0}));
    EXPECT_EQ(g.known_tails(0, 3), (std::vector<EntityId>{2}));
    EXPECT_TRUE(g.tails(1, 0).empty());
    EXPECT_EQ(g.out_degree(0), 3u);
}

TEST(Graph, SplitRoundTripAndStrictMode) {
    const auto dir = temp_dir("graph_split");
    write(dir / "train.txt", "a\tr\tb\nb\tr\tc\n");
    write(dir / "valid.txt", "a\tr\tc\n");
    write(dir / "test.txt", "c\tr\ta\n");
    const auto split = load_split(dir / "train.txt", dir / "valid.txt", dir / "test.txt", true);
    EXPECT_EQ(split.num_entities(), 3u);
    EXPECT_EQ(split.relation_id("r^-1"), 1u);
    EXPECT_EQ(split.relation_name(1), "r^-1");
    EXPECT_THROW(split.relation_id("nope"), VocabularyError);

    split.save(dir / "ds.bin");
    const auto back = DatasetSplit::load(dir / "ds.bin");
    EXPECT_EQ(back.entities, split.entities);
    EXPECT_EQ(back.relations, split.relations);
    EXPECT_EQ(back.train, split.train);
    EXPECT_EQ(back.test, split.test);

    write(dir / "test2.txt", "c\tr\tnewcomer\n");
    EXPECT_THROW(load_split(dir / "train.txt", dir / "valid.txt", dir / "test2.txt", true), VocabularyError);
    EXPECT_NO_THROW(load_split(dir / "train.txt", dir / "valid.txt", dir / "test2.txt", false));
}

TEST(Graph, FilterGraphCoversAllSplits) {
    DatasetSplit s;
    for (auto n : {"a", "b", "c"}) s.entities.intern(n);
    s.relations.intern("r");
    s.train = {{0, 0, 1}};
    s.valid = {{1, 0, 2}};
    s.test = {{0, 0, 2}};
    const auto train = build_train_graph(s);
    const auto filter = build_filter_graph(s);
    EXPECT_FALSE(train.contains(0, 0, 2));
    EXPECT_TRUE(filter.contains(0, 0, 2));
    EXPECT_TRUE(filter.contains(2, 1, 1));
}

TEST(Graph, TruncatedBundleIsIntegrityError) {
    const auto dir = temp_dir("graph_trunc");
    DatasetSplit s;
    s.entities.intern("a");
    s.entities.intern("b");
    s.relations.intern("r");
    s.train = {{0, 0, 1}};
    s.save(dir / "ds.bin");
    const auto size = std::filesystem::file_size(dir / "ds.bin");
    std::filesystem::resize_file(dir / "ds.bin", size - 3);
    EXPECT_THROW(DatasetSplit::load(dir / "ds.bin"), std::runtime_error);
}
