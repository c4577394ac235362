#include <gtest/gtest.h>

#include "kgc/config.hpp"
#include "kgc/errors.hpp"

using namespace kgc;
using nlohmann::json;

TEST(RunConfig, ReadsSectionsAndKeepsDefaults) {
    const auto j = json::parse(R"({"data": {"bundle": "ds.bin"}, "mining": {"K": 2},
        "encoder": {"d_tok": 16, "l": 4}, "train": {"w": [1, 0, 0, 0], "epochs": 3},
        "rank": {"N": 7, "alpha": false}, "eval": {"split": "valid"}, "threads": 2})");
    const auto c = run_config_from_json(j);
    EXPECT_EQ(c.data.bundle, "ds.bin");
    EXPECT_EQ(c.train.mining.K, 2u);
    EXPECT_EQ(c.rank.mining.K, 2u);
    EXPECT_EQ(c.train.encoder.d_tok, 16u);
    EXPECT_EQ(c.train.encoder.d_emb, EncoderDims{}.d_emb);
    EXPECT_EQ(c.train.soft.l, 4u);
    EXPECT_EQ(c.train.w[1], 0.0);
    EXPECT_EQ(c.train.epochs, 3u);
    EXPECT_EQ(c.rank.N, 7u);
    EXPECT_FALSE(c.rank.alpha_enabled);
    EXPECT_EQ(c.eval.split, "valid");
    EXPECT_EQ(c.threads, 2u);
    EXPECT_EQ(c.eval_options().rank.N, 7u);
}

TEST(RunConfig, RoundTrip) {
    RunConfig c;
    c.train.lr = 0.01;
    c.train.seed = 99;
    c.rank.N = 5;
    const auto back = run_config_from_json(run_config_to_json(c));
    EXPECT_EQ(run_config_to_json(back), run_config_to_json(c));
}

TEST(RunConfig, RejectsUnknownKeys) {
    EXPECT_THROW(run_config_from_json(json::parse(R"({"trian": {}})")), ParseError);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"train": {"learning_rate": 1}})")), ParseError);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"rank": {"n": 1}})")), ParseError);
}

TEST(RunConfig, RejectsInvalidValues) {
    EXPECT_THROW(run_config_from_json(json::parse(R"({"train": {"batch_size": 1}})")), ParseError);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"train": {"lr": "fast"}})")), ParseError);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"mining": {"max_hops": 4}})")), ParseError);
    EXPECT_THROW(run_config_from_json(json::parse(R"({"eval": {"split": "train"}})")), ParseError);
}
