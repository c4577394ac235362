#include "kgc/config.hpp"

#include <fstream>
#include <set>

#include "kgc/errors.hpp"

namespace kgc {

namespace {

using nlohmann::json;

/// Reads fields from one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ParseError("config section '" + name_ + "' must be an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ParseError("config " + name_ + "." + key + ": " + e.what());
        }
    }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.contains(k)) throw ParseError("unknown config key " + name_ + "." + k);
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

const json& section_or_empty(const json& j, const char* key) {
    static const json kEmpty = json::object();
    return j.contains(key) ? j.at(key) : kEmpty;
}

void read_train_sections(const json& j, TrainConfig& c) {
    {
        Section s(section_or_empty(j, "mining"), "mining");
        s.read("K", c.mining.K);
        s.read("min_confidence", c.mining.min_confidence);
        s.read("max_hops", c.mining.max_hops);
        s.finish();
    }
    {
        Section s(section_or_empty(j, "encoder"), "encoder");
        s.read("d_tok", c.encoder.d_tok);
        s.read("d_proj", c.encoder.d_proj);
        s.read("d_emb", c.encoder.d_emb);
        s.read("max_tokens", c.encoder.max_tokens);
        s.read("l", c.soft.l);
        s.read("d_in", c.soft.d_in);
        s.read("d_h", c.soft.d_h);
        s.finish();
    }
    {
        Section s(section_or_empty(j, "train"), "train");
        s.read("tau_init", c.tau_init);
        s.read("tau_learnable", c.tau_learnable);
        s.read("w", c.w);
        s.read("lr", c.lr);
        s.read("warmup_steps", c.warmup_steps);
        s.read("epochs", c.epochs);
        s.read("batch_size", c.batch_size);
        s.read("grad_clip", c.grad_clip);
        s.read("seed", c.seed);
        s.read("relation_prefix", c.relation_prefix);
        s.read("stop_grad_alignment", c.stop_grad_alignment);
        s.read("confidence_sampling", c.confidence_sampling);
        s.read("mask_false_negatives", c.mask_false_negatives);
        s.read("adam_beta1", c.adam_beta1);
        s.read("adam_beta2", c.adam_beta2);
        s.read("adam_eps", c.adam_eps);
        s.finish();
    }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ParseError("config must be a JSON object");
    for (const auto& [k, _] : j.items())
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end())
            throw ParseError("unknown config section " + k);
}

}  // namespace

EvalOptions RunConfig::eval_options() const {
    EvalOptions o;
    o.rank = rank;
    o.rank.mining = train.mining;
    o.rank.mining.threads = 1;
    o.rank.relation_prefix = train.relation_prefix;
    o.filtered = eval.filtered;
    o.stratify = eval.stratify;
    o.candidates = eval.candidates;
    o.seed = eval.seed;
    o.threads = threads;
    return o;
}

json train_config_to_json(const TrainConfig& c) {
    return {{"mining", {{"K", c.mining.K}, {"min_confidence", c.mining.min_confidence}, {"max_hops", c.mining.max_hops}}},
            {"encoder",
             {{"d_tok", c.encoder.d_tok},
              {"d_proj", c.encoder.d_proj},
              {"d_emb", c.encoder.d_emb},
              {"max_tokens", c.encoder.max_tokens},
              {"l", c.soft.l},
              {"d_in", c.soft.d_in},
              {"d_h", c.soft.d_h}}},
            {"train",
             {{"tau_init", c.tau_init},
              {"tau_learnable", c.tau_learnable},
              {"w", c.w},
              {"lr", c.lr},
              {"warmup_steps", c.warmup_steps},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"grad_clip", c.grad_clip},
              {"seed", c.seed},
              {"relation_prefix", c.relation_prefix},
              {"stop_grad_alignment", c.stop_grad_alignment},
              {"confidence_sampling", c.confidence_sampling},
              {"mask_false_negatives", c.mask_false_negatives},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps}}}};
}

TrainConfig train_config_from_json(const json& j) {
    check_keys(j, {"mining", "encoder", "train"});
    TrainConfig c;
    read_train_sections(j, c);
    try {
        c.validate();
    } catch (const ContractError& e) {
        throw ParseError(std::string("invalid config: ") + e.what());
    }
    return c;
}

json run_config_to_json(const RunConfig& c) {
    auto j = train_config_to_json(c.train);
    j["data"] = {{"bundle", c.data.bundle},
                 {"train", c.data.train},
                 {"valid", c.data.valid},
                 {"test", c.data.test},
                 {"strict", c.data.strict}};
    j["rank"] = {{"N", c.rank.N}, {"alpha", c.rank.alpha_enabled}, {"clamp_alpha", c.rank.clamp_alpha}};
    j["eval"] = {{"split", c.eval.split},
                 {"stratify", c.eval.stratify},
                 {"filtered", c.eval.filtered},
                 {"candidates", c.eval.candidates},
                 {"seed", c.eval.seed}};
    j["threads"] = c.threads;
    return j;
}

RunConfig run_config_from_json(const json& j) {
    check_keys(j, {"data", "mining", "encoder", "train", "rank", "eval", "threads"});
    RunConfig c;
    read_train_sections(j, c.train);
    {
        Section s(section_or_empty(j, "data"), "data");
        s.read("bundle", c.data.bundle);
        s.read("train", c.data.train);
        s.read("valid", c.data.valid);
        s.read("test", c.data.test);
        s.read("strict", c.data.strict);
        s.finish();
    }
    {
        Section s(section_or_empty(j, "rank"), "rank");
        s.read("N", c.rank.N);
        s.read("alpha", c.rank.alpha_enabled);
        s.read("clamp_alpha", c.rank.clamp_alpha);
        s.finish();
    }
    {
        Section s(section_or_empty(j, "eval"), "eval");
        s.read("split", c.eval.split);
        s.read("stratify", c.eval.stratify);
        s.read("filtered", c.eval.filtered);
        s.read("candidates", c.eval.candidates);
        s.read("seed", c.eval.seed);
        s.finish();
    }
    if (j.contains("threads")) {
        try {
            c.threads = j.at("threads").get<unsigned>();
        } catch (const json::exception& e) {
            throw ParseError(std::string("config threads: ") + e.what());
        }
    }
    if (c.eval.split != "test" && c.eval.split != "valid") throw ParseError("eval.split must be test or valid");
    try {
        c.train.validate();
    } catch (const ContractError& e) {
        throw ParseError(std::string("invalid config: ") + e.what());
    }
    c.rank.mining = c.train.mining;
    c.rank.relation_prefix = c.train.relation_prefix;
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

DatasetSplit load_dataset(const DataConfig& data) {
    if (!data.bundle.empty()) return DatasetSplit::load(data.bundle);
    if (data.train.empty() || data.valid.empty() || data.test.empty())
        throw ParseError("config data section needs either bundle or train/valid/test paths");
    return load_split(data.train, data.valid, data.test, data.strict);
}

}  // namespace kgc
