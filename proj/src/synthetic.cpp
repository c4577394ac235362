#include "kgc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "kgc/errors.hpp"

namespace kgc {

namespace {

const std::vector<std::string> kBaseRelations = {"parent", "brother", "sister", "spouse"};

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

// Uniform index in [0, n) with a fixed algorithm, so output does not depend on the
// standard library's distribution implementation.
std::size_t draw(std::mt19937_64& rng, std::size_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    return static_cast<std::size_t>(x % n);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw(rng, i)]);
}

struct Person {
    bool male = false;
    std::size_t generation = 0;
    std::ptrdiff_t family = -1;  // index of the parents' couple
};

}  // namespace

CompositionRule CompositionRule::parse(const std::string& text) {
    const auto eq = text.find('=');
    const auto dot = text.find('.', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || dot == std::string::npos)
        throw ParseError("rule must look like target=first.second: " + text);
    CompositionRule r{trim(text.substr(0, eq)), trim(text.substr(eq + 1, dot - eq - 1)),
                      trim(text.substr(dot + 1))};
    if (r.target.empty() || r.first.empty() || r.second.empty())
        throw ParseError("rule has an empty component: " + text);
    return r;
}

std::string CompositionRule::to_string() const { return target + "=" + first + "." + second; }

std::vector<CompositionRule> default_family_rules() {
    return {{"grandparent", "parent", "parent"}, {"uncle", "brother", "parent"}};
}

DatasetSplit generate_synthetic_kg(const SyntheticOptions& opt) {
    if (opt.rules.empty()) throw GenerationError("at least one composition rule is required");
    if (!(opt.holdout_fraction > 0.0 && opt.holdout_fraction < 1.0))
        throw GenerationError("holdout_fraction must lie in (0, 1)");
    if (!(opt.valid_fraction >= 0.0 && opt.valid_fraction < 1.0))
        throw GenerationError("valid_fraction must lie in [0, 1)");
    if (opt.generations < 3) throw GenerationError("need at least 3 generations for two-hop rules");
    if (opt.n_people < 4 * opt.generations)
        throw GenerationError("n_people too small for " + std::to_string(opt.generations) + " generations");

    DatasetSplit split;
    for (const auto& name : kBaseRelations) split.relations.intern(name);
    for (const auto& rule : opt.rules) {
        for (const auto* operand : {&rule.first, &rule.second}) {
            std::string_view base = *operand;
            if (base.ends_with(kInverseMarker)) base.remove_suffix(kInverseMarker.size());
            if (std::find(kBaseRelations.begin(), kBaseRelations.end(), base) == kBaseRelations.end())
                throw GenerationError("rule " + rule.to_string() + " uses unknown relation " + *operand);
        }
        if (std::find(kBaseRelations.begin(), kBaseRelations.end(), rule.target) != kBaseRelations.end())
            throw GenerationError("rule target collides with a base relation: " + rule.target);
        if (split.relations.contains(rule.target))
            throw GenerationError("duplicate rule target: " + rule.target);
        split.relations.intern(rule.target);
    }

    std::mt19937_64 rng(opt.seed);
    std::vector<Person> people(opt.n_people);
    std::vector<std::vector<std::size_t>> by_gen(opt.generations);
    const auto per_gen = opt.n_people / opt.generations;
    for (std::size_t i = 0; i < opt.n_people; ++i) {
        people[i].generation = std::min(i / per_gen, opt.generations - 1);
        people[i].male = (rng() & 1u) != 0;
        by_gen[people[i].generation].push_back(i);
        std::ostringstream name;
        name << "p" << std::setw(4) << std::setfill('0') << i;
        split.entities.intern(name.str());
    }

    // Couples are formed within a generation; children pick a couple from the previous one.
    std::vector<std::pair<std::size_t, std::size_t>> couples;
    std::vector<std::vector<std::size_t>> couples_by_gen(opt.generations);
    for (std::size_t g = 0; g + 1 < opt.generations; ++g) {
        std::vector<std::size_t> men, women;
        for (auto i : by_gen[g]) (people[i].male ? men : women).push_back(i);
        shuffle(men, rng);
        shuffle(women, rng);
        const auto n = std::min(men.size(), women.size());
        for (std::size_t k = 0; k < n; ++k) {
            couples_by_gen[g].push_back(couples.size());
            couples.emplace_back(men[k], women[k]);
        }
        if (couples_by_gen[g].empty()) throw GenerationError("generation without any couple");
    }
    std::vector<std::vector<std::size_t>> children(couples.size());
    for (std::size_t g = 1; g < opt.generations; ++g) {
        const auto& pool = couples_by_gen[g - 1];
        for (auto i : by_gen[g]) {
            const auto c = pool[draw(rng, pool.size())];
            people[i].family = static_cast<std::ptrdiff_t>(c);
            children[c].push_back(i);
        }
    }

    // Base relations as (a, base_index, b) facts.
    std::set<Triple> facts;
    const auto rel = [&](const std::string& name) { return forward_id(split.relations.at(name)); };
    for (std::size_t c = 0; c < couples.size(); ++c) {
        const auto [m, w] = couples[c];
        facts.insert({EntityId(m), rel("spouse"), EntityId(w)});
        facts.insert({EntityId(w), rel("spouse"), EntityId(m)});
        for (auto kid : children[c]) {
            for (auto p : {m, w}) facts.insert({EntityId(p), rel("parent"), EntityId(kid)});
            for (auto sib : children[c]) {
                if (sib == kid) continue;
                facts.insert({EntityId(sib), rel(people[sib].male ? "brother" : "sister"), EntityId(kid)});
            }
        }
    }
    const auto base_graph = augment_inverses(std::vector<Triple>(facts.begin(), facts.end()),
                                             split.num_entities(), split.num_base_relations());

    std::vector<Triple> train(facts.begin(), facts.end());
    for (const auto& rule : opt.rules) {
        const auto r1 = split.relation_id(rule.first);
        const auto r2 = split.relation_id(rule.second);
        std::set<Triple> derived;
        for (EntityId a = 0; a < split.num_entities(); ++a)
            for (auto b : base_graph.tails(a, r1))
                for (auto c : base_graph.tails(b, r2))
                    if (c != a) derived.insert({a, rel(rule.target), c});
        if (derived.size() < 2)
            throw GenerationError("rule " + rule.to_string() + " yields fewer than two triples");
        std::vector<Triple> items(derived.begin(), derived.end());
        shuffle(items, rng);
        const auto n_hold = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(opt.holdout_fraction * static_cast<double>(items.size()))));
        if (n_hold >= items.size()) throw GenerationError("holdout leaves no training triples for " + rule.target);
        const auto n_valid = static_cast<std::size_t>(std::llround(opt.valid_fraction * static_cast<double>(n_hold)));
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i < n_valid) split.valid.push_back(items[i]);
            else if (i < n_hold) split.test.push_back(items[i]);
            else train.push_back(items[i]);
        }
    }
    std::sort(train.begin(), train.end());
    std::sort(split.valid.begin(), split.valid.end());
    std::sort(split.test.begin(), split.test.end());
    split.train = std::move(train);
    return split;
}

nlohmann::json synthetic_manifest(const SyntheticOptions& opt, const DatasetSplit& split) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : opt.rules) rules.push_back(r.to_string());
    return {{"generator", "family-tree"},
            {"seed", opt.seed},
            {"n_people", opt.n_people},
            {"generations", opt.generations},
            {"holdout_fraction", opt.holdout_fraction},
            {"valid_fraction", opt.valid_fraction},
            {"rules", rules},
            {"counts",
             {{"entities", split.num_entities()},
              {"relations", split.num_base_relations()},
              {"train", split.train.size()},
              {"valid", split.valid.size()},
              {"test", split.test.size()}}}};
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticOptions& opt, const DatasetSplit& split) {
    std::filesystem::create_directories(dir);
    const auto write = [&](const char* name, const std::vector<Triple>& ts) {
        std::ofstream out(dir / name, std::ios::trunc);
        if (!out) throw ParseError("cannot write " + (dir / name).string());
        write_triples(out, split, ts);
    };
    write("train.txt", split.train);
    write("valid.txt", split.valid);
    write("test.txt", split.test);
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << synthetic_manifest(opt, split).dump(2) << '\n';
}

}  // namespace kgc
