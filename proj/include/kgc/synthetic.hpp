#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgc/graph.hpp"

namespace kgc {

/// `target <= first . second`: target(a, c) holds whenever first(a, b) and second(b, c) do.
/// Operands name base family relations (parent, brother, sister, spouse),
/// optionally with the inverse marker.
struct CompositionRule {
    std::string target;
    std::string first;
    std::string second;

    /// Parses "target=first.second".
    static CompositionRule parse(const std::string& text);
    std::string to_string() const;
};

struct SyntheticOptions {
    std::uint64_t seed = 0;
    std::size_t n_people = 500;
    std::vector<CompositionRule> rules;
    double holdout_fraction = 0.2;  // of each target relation's triples, moved to valid+test
    double valid_fraction = 0.0;    // share of the held-out triples that go to valid
    std::size_t generations = 4;
};

/// Family-tree knowledge graph. Base relations are always fully in train, so every
/// held-out rule triple keeps its two-hop witness there. Pure function of the options.
DatasetSplit generate_synthetic_kg(const SyntheticOptions& options);

/// The default grandparent/uncle rule set.
std::vector<CompositionRule> default_family_rules();

nlohmann::json synthetic_manifest(const SyntheticOptions& options, const DatasetSplit& split);

/// Writes train.txt, valid.txt, test.txt and manifest.json into `dir`.
void write_synthetic(const std::filesystem::path& dir, const SyntheticOptions& options,
                     const DatasetSplit& split);

}  // namespace kgc
