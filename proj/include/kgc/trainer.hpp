#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgc/encoder.hpp"
#include "kgc/graph.hpp"
#include "kgc/paths.hpp"

namespace kgc {

struct TrainConfig {
    double tau_init = 0.05;
    bool tau_learnable = true;
    std::array<double, 4> w = {1.0, 1.0, 1.0, 1.0};  // hr_t, hp_t, hrs_t, hrs_p
    double lr = 1e-3;
    std::size_t warmup_steps = 400;
    std::size_t epochs = 20;
    std::size_t batch_size = 512;
    double grad_clip = 10.0;
    EncoderDims encoder;
    SoftDims soft;
    MiningOptions mining;
    std::uint64_t seed = 0;

    bool relation_prefix = true;         // path queries carry the query relation
    bool stop_grad_alignment = false;    // hrs_p does not update path-query encodings
    bool confidence_sampling = false;    // sample paths by confidence instead of uniformly
    bool mask_false_negatives = true;    // in-batch candidates that are known true tails are skipped
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

/// One training example with the paths sampled for it this epoch.
struct BatchMember {
    Triple triple;
    std::optional<RelationPath> path2;
    std::optional<RelationPath> path3;
};

struct LossTerms {
    double hr_t = 0.0;
    double hp_t = 0.0;
    double hrs_t = 0.0;
    double hrs_p = 0.0;
    double total = 0.0;
};

/// -(1/|P|) sum_q log softmax_target(q . c / tau) over all candidates.
double info_nce_multi(std::span<const Vec> queries, std::size_t target, std::span<const Vec> candidates,
                      double tau);

/// Single-query InfoNCE over the unmasked candidates, with gradients. Any of the gradient
/// outputs may be null. grad_candidates must have candidates.size() entries when given.
double info_nce(const Vec& query, std::size_t target, std::span<const Vec> candidates,
                std::span<const char> masked, double tau, double scale, Vec* grad_query,
                std::vector<Vec>* grad_candidates, double* grad_log_tau);

/// w1*L_hr_t + w2*L_hp_t + w3*L_hrs_t + w4*L_hrs_p over in-batch candidates.
/// `known` (optional) marks in-batch candidates that are true tails for masking.
/// Gradients are accumulated into `grads` when non-null.
LossTerms batch_loss(const Model& model, std::span<const BatchMember> batch, const TrainConfig& config,
                     const KnowledgeGraph* known, Model* grads);

/// Linear warmup to `lr` over `warmup` steps, then linear decay to 0 at `total`.
double learning_rate(std::size_t step, double lr, std::size_t warmup, std::size_t total);

struct AdamState {
    Model m;
    Model v;
    std::size_t step = 0;

    static AdamState for_model(const Model& model);
};

/// Global L2 norm of all gradient tensors.
double gradient_norm(const Model& grads);

/// Clips, then applies one Adam update. The temperature is left alone unless learnable.
void adam_update(Model& model, Model& grads, AdamState& state, double lr, const TrainConfig& config);

struct EpochMetrics {
    std::size_t epoch = 0;
    LossTerms mean;
    double lr = 0.0;
    double tau = 0.0;
};

struct TrainState {
    Model model;
    AdamState adam;
    std::mt19937_64 rng;
    std::size_t epoch = 0;
    std::vector<EpochMetrics> history;
};

/// Forward triples followed by their inverses.
std::vector<Triple> training_examples(const DatasetSplit& split);

/// Chooses this epoch's paths for a triple.
BatchMember sample_member(const Triple& triple, const PathIndex& index, const TrainConfig& config,
                          std::mt19937_64& rng);

TrainState init_training(const DatasetSplit& split, const TrainConfig& config);

using StepLogger = std::function<void(const nlohmann::json&)>;

/// Runs the remaining epochs. `graph` is the train graph (used for false-negative masking).
void train(TrainState& state, std::span<const Triple> examples, const KnowledgeGraph& graph,
           const PathIndex& index, const TrainConfig& config, const StepLogger& log = {});

struct GradCheckBlock {
    std::string name;
    double max_rel_error = 0.0;
    double analytic_norm = 0.0;
    double numeric_norm = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;
    double max_rel_error = 0.0;
    bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Gradients smaller than this are compared in absolute rather than relative terms.
inline constexpr double kGradCheckFloor = 1e-8;

/// Fourth-order central finite differences on every parameter vs the analytic gradient.
/// The stencil shrinks (up to 1000x) until no ReLU input changes sign within it.
/// Block error is max_i |analytic_i - numeric_i| / max(max_i |numeric_i|, max_i |analytic_i|, kGradCheckFloor).
GradCheckReport grad_check(const Model& model, std::span<const BatchMember> batch, const TrainConfig& config,
                           const KnowledgeGraph* known, double step = 1e-3);

}  // namespace kgc
