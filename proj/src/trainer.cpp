#include "kgc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kgc/errors.hpp"

namespace kgc {

void TrainConfig::validate() const {
    require(tau_init > 0.0, "tau_init must be positive");
    for (double wi : w) require(wi >= 0.0, "loss weights must be non-negative");
    require(lr > 0.0, "lr must be positive");
    require(batch_size >= 2, "batch_size must be at least 2 (in-batch negatives)");
    require(grad_clip > 0.0, "grad_clip must be positive");
    require(soft.l >= 1 && soft.d_in >= 1 && soft.d_h >= 1, "soft-path dims must be positive");
    require(encoder.d_tok >= 1 && encoder.d_proj >= 1 && encoder.d_emb >= 1, "encoder dims must be positive");
    require(encoder.max_tokens >= 5 + soft.l, "max_tokens must fit a soft query (5 + l)");
    require(mining.K >= 1, "K must be at least 1");
    require(mining.max_hops == 2 || mining.max_hops == 3, "max_hops must be 2 or 3");
}

namespace {

/// Neumaier compensated sum.
class Accumulator {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
        else comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace

double info_nce(const Vec& query, std::size_t target, std::span<const Vec> candidates,
                std::span<const char> masked, double tau, double scale, Vec* grad_query,
                std::vector<Vec>* grad_candidates, double* grad_log_tau) {
    require(tau > 0.0, "info_nce: temperature must be positive");
    require(target < candidates.size(), "info_nce: target index out of range");
    require(masked.empty() || masked.size() == candidates.size(), "info_nce: mask size mismatch");
    const auto is_masked = [&](std::size_t j) { return !masked.empty() && masked[j] && j != target; };

    std::vector<double> logits(candidates.size(), 0.0);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        if (is_masked(j)) continue;
        logits[j] = query.dot(candidates[j]) / tau;
        peak = std::max(peak, logits[j]);
    }
    Accumulator z;
    for (std::size_t j = 0; j < candidates.size(); ++j)
        if (!is_masked(j)) z.add(std::exp(logits[j] - peak));
    const double log_z = std::log(z.value());
    const double loss = peak + log_z - logits[target];

    if (scale != 0.0 && (grad_query || grad_candidates || grad_log_tau)) {
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            if (is_masked(j)) continue;
            const double p = std::exp(logits[j] - peak - log_z);
            const double dl = scale * (p - (j == target ? 1.0 : 0.0));
            if (grad_query) *grad_query += (dl / tau) * candidates[j];
            if (grad_candidates) (*grad_candidates)[j] += (dl / tau) * query;
            if (grad_log_tau) *grad_log_tau -= dl * logits[j];
        }
    }
    return loss;
}

double info_nce_multi(std::span<const Vec> queries, std::size_t target, std::span<const Vec> candidates,
                      double tau) {
    require(!queries.empty(), "info_nce_multi: need at least one positive query");
    Accumulator acc;
    for (const auto& q : queries) acc.add(info_nce(q, target, candidates, {}, tau, 0.0, nullptr, nullptr, nullptr));
    return acc.value() / static_cast<double>(queries.size());
}

namespace {

struct Encoded {
    EncodeCache cache;
    Vec out;
    Vec grad;
};

/// The query sequences batch_loss encodes for one member: hr, hrs, then the optional paths.
struct MemberQueries {
    QuerySequence hr;
    QuerySequence hrs;
    std::optional<QuerySequence> path[2];
};

MemberQueries member_queries(const Model& model, const BatchMember& member, const TrainConfig& config) {
    const auto& vocab = model.vocab;
    const auto max_tokens = model.dims.encoder.max_tokens;
    const auto& tr = member.triple;
    MemberQueries q{build_query(vocab, tr.head, tr.relation, QueryKind::Relation, nullptr, 0, max_tokens),
                    build_query(vocab, tr.head, tr.relation, QueryKind::Soft, nullptr, model.dims.soft.l, max_tokens),
                    {}};
    const std::optional<RelationPath>* paths[2] = {&member.path2, &member.path3};
    for (int k = 0; k < 2; ++k)
        if (*paths[k])
            q.path[k] = build_query(vocab, tr.head, tr.relation, k == 0 ? QueryKind::Path2 : QueryKind::Path3,
                                    &**paths[k], 0, max_tokens, config.relation_prefix);
    return q;
}

Encoded run_query(const Model& model, const QuerySequence& seq) {
    Encoded e;
    e.out = encode_query(model, seq, &e.cache);
    e.grad = Vec::Zero(e.out.size());
    return e;
}

}  // namespace

LossTerms batch_loss(const Model& model, std::span<const BatchMember> batch, const TrainConfig& config,
                     const KnowledgeGraph* known, Model* grads) {
    const auto B = batch.size();
    require(B >= 2, "batch_loss: batch needs at least two members");
    const double tau = model.tau();

    std::vector<Encoded> hr, hrs, tails;
    std::vector<std::optional<Encoded>> paths[2];
    hr.reserve(B);
    hrs.reserve(B);
    tails.reserve(B);
    for (int k = 0; k < 2; ++k) paths[k].resize(B);
    for (std::size_t i = 0; i < B; ++i) {
        const auto q = member_queries(model, batch[i], config);
        hr.push_back(run_query(model, q.hr));
        hrs.push_back(run_query(model, q.hrs));
        for (int k = 0; k < 2; ++k)
            if (q.path[k]) paths[k][i] = run_query(model, *q.path[k]);
        Encoded e;
        e.out = encode_entity(model, batch[i].triple.tail, &e.cache);
        e.grad = Vec::Zero(e.out.size());
        tails.push_back(std::move(e));
    }

    std::vector<Vec> tail_vecs;
    for (const auto& t : tails) tail_vecs.push_back(t.out);
    std::vector<Vec> tail_grads(B, Vec::Zero(model.dims.encoder.d_emb));
    double grad_log_tau = 0.0;
    const bool want = grads != nullptr;

    // Candidate j is skipped for member i when it is the same entity or a known true tail.
    std::vector<std::vector<char>> tail_mask(B, std::vector<char>(B, 0));
    for (std::size_t i = 0; i < B; ++i) {
        const auto& ti = batch[i].triple;
        for (std::size_t j = 0; j < B; ++j) {
            if (j == i) continue;
            const auto tj = batch[j].triple.tail;
            tail_mask[i][j] = tj == ti.tail ||
                              (config.mask_false_negatives && known && known->contains(ti.head, ti.relation, tj));
        }
    }

    const auto& w = config.w;
    LossTerms terms;

    {
        Accumulator a;
        const double scale = w[0] / static_cast<double>(B);
        for (std::size_t i = 0; i < B; ++i)
            a.add(info_nce(hr[i].out, i, tail_vecs, tail_mask[i], tau, scale, want ? &hr[i].grad : nullptr,
                           want ? &tail_grads : nullptr, want ? &grad_log_tau : nullptr));
        terms.hr_t = a.value() / static_cast<double>(B);
    }
    {
        Accumulator a;
        const double scale = w[2] / static_cast<double>(B);
        for (std::size_t i = 0; i < B; ++i)
            a.add(info_nce(hrs[i].out, i, tail_vecs, tail_mask[i], tau, scale, want ? &hrs[i].grad : nullptr,
                           want ? &tail_grads : nullptr, want ? &grad_log_tau : nullptr));
        terms.hrs_t = a.value() / static_cast<double>(B);
    }

    for (int k = 0; k < 2; ++k) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < B; ++i)
            if (paths[k][i]) members.push_back(i);
        if (members.empty()) continue;
        const auto n = static_cast<double>(members.size());

        Accumulator hp;
        for (const auto i : members)
            hp.add(info_nce(paths[k][i]->out, i, tail_vecs, tail_mask[i], tau, w[1] / n,
                            want ? &paths[k][i]->grad : nullptr, want ? &tail_grads : nullptr,
                            want ? &grad_log_tau : nullptr));
        terms.hp_t += hp.value() / n;

        // Soft query of each member against the batch's paths of this hop count.
        std::vector<Vec> cand;
        for (const auto i : members) cand.push_back(paths[k][i]->out);
        std::vector<Vec> cand_grads(members.size(), Vec::Zero(model.dims.encoder.d_emb));
        Accumulator al;
        for (std::size_t a = 0; a < members.size(); ++a) {
            std::vector<char> mask(members.size(), 0);
            for (std::size_t b = 0; b < members.size(); ++b)
                mask[b] = b != a && paths[k][members[b]]->cache.seq == paths[k][members[a]]->cache.seq;
            const auto i = members[a];
            al.add(info_nce(hrs[i].out, a, cand, mask, tau, w[3] / n, want ? &hrs[i].grad : nullptr,
                            want && !config.stop_grad_alignment ? &cand_grads : nullptr,
                            want ? &grad_log_tau : nullptr));
        }
        terms.hrs_p += al.value() / n;
        if (want && !config.stop_grad_alignment)
            for (std::size_t a = 0; a < members.size(); ++a) paths[k][members[a]]->grad += cand_grads[a];
    }

    terms.total = w[0] * terms.hr_t + w[1] * terms.hp_t + w[2] * terms.hrs_t + w[3] * terms.hrs_p;

    if (grads) {
        const auto back_query = [&](const Encoded& e) {
            if (e.grad.squaredNorm() == 0.0) return;
            backward(model.query, &model.soft, e.cache, e.grad, grads->query, &grads->soft);
        };
        for (std::size_t i = 0; i < B; ++i) {
            back_query(hr[i]);
            back_query(hrs[i]);
            for (int k = 0; k < 2; ++k)
                if (paths[k][i]) back_query(*paths[k][i]);
            if (tail_grads[i].squaredNorm() != 0.0)
                backward(model.entity, nullptr, tails[i].cache, tail_grads[i], grads->entity, nullptr);
        }
        grads->log_tau(0, 0) += grad_log_tau;
    }
    return terms;
}

double learning_rate(std::size_t step, double lr, std::size_t warmup, std::size_t total) {
    if (step < warmup) return lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
    if (total <= warmup) return lr;
    if (step >= total) return 0.0;
    return lr * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

AdamState AdamState::for_model(const Model& model) {
    return {Model::zeros_like(model), Model::zeros_like(model), 0};
}

double gradient_norm(const Model& grads) {
    Accumulator acc;
    for (const auto& t : grads.tensors()) acc.add(t.value->squaredNorm());
    return std::sqrt(acc.value());
}

void adam_update(Model& model, Model& grads, AdamState& state, double lr, const TrainConfig& config) {
    if (!config.tau_learnable) grads.log_tau.setZero();
    const double norm = gradient_norm(grads);
    if (norm > config.grad_clip) {
        const double s = config.grad_clip / norm;
        for (auto& t : grads.tensors()) *t.value *= s;
    }
    ++state.step;
    const double b1 = config.adam_beta1, b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    auto params = model.tensors();
    auto gs = grads.tensors();
    auto ms = state.m.tensors();
    auto vs = state.v.tensors();
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!config.tau_learnable && params[k].value == &model.log_tau) continue;
        auto& p = *params[k].value;
        const auto& g = *gs[k].value;
        auto& m = *ms[k].value;
        auto& v = *vs[k].value;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_eps);
    }
}

std::vector<Triple> training_examples(const DatasetSplit& split) {
    std::vector<Triple> out(split.train.begin(), split.train.end());
    for (const auto& t : split.train) out.push_back({t.tail, inverse(t.relation), t.head});
    return out;
}

namespace {

std::optional<RelationPath> pick(const std::vector<RelationPath>& paths, bool by_confidence, std::mt19937_64& rng) {
    if (paths.empty()) return std::nullopt;
    if (paths.size() == 1) return paths.front();
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (!by_confidence) return paths[std::min(paths.size() - 1, static_cast<std::size_t>(u * static_cast<double>(paths.size())))];
    double total = 0.0;
    for (const auto& p : paths) total += p.confidence;
    double acc = 0.0;
    for (const auto& p : paths) {
        acc += p.confidence;
        if (u * total < acc) return p;
    }
    return paths.back();
}

}  // namespace

BatchMember sample_member(const Triple& triple, const PathIndex& index, const TrainConfig& config,
                          std::mt19937_64& rng) {
    const auto& set = index.lookup(triple);
    BatchMember m;
    m.triple = triple;
    m.path2 = pick(set.two_hop, config.confidence_sampling, rng);
    m.path3 = pick(set.three_hop, config.confidence_sampling, rng);
    return m;
}

TrainState init_training(const DatasetSplit& split, const TrainConfig& config) {
    config.validate();
    ModelDims dims;
    dims.num_entities = split.num_entities();
    dims.num_relations = split.num_relations();
    dims.encoder = config.encoder;
    dims.soft = config.soft;
    // Sub-seeds at fixed offsets from the run seed.
    auto model = Model::initialize(dims, config.seed + 1, config.tau_init);
    auto adam = AdamState::for_model(model);
    return {std::move(model), std::move(adam), std::mt19937_64(config.seed + 2), 0, {}};
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t b = 0; b < n; b += batch_size) {
        const auto e = std::min(n, b + batch_size);
        if (e - b >= 2) out.emplace_back(b, e);
        else if (!out.empty()) out.back().second = e;  // fold a lone trailing example into the previous batch
    }
    return out;
}

std::string describe_batch(std::span<const BatchMember> batch) {
    std::ostringstream s;
    s << "offending batch (head, relation, tail):";
    for (const auto& m : batch) s << " (" << m.triple.head << "," << m.triple.relation << "," << m.triple.tail << ")";
    return s.str();
}

}  // namespace

void train(TrainState& state, std::span<const Triple> examples, const KnowledgeGraph& graph, const PathIndex& index,
           const TrainConfig& config, const StepLogger& log) {
    config.validate();
    require(examples.size() >= 2, "train: need at least two training examples");
    const auto ranges = batch_ranges(examples.size(), config.batch_size);
    const auto total_steps = ranges.size() * config.epochs;
    auto grads = Model::zeros_like(state.model);

    for (; state.epoch < config.epochs; ++state.epoch) {
        std::vector<std::size_t> order(examples.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[state.rng() % i]);

        Accumulator sums[5];
        double last_lr = 0.0;
        for (const auto& [b, e] : ranges) {
            std::vector<BatchMember> batch;
            batch.reserve(e - b);
            for (auto k = b; k < e; ++k) batch.push_back(sample_member(examples[order[k]], index, config, state.rng));

            for (auto& t : grads.tensors()) t.value->setZero();
            const auto terms = batch_loss(state.model, batch, config, &graph, &grads);
            if (!std::isfinite(terms.total)) throw DivergenceError("non-finite loss at step " + std::to_string(state.adam.step) + "; " + describe_batch(batch));

            const double lr = learning_rate(state.adam.step, config.lr, config.warmup_steps, total_steps);
            adam_update(state.model, grads, state.adam, lr, config);
            last_lr = lr;
            sums[0].add(terms.hr_t);
            sums[1].add(terms.hp_t);
            sums[2].add(terms.hrs_t);
            sums[3].add(terms.hrs_p);
            sums[4].add(terms.total);
            if (log)
                log({{"epoch", state.epoch + 1},
                     {"step", state.adam.step},
                     {"lr", lr},
                     {"tau", state.model.tau()},
                     {"loss", terms.total},
                     {"hr_t", terms.hr_t},
                     {"hp_t", terms.hp_t},
                     {"hrs_t", terms.hrs_t},
                     {"hrs_p", terms.hrs_p}});
        }
        const auto n = static_cast<double>(ranges.size());
        EpochMetrics m;
        m.epoch = state.epoch + 1;
        m.mean = {sums[0].value() / n, sums[1].value() / n, sums[2].value() / n, sums[3].value() / n, sums[4].value() / n};
        m.lr = last_lr;
        m.tau = state.model.tau();
        state.history.push_back(m);
    }
}

namespace {

/// Sign pattern of every ReLU input in the batch's forward pass.
std::vector<bool> activation_pattern(const Model& model, std::span<const BatchMember> batch, const TrainConfig& config) {
    std::vector<bool> bits;
    EncodeCache cache;
    const auto record = [&] {
        for (Eigen::Index i = 0; i < cache.pre.size(); ++i) bits.push_back(cache.pre[i] > 0.0);
        for (Eigen::Index i = 0; i < cache.soft_pre.size(); ++i) bits.push_back(cache.soft_pre[i] > 0.0);
    };
    for (const auto& member : batch) {
        const auto q = member_queries(model, member, config);
        for (const auto* seq : {&q.hr, &q.hrs, q.path[0] ? &*q.path[0] : nullptr, q.path[1] ? &*q.path[1] : nullptr}) {
            if (!seq) continue;
            encode_query(model, *seq, &cache);
            record();
        }
        encode_entity(model, member.triple.tail, &cache);
        record();
    }
    return bits;
}

}  // namespace

GradCheckReport grad_check(const Model& model, std::span<const BatchMember> batch, const TrainConfig& config,
                           const KnowledgeGraph* known, double step) {
    auto analytic = Model::zeros_like(model);
    batch_loss(model, batch, config, known, &analytic);
    const auto pattern = activation_pattern(model, batch, config);

    Model probe = model;
    GradCheckReport report;
    auto params = probe.tensors();
    const auto grads = analytic.tensors();
    const auto loss_at = [&](double& slot, double value) {
        slot = value;
        return batch_loss(probe, batch, config, known, nullptr).total;
    };
    const auto same_region = [&](double& slot, double value) {
        slot = value;
        return activation_pattern(probe, batch, config) == pattern;
    };
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k].value;
        const auto& g = *grads[k].value;
        Mat numeric(p.rows(), p.cols());
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            double& slot = p.data()[i];
            const double orig = slot;
            // Shrink the stencil until it stays inside one linear region of every ReLU.
            double h = step;
            for (int shrink = 0; shrink < 4; ++shrink, h /= 10.0)
                if (same_region(slot, orig + 2.0 * h) && same_region(slot, orig - 2.0 * h)) break;
            const double f1 = loss_at(slot, orig + h) - loss_at(slot, orig - h);
            const double f2 = loss_at(slot, orig + 2.0 * h) - loss_at(slot, orig - 2.0 * h);
            slot = orig;
            numeric.data()[i] = (8.0 * f1 - f2) / (12.0 * h);
        }
        GradCheckBlock blk;
        blk.name = params[k].name;
        blk.analytic_norm = g.norm();
        blk.numeric_norm = numeric.norm();
        const double denom = std::max({numeric.cwiseAbs().maxCoeff(), g.cwiseAbs().maxCoeff(), kGradCheckFloor});
        blk.max_rel_error = (g - numeric).cwiseAbs().maxCoeff() / denom;
        report.max_rel_error = std::max(report.max_rel_error, blk.max_rel_error);
        report.blocks.push_back(std::move(blk));
    }
    return report;
}

}  // namespace kgc
