#include "lifelora/adapters.hpp"

#include <cmath>
#include <string>

#include "lifelora/rng.hpp"

namespace lifelora {

SkillAdapter init_first_skill(const std::vector<LayerShape>& shapes, int rank, std::uint64_t seed,
                              int skill_id) {
    if (rank < 1) throw UsageError("init_first_skill: rank must be positive");
    Rng rng(derive_seed(seed, "adapter-init"));
    SkillAdapter ad;
    ad.skill_id = skill_id;
    for (const LayerShape& sh : shapes) {
        AdapterPair p;
        p.rank = rank;
        p.a = Mat(rank, sh.in);
        const double bound = std::sqrt(6.0 / static_cast<double>(sh.in));
        for (int i = 0; i < p.a.size(); ++i) p.a.data()[i] = rng.uniform(-bound, bound);
        p.b = Mat(sh.out, rank);
        ad.pairs.push_back(std::move(p));
        ad.gate_logits.emplace_back(1, 2);
    }
    return ad;
}

SkillAdapter inherit_from(std::span<const SkillAdapter> priors, std::span<const double> weights,
                          int skill_id) {
    if (priors.empty()) throw UsageError("inherit_from: no prior skills; use init_first_skill");
    if (priors.size() != weights.size()) {
        throw ShapeError("inherit_from: " + std::to_string(priors.size()) + " priors vs " +
                         std::to_string(weights.size()) + " weights");
    }
    const SkillAdapter& ref = priors[0];
    SkillAdapter ad;
    ad.skill_id = skill_id;
    for (int l = 0; l < ref.layers(); ++l) {
        AdapterPair p;
        p.rank = ref.pairs[l].rank;
        p.a = Mat(ref.pairs[l].a.rows(), ref.pairs[l].a.cols());
        p.b = Mat(ref.pairs[l].b.rows(), ref.pairs[l].b.cols());
        ad.pairs.push_back(std::move(p));
        ad.gate_logits.emplace_back(1, 2);
    }
    for (std::size_t g = 0; g < priors.size(); ++g) {
        const SkillAdapter& prior = priors[g];
        if (prior.layers() != ref.layers()) throw ShapeError("inherit_from: layer count mismatch");
        for (int l = 0; l < ref.layers(); ++l) {
            if (!prior.pairs[l].a.same_shape(ad.pairs[l].a)) {
                throw ShapeError("inherit_from: A shape mismatch at layer " + std::to_string(l));
            }
            double* dst = ad.pairs[l].a.data();
            const double* src = prior.pairs[l].a.data();
            const double w = weights[g];
            for (int i = 0; i < ad.pairs[l].a.size(); ++i) dst[i] += w * src[i];
        }
    }
    return ad;
}

void freeze_gates(SkillAdapter& adapter) {
    adapter.gate_decisions.resize(adapter.gate_logits.size());
    for (std::size_t l = 0; l < adapter.gate_logits.size(); ++l) {
        const Mat& lg = adapter.gate_logits[l];
        adapter.gate_decisions[l] = lg(0, 1) > lg(0, 0) ? 1 : 0;
    }
}

Mat gated_delta(const AdapterPair& pair, double gate) { return scale(pair.delta(), gate); }

double orthogonality_regularizer(const std::vector<Mat>& current_b,
                                 const std::vector<std::vector<Mat>>& prior_bs, double eps) {
    double r = 0.0;
    std::vector<Mat> current_norm;
    current_norm.reserve(current_b.size());
    for (const Mat& b : current_b) current_norm.push_back(scale(b, 1.0 / (frobenius_norm(b) + eps)));
    for (const auto& prior : prior_bs) {
        if (prior.size() != current_b.size()) throw ShapeError("orthogonality: layer count mismatch");
        for (std::size_t l = 0; l < prior.size(); ++l) {
            Mat tilde = scale(prior[l], 1.0 / (frobenius_norm(prior[l]) + eps));
            r += trace_product(tilde, current_norm[l]);
        }
    }
    return r;
}

NodeId orthogonality_term(Tape& tape, const std::vector<NodeId>& current_b_ids,
                          const std::vector<std::vector<Mat>>& prior_bs, double eps) {
    NodeId total = tape.constant(Mat(1, 1));
    std::vector<NodeId> current_norm;
    current_norm.reserve(current_b_ids.size());
    for (NodeId b : current_b_ids) current_norm.push_back(tape.frob_normalize(b, eps));
    for (const auto& prior : prior_bs) {
        if (prior.size() != current_b_ids.size()) throw ShapeError("orthogonality: layer count mismatch");
        for (std::size_t l = 0; l < prior.size(); ++l) {
            Mat tilde = scale(prior[l], 1.0 / (frobenius_norm(prior[l]) + eps));
            NodeId term = tape.trace_product_op(tape.constant(std::move(tilde)), current_norm[l]);
            total = tape.add(total, term);
        }
    }
    return total;
}

double sparsity_penalty(std::span<const double> soft_gates) {
    double s = 0.0;
    for (double g : soft_gates) s += g;
    return s;
}

NodeId sparsity_term(Tape& tape, const std::vector<NodeId>& soft_gate_ids) {
    NodeId total = tape.constant(Mat(1, 1));
    for (NodeId g : soft_gate_ids) total = tape.add(total, g);
    return total;
}

MergedAdapter aggregate_adapters(std::span<const SkillAdapter> adapters,
                                 std::span<const double> weights) {
    if (adapters.empty()) throw UsageError("aggregate_adapters: empty adapter list");
    if (adapters.size() != weights.size()) {
        throw ShapeError("aggregate_adapters: " + std::to_string(adapters.size()) + " adapters vs " +
                         std::to_string(weights.size()) + " weights");
    }
    const SkillAdapter& ref = adapters[0];
    MergedAdapter merged;
    for (int l = 0; l < ref.layers(); ++l) {
        merged.deltas.emplace_back(ref.pairs[l].b.rows(), ref.pairs[l].a.cols());
        merged.gates.push_back(0);
    }

    double best = -1.0;
    for (std::size_t t = 0; t < adapters.size(); ++t) {
        const SkillAdapter& ad = adapters[t];
        if (ad.layers() != ref.layers()) throw ShapeError("aggregate_adapters: layer count mismatch");
        if (ad.gate_decisions.size() != ad.pairs.size()) {
            throw UsageError("aggregate_adapters: adapter " + std::to_string(ad.skill_id) +
                             " has unfrozen gates");
        }
        if (weights[t] > best) {
            best = weights[t];
            merged.top1 = static_cast<int>(t);
        }
        for (int l = 0; l < ref.layers(); ++l) {
            if (ad.pairs[l].a.cols() != ref.pairs[l].a.cols() ||
                ad.pairs[l].b.rows() != ref.pairs[l].b.rows()) {
                throw ShapeError("aggregate_adapters: shape mismatch at layer " + std::to_string(l));
            }
            if (ad.gate_decisions[l] == 0) continue;
            if (weights[t] > 1e-6) merged.gates[l] = 1;
            Mat contribution = scale(ad.pairs[l].delta(), weights[t]);
            merged.deltas[l] = add(merged.deltas[l], contribution);
        }
    }
    return merged;
}

} // namespace lifelora
