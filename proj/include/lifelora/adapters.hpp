#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lifelora/mat.hpp"
#include "lifelora/tape.hpp"

namespace lifelora {

struct LayerShape {
    int out = 0; // rows of the layer weight (b_l)
    int in = 0;  // cols of the layer weight (a_l)
};

// One low-rank pair per layer; the layer update is b * a.
struct AdapterPair {
    Mat a; // rank x in
    Mat b; // out x rank
    int rank = 0;

    Mat delta() const { return matmul(b, a); }
};

struct SkillAdapter {
    int skill_id = -1;
    std::vector<AdapterPair> pairs;
    std::vector<Mat> gate_logits;    // 1x2 per layer, index 1 = inject
    std::vector<int> gate_decisions; // frozen bits, set by freeze_gates

    int layers() const { return static_cast<int>(pairs.size()); }
};

// Kaiming-uniform A (bound sqrt(6/in)), zero B, zero gate logits.
SkillAdapter init_first_skill(const std::vector<LayerShape>& shapes, int rank, std::uint64_t seed,
                              int skill_id = -1);

// A initialized as the weight-averaged prior A factors, B zero. One weight
// vector shared across layers.
SkillAdapter inherit_from(std::span<const SkillAdapter> priors, std::span<const double> weights,
                          int skill_id = -1);

// Frozen, noise-free gate bits from the stored logits; ties go to no-inject.
void freeze_gates(SkillAdapter& adapter);

// gate * (b * a)
Mat gated_delta(const AdapterPair& pair, double gate);

// Sum over prior skills and layers of tr(Bprior~^T Bcur~) with each factor
// Frobenius-normalized (norm + eps in the denominator). Value form for
// reporting, tape form for training (prior factors are constants).
double orthogonality_regularizer(const std::vector<Mat>& current_b,
                                 const std::vector<std::vector<Mat>>& prior_bs, double eps);
NodeId orthogonality_term(Tape& tape, const std::vector<NodeId>& current_b_ids,
                          const std::vector<std::vector<Mat>>& prior_bs, double eps);

// Sum of the per-layer soft gates.
double sparsity_penalty(std::span<const double> soft_gates);
NodeId sparsity_term(Tape& tape, const std::vector<NodeId>& soft_gate_ids);

// Weighted sum of the full-rank per-layer products, each masked by its
// frozen gate bit. The merged gate marks layers where any meaningful
// contributor injects; top1 names the heaviest-weighted skill.
struct MergedAdapter {
    std::vector<Mat> deltas;
    std::vector<int> gates;
    int top1 = -1;
};

MergedAdapter aggregate_adapters(std::span<const SkillAdapter> adapters,
                                 std::span<const double> weights);

} // namespace lifelora
