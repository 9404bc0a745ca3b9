#pragma once

#include <vector>

#include "lifelora/embed.hpp"
#include "lifelora/mat.hpp"

namespace lifelora {

// Span of the top right singular vectors of a skill's instruction-embedding
// matrix. Only the d x rank basis is stored; the full projector is
// basis * basis^T and is materialized only in tests.
struct SubspaceProjection {
    int skill_id = -1;
    Mat basis; // d x rank, orthonormal columns
    int dim = 0;
    int rank = 0;

    Mat materialize() const { return matmul(basis, transpose(basis)); }
};

struct AggregationWeights {
    std::vector<double> weights;
    double gamma = 0.0;
};

// basis = first r right singular vectors of x (rows are embeddings).
SubspaceProjection build_subspace(const Mat& x, int rank, int skill_id = -1);

// basis * (basis^T * e), i.e. the projection of e without forming the d x d
// projector.
std::vector<double> project_query(std::span<const double> e, const SubspaceProjection& psi);

// cosine(e, proj(e)); 0 when the projection is numerically zero.
double skill_similarity(std::span<const double> e, const SubspaceProjection& psi);

// w_i = sims_i^gamma / sum_j sims_j^gamma, sims clipped to [0,1] first;
// uniform fallback when everything vanishes.
AggregationWeights aggregation_weights(std::vector<double> sims, double gamma);

} // namespace lifelora
