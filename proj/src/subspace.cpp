#include "lifelora/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lifelora {

SubspaceProjection build_subspace(const Mat& x, int rank, int skill_id) {
    const int m = x.rows();
    const int d = x.cols();
    if (rank < 1 || rank > std::min(m, d)) {
        throw UsageError("build_subspace: rank " + std::to_string(rank) + " out of range for " +
                         std::to_string(m) + "x" + std::to_string(d) + " corpus");
    }
    SvdResult r = svd(x);
    SubspaceProjection psi;
    psi.skill_id = skill_id;
    psi.dim = d;
    psi.rank = rank;
    psi.basis = Mat(d, rank);
    for (int j = 0; j < rank; ++j) {
        for (int i = 0; i < d; ++i) psi.basis(i, j) = r.vt(j, i);
    }
    return psi;
}

std::vector<double> project_query(std::span<const double> e, const SubspaceProjection& psi) {
    if (static_cast<int>(e.size()) != psi.dim) {
        throw ShapeError("project_query: embedding dim " + std::to_string(e.size()) +
                         " does not match subspace dim " + std::to_string(psi.dim));
    }
    std::vector<double> coeffs = vec_mat(e, psi.basis); // basis^T e
    return mat_vec(psi.basis, coeffs);
}

double skill_similarity(std::span<const double> e, const SubspaceProjection& psi) {
    std::vector<double> proj = project_query(e, psi);
    return cosine(e, proj);
}

AggregationWeights aggregation_weights(std::vector<double> sims, double gamma) {
    if (sims.empty()) throw UsageError("aggregation_weights: empty similarity vector");
    AggregationWeights out;
    out.gamma = gamma;
    out.weights.resize(sims.size());
    double total = 0.0;
    for (std::size_t i = 0; i < sims.size(); ++i) {
        const double s = std::clamp(sims[i], 0.0, 1.0);
        out.weights[i] = std::pow(s, gamma);
        total += out.weights[i];
    }
    if (total < 1e-12) {
        const double u = 1.0 / static_cast<double>(sims.size());
        std::fill(out.weights.begin(), out.weights.end(), u);
    } else {
        for (double& w : out.weights) w /= total;
    }
    return out;
}

} // namespace lifelora
