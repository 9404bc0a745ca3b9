#pragma once

#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lifelora/mat.hpp"

namespace lifelora {

using NodeId = int;

// Reverse-mode tape over a deliberately small op set. Anything the training
// loss needs is composed from these, which keeps finite-difference coverage
// exhaustive.
enum class OpKind {
    Constant,
    Param,
    Add,
    Matmul,
    Hadamard,
    Tanh,
    SoftmaxXent,
    TraceProduct,
    FrobNormalize,
    ScalarMat,
    ConstMul,
    GumbelSoft,
    StHard,
};

struct Node {
    Node(OpKind op_, Mat value_, std::vector<NodeId> parents_)
        : op(op_), value(std::move(value_)), parents(std::move(parents_)) {}

    OpKind op;
    Mat value;
    std::vector<NodeId> parents;
    // op-specific payloads
    std::vector<std::pair<int, int>> xent_targets; // (column, token id)
    double aux0 = 0.0; // eps / alpha / tau / hard bit
    double aux1 = 0.0; // gumbel noise for logit 0
    double aux2 = 0.0; // gumbel noise for logit 1
};

class Tape {
public:
    NodeId constant(Mat v);
    NodeId param(Mat v);

    // Generic append for pre-computed values; typed builders below compute
    // the forward value themselves.
    NodeId record(std::string_view op_tag, const std::vector<NodeId>& inputs, Mat value);

    NodeId add(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    NodeId hadamard(NodeId a, NodeId b);
    NodeId tanh_op(NodeId a);
    // Sum over (column, token) pairs of -log softmax(logits[:, column])[token].
    NodeId softmax_xent(NodeId logits, std::vector<std::pair<int, int>> targets);
    NodeId trace_product_op(NodeId a, NodeId b);
    NodeId frob_normalize(NodeId a, double eps);
    NodeId scalar_mat(NodeId scalar, NodeId m); // scalar is 1x1
    NodeId const_mul(double alpha, NodeId a);

    struct GateResult {
        int hard;      // 1 = inject
        NodeId soft;   // 1x1 soft gate value, used by the sparsity term
        NodeId gate;   // straight-through node: forward = hard, backward = soft path
    };
    // logits is a 1x2 node (index 1 = injection). Ties go to no-injection.
    GateResult st_gumbel_gate(NodeId logits, double noise0, double noise1, double tau);

    const Mat& value(NodeId id) const;
    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<NodeId>& params() const { return param_ids_; }

    // Gradients of a scalar loss for every param node (zero if unreachable).
    // A second call without reset() is a usage error.
    std::unordered_map<NodeId, Mat> backward(NodeId loss);
    void reset();

private:
    NodeId append(Node n);
    void check_id(NodeId id) const;

    std::vector<Node> nodes_;
    std::vector<NodeId> param_ids_;
    bool backward_done_ = false;
};

// Adam over a positional parameter list; state persists across steps.
struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::vector<Mat*> params, const std::vector<Mat>& grads);
    void set_lr(double lr) { cfg_.lr = lr; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    int t_ = 0;
    std::vector<Mat> m_;
    std::vector<Mat> v_;
};

} // namespace lifelora
