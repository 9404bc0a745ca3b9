#include "lifelora/tape.hpp"

#include <cmath>
#include <string>

namespace lifelora {

namespace {

void softmax_column(const Mat& logits, int col, std::vector<double>& out) {
    const int v = logits.rows();
    out.resize(v);
    double mx = logits(0, col);
    for (int i = 1; i < v; ++i) mx = std::max(mx, logits(i, col));
    double z = 0.0;
    for (int i = 0; i < v; ++i) {
        out[i] = std::exp(logits(i, col) - mx);
        z += out[i];
    }
    for (int i = 0; i < v; ++i) out[i] /= z;
}

} // namespace

NodeId Tape::append(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check_id(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw UsageError("tape: node id " + std::to_string(id) + " not on tape");
    }
}

NodeId Tape::constant(Mat v) { return append({OpKind::Constant, std::move(v), {}}); }

NodeId Tape::param(Mat v) {
    NodeId id = append({OpKind::Param, std::move(v), {}});
    param_ids_.push_back(id);
    return id;
}

NodeId Tape::record(std::string_view op_tag, const std::vector<NodeId>& inputs, Mat value) {
    for (NodeId id : inputs) check_id(id);
    OpKind kind;
    if (op_tag == "const") kind = OpKind::Constant;
    else if (op_tag == "add") kind = OpKind::Add;
    else if (op_tag == "matmul") kind = OpKind::Matmul;
    else if (op_tag == "hadamard") kind = OpKind::Hadamard;
    else if (op_tag == "tanh") kind = OpKind::Tanh;
    else if (op_tag == "trace_product") kind = OpKind::TraceProduct;
    else throw UsageError("tape: unknown op tag '" + std::string(op_tag) + "'");
    return append({kind, std::move(value), inputs});
}

NodeId Tape::add(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    return append({OpKind::Add, lifelora::add(nodes_[a].value, nodes_[b].value), {a, b}});
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    return append({OpKind::Matmul, lifelora::matmul(nodes_[a].value, nodes_[b].value), {a, b}});
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    return append({OpKind::Hadamard, lifelora::hadamard(nodes_[a].value, nodes_[b].value), {a, b}});
}

NodeId Tape::tanh_op(NodeId a) {
    check_id(a);
    Mat y = nodes_[a].value;
    double* p = y.data();
    for (int i = 0; i < y.size(); ++i) p[i] = std::tanh(p[i]);
    return append({OpKind::Tanh, std::move(y), {a}});
}

NodeId Tape::softmax_xent(NodeId logits, std::vector<std::pair<int, int>> targets) {
    check_id(logits);
    const Mat& lg = nodes_[logits].value;
    double loss = 0.0;
    std::vector<double> p;
    for (auto [col, tok] : targets) {
        if (col < 0 || col >= lg.cols() || tok < 0 || tok >= lg.rows()) {
            throw UsageError("softmax_xent: target (" + std::to_string(col) + "," +
                             std::to_string(tok) + ") out of range");
        }
        softmax_column(lg, col, p);
        loss += -std::log(std::max(p[tok], 1e-300));
    }
    Node n{OpKind::SoftmaxXent, Mat(1, 1, {loss}), {logits}};
    n.xent_targets = std::move(targets);
    return append(std::move(n));
}

NodeId Tape::trace_product_op(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    double v = lifelora::trace_product(nodes_[a].value, nodes_[b].value);
    return append({OpKind::TraceProduct, Mat(1, 1, {v}), {a, b}});
}

NodeId Tape::frob_normalize(NodeId a, double eps) {
    check_id(a);
    const double n = lifelora::frobenius_norm(nodes_[a].value);
    Node node{OpKind::FrobNormalize, scale(nodes_[a].value, 1.0 / (n + eps)), {a}};
    node.aux0 = eps;
    return append(std::move(node));
}

NodeId Tape::scalar_mat(NodeId scalar, NodeId m) {
    check_id(scalar);
    check_id(m);
    const Mat& s = nodes_[scalar].value;
    if (s.rows() != 1 || s.cols() != 1) throw UsageError("scalar_mat: scalar node must be 1x1");
    return append({OpKind::ScalarMat, scale(nodes_[m].value, s(0, 0)), {scalar, m}});
}

NodeId Tape::const_mul(double alpha, NodeId a) {
    check_id(a);
    Node n{OpKind::ConstMul, scale(nodes_[a].value, alpha), {a}};
    n.aux0 = alpha;
    return append(std::move(n));
}

Tape::GateResult Tape::st_gumbel_gate(NodeId logits, double noise0, double noise1, double tau) {
    check_id(logits);
    if (tau <= 0.0) throw UsageError("st_gumbel_gate: tau must be positive");
    const Mat& lg = nodes_[logits].value;
    if (lg.rows() != 1 || lg.cols() != 2) throw UsageError("st_gumbel_gate: logits must be 1x2");

    const double z0 = (lg(0, 0) + noise0) / tau;
    const double z1 = (lg(0, 1) + noise1) / tau;
    const double soft = 1.0 / (1.0 + std::exp(z0 - z1));
    // ties go to index 0 (no injection)
    const int hard = (lg(0, 1) + noise1) > (lg(0, 0) + noise0) ? 1 : 0;

    Node soft_node{OpKind::GumbelSoft, Mat(1, 1, {soft}), {logits}};
    soft_node.aux0 = tau;
    soft_node.aux1 = noise0;
    soft_node.aux2 = noise1;
    NodeId soft_id = append(std::move(soft_node));

    Node st{OpKind::StHard, Mat(1, 1, {static_cast<double>(hard)}), {soft_id}};
    st.aux0 = hard;
    NodeId gate_id = append(std::move(st));
    return {hard, soft_id, gate_id};
}

const Mat& Tape::value(NodeId id) const {
    check_id(id);
    return nodes_[id].value;
}

void Tape::reset() { backward_done_ = false; }

std::unordered_map<NodeId, Mat> Tape::backward(NodeId loss) {
    check_id(loss);
    if (backward_done_) throw UsageError("tape: backward already ran; call reset() first");
    backward_done_ = true;
    const Mat& lv = nodes_[loss].value;
    if (lv.rows() != 1 || lv.cols() != 1) throw UsageError("tape: loss node must be 1x1");

    std::vector<Mat> grads(nodes_.size());
    grads[loss] = Mat(1, 1, {1.0});

    std::vector<double> p;
    for (NodeId id = loss; id >= 0; --id) {
        if (grads[id].empty()) continue;
        const Node& n = nodes_[id];
        const Mat& g = grads[id];
        auto accum = [&](NodeId parent, Mat contribution) {
            if (grads[parent].empty()) {
                grads[parent] = std::move(contribution);
            } else {
                grads[parent] = lifelora::add(grads[parent], contribution);
            }
        };
        switch (n.op) {
        case OpKind::Constant:
        case OpKind::Param:
            break;
        case OpKind::Add:
            accum(n.parents[0], g);
            accum(n.parents[1], g);
            break;
        case OpKind::Matmul: {
            const Mat& a = nodes_[n.parents[0]].value;
            const Mat& b = nodes_[n.parents[1]].value;
            accum(n.parents[0], lifelora::matmul(g, transpose(b)));
            accum(n.parents[1], lifelora::matmul(transpose(a), g));
            break;
        }
        case OpKind::Hadamard:
            accum(n.parents[0], lifelora::hadamard(g, nodes_[n.parents[1]].value));
            accum(n.parents[1], lifelora::hadamard(g, nodes_[n.parents[0]].value));
            break;
        case OpKind::Tanh: {
            Mat gx = g;
            const double* y = n.value.data();
            double* px = gx.data();
            for (int i = 0; i < gx.size(); ++i) px[i] *= 1.0 - y[i] * y[i];
            accum(n.parents[0], std::move(gx));
            break;
        }
        case OpKind::SoftmaxXent: {
            const Mat& lg = nodes_[n.parents[0]].value;
            Mat gx(lg.rows(), lg.cols());
            const double gs = g(0, 0);
            for (auto [col, tok] : n.xent_targets) {
                softmax_column(lg, col, p);
                for (int i = 0; i < lg.rows(); ++i) {
                    gx(i, col) += gs * (p[i] - (i == tok ? 1.0 : 0.0));
                }
            }
            accum(n.parents[0], std::move(gx));
            break;
        }
        case OpKind::TraceProduct: {
            const double gs = g(0, 0);
            accum(n.parents[0], scale(nodes_[n.parents[1]].value, gs));
            accum(n.parents[1], scale(nodes_[n.parents[0]].value, gs));
            break;
        }
        case OpKind::FrobNormalize: {
            const Mat& x = nodes_[n.parents[0]].value;
            const double nrm = lifelora::frobenius_norm(x);
            const double d = nrm + n.aux0;
            Mat gx = scale(g, 1.0 / d);
            if (nrm > 1e-300) {
                const double gdotx = lifelora::trace_product(g, x);
                gx = lifelora::sub(gx, scale(x, gdotx / (nrm * d * d)));
            }
            accum(n.parents[0], std::move(gx));
            break;
        }
        case OpKind::ScalarMat: {
            const Mat& m = nodes_[n.parents[1]].value;
            const double s = nodes_[n.parents[0]].value(0, 0);
            accum(n.parents[0], Mat(1, 1, {lifelora::trace_product(g, m)}));
            accum(n.parents[1], scale(g, s));
            break;
        }
        case OpKind::ConstMul:
            accum(n.parents[0], scale(g, n.aux0));
            break;
        case OpKind::GumbelSoft: {
            const double soft = n.value(0, 0);
            const double dsoft = g(0, 0) * soft * (1.0 - soft) / n.aux0;
            accum(n.parents[0], Mat(1, 2, {-dsoft, dsoft}));
            break;
        }
        case OpKind::StHard:
            // straight-through: gradient flows as if the output were soft
            accum(n.parents[0], g);
            break;
        }
    }

    std::unordered_map<NodeId, Mat> out;
    for (NodeId pid : param_ids_) {
        if (grads[pid].empty()) {
            out[pid] = Mat(nodes_[pid].value.rows(), nodes_[pid].value.cols());
        } else {
            out[pid] = std::move(grads[pid]);
        }
    }
    return out;
}

void Adam::step(std::vector<Mat*> params, const std::vector<Mat>& grads) {
    if (params.size() != grads.size()) throw UsageError("adam: param/grad count mismatch");
    if (m_.empty()) {
        for (const Mat* pm : params) {
            m_.emplace_back(pm->rows(), pm->cols());
            v_.emplace_back(pm->rows(), pm->cols());
        }
    }
    if (m_.size() != params.size()) throw UsageError("adam: parameter list changed size");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Mat& theta = *params[i];
        const Mat& g = grads[i];
        if (!theta.same_shape(g)) throw ShapeError("adam: grad shape mismatch");
        double* mp = m_[i].data();
        double* vp = v_[i].data();
        double* tp = theta.data();
        const double* gp = g.data();
        for (int j = 0; j < theta.size(); ++j) {
            mp[j] = cfg_.beta1 * mp[j] + (1.0 - cfg_.beta1) * gp[j];
            vp[j] = cfg_.beta2 * vp[j] + (1.0 - cfg_.beta2) * gp[j] * gp[j];
            const double mhat = mp[j] / bc1;
            const double vhat = vp[j] / bc2;
            tp[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

} // namespace lifelora
