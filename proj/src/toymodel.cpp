#include "lifelora/toymodel.hpp"

#include <cmath>
#include <string>

#include "lifelora/rng.hpp"

namespace lifelora {

namespace {

// Feature-mix constants. Three read heads track the window slot aligned
// with the output index, its mirror, and the first data slot; a key channel
// exposes the first instruction token so routing between heads is
// switchable; the prefix sum and current-token emphasis ride along at low
// weight; the marker flags the output slot.
constexpr double kCurrentEmphasis = 0.15;
constexpr double kPrefixWeight = 0.05;
constexpr double kKeyWeight = 0.35;
constexpr double kPhaseScale = 1.0;
constexpr double kRingAmp = 0.5;
constexpr int kPhaseDims = 9;  // one-hot output slot 0..kWindow
constexpr int kReadHeads = 4;

// content block width; falls back to a single block for tiny hand-built
// models so the feature map stays total
int content_width(int h) {
    const int multi = (h - kPhaseDims) / kReadHeads;
    return multi >= 7 ? multi : std::max(1, h - kPhaseDims);
}

bool multi_head_layout(int h) { return (h - kPhaseDims) / kReadHeads >= 7; }

void check_seq(const ModelShape& shape, std::span<const int> seq) {
    if (static_cast<int>(seq.size()) > shape.max_positions) {
        throw UsageError("toymodel: sequence length " + std::to_string(seq.size()) +
                         " exceeds max positions " + std::to_string(shape.max_positions));
    }
    for (int tok : seq) {
        if (tok < 0 || tok >= shape.vocab) {
            throw UsageError("toymodel: token " + std::to_string(tok) + " out of range");
        }
    }
}

} // namespace

BaseModel make_base(const ModelShape& shape, std::uint64_t seed) {
    if (shape.vocab < tokens::kMinVocab || shape.hidden < 32 || shape.layers < 1) {
        throw UsageError("make_base: model shape too small (needs vocab >= 32, hidden >= 32)");
    }
    BaseModel m;
    m.shape = shape;
    m.seed = seed;
    const int h = shape.hidden;
    const int content = content_width(h);

    // Token embeddings: two rotation planes indexed by the token id plus a
    // random tail, all inside the first content block. The planes make
    // id-arithmetic primitives exact plane rotations reachable by low-rank
    // layer updates; the remaining dims belong to the second read head and
    // the output-slot marker.
    Rng erng(derive_seed(seed, "embed"));
    m.embed = Mat(shape.vocab, h);
    const double tail_sigma = std::sqrt(0.5 / static_cast<double>(content - 4));
    for (int v = 0; v < shape.vocab; ++v) {
        const double th1 = 2.0 * 3.141592653589793 * (v % tokens::kDataSpan) / tokens::kDataSpan;
        const double th2 = 3.0 * th1;
        m.embed(v, 0) = kRingAmp * std::cos(th1);
        m.embed(v, 1) = kRingAmp * std::sin(th1);
        m.embed(v, 2) = kRingAmp * std::cos(th2);
        m.embed(v, 3) = kRingAmp * std::sin(th2);
        for (int j = 4; j < content; ++j) m.embed(v, j) = tail_sigma * erng.normal();
    }

    m.head = m.embed;

    Rng wrng(derive_seed(seed, "layers"));
    const double wbound = 0.5 * std::sqrt(3.0 / static_cast<double>(h));
    for (int l = 0; l < shape.layers; ++l) {
        Mat w(h, h);
        for (int i = 0; i < w.size(); ++i) w.data()[i] = wrng.uniform(-wbound, wbound);
        m.w0.push_back(std::move(w));
        m.bias.emplace_back(h, 1);
    }

    Rng prng(derive_seed(seed, "positions"));
    m.pos_sign = Mat(shape.max_positions, h);
    m.pos_mark = Mat(shape.max_positions, h);
    for (int i = 0; i < shape.max_positions; ++i) {
        for (int j = 0; j < h; ++j) m.pos_sign(i, j) = (prng.next_u64() & 1) ? 1.0 : -1.0;
        // one-hot output-slot marker once the column enters the target phase
        const int phase = i - (episode_format::kPromptLen - 1);
        if (phase >= 0) {
            const int slot = std::min(phase, kPhaseDims - 1);
            m.pos_mark(i, h - kPhaseDims + slot) = kPhaseScale;
        }
    }
    return m;
}

Mat input_features(const BaseModel& model, std::span<const int> seq) {
    check_seq(model.shape, seq);
    const int h = model.shape.hidden;
    const int len = static_cast<int>(seq.size());
    const int c = content_width(h);
    const bool heads = multi_head_layout(h);
    constexpr int kWinLo = episode_format::kInstrTokens + 1;
    constexpr int kWinHi = kWinLo + episode_format::kWindow - 1;

    Mat f(h, len);
    std::vector<double> prefix_sum(c, 0.0);
    std::vector<double> bound(c);
    std::vector<double> key(c, 0.0);
    std::vector<int> window(episode_format::kWindow, tokens::kPad);
    int first_data = tokens::kPad;
    for (int i = 0; i < len; ++i) {
        const int tok = seq[i];
        for (int j = 0; j < c; ++j) {
            bound[j] = model.embed(tok, j) * model.pos_sign(i, j);
            prefix_sum[j] += bound[j];
        }
        if (i == 0) key = bound; // first instruction token, routing signal
        if (i >= kWinLo && i <= kWinHi) {
            window[i - kWinLo] = tok;
            if (first_data == tokens::kPad && tok >= tokens::kDataLo && tok <= tokens::kDataHi) {
                first_data = tok;
            }
        }
        // Read heads: the window slot aligned with the output index, its
        // mirror, its pairwise neighbor, and the first data slot, each
        // exposed in the clear in its own block. Whichever head a task
        // needs, its source token is linearly decodable; the slot marker
        // handles pad/eos structure.
        const int phase = std::clamp(i - (episode_format::kPromptLen - 1), 0,
                                     episode_format::kWindow - 1);
        const int src_fwd = window[phase];
        const int src_bwd = window[episode_format::kWindow - 1 - phase];
        const int src_swp = window[phase ^ 1];
        const double pre_norm = 1.0 / std::sqrt(static_cast<double>(i + 1));
        for (int j = 0; j < c; ++j) {
            f(j, i) = model.embed(src_fwd, j) + kPrefixWeight * prefix_sum[j] * pre_norm +
                      kCurrentEmphasis * bound[j] + kKeyWeight * key[j];
        }
        if (heads) {
            for (int j = 0; j < c; ++j) {
                f(c + j, i) = model.embed(src_bwd, j);
                f(2 * c + j, i) = model.embed(src_swp, j);
                f(3 * c + j, i) = model.embed(first_data, j);
            }
        }
        for (int j = std::max(0, h - kPhaseDims); j < h; ++j) f(j, i) += model.pos_mark(i, j);
    }
    return f;
}

Mat forward(const BaseModel& model, std::span<const Mat> deltas, std::span<const int> seq) {
    if (!deltas.empty() && static_cast<int>(deltas.size()) != model.shape.layers) {
        throw ShapeError("forward: expected " + std::to_string(model.shape.layers) +
                         " layer deltas, got " + std::to_string(deltas.size()));
    }
    Mat x = input_features(model, seq);
    const int len = static_cast<int>(seq.size());
    for (int l = 0; l < model.shape.layers; ++l) {
        const Mat w_eff = deltas.empty() ? model.w0[l] : add(model.w0[l], deltas[l]);
        Mat z = matmul(w_eff, x);
        // residual tanh layer: x + tanh(W x + b)
        for (int i = 0; i < model.shape.hidden; ++i) {
            const double b = model.bias[l](i, 0);
            for (int c = 0; c < len; ++c) z(i, c) = x(i, c) + std::tanh(z(i, c) + b);
        }
        x = std::move(z);
    }
    return matmul(model.head, x);
}

double nll_value(const Mat& logits, const std::vector<std::pair<int, int>>& targets) {
    double loss = 0.0;
    for (auto [col, tok] : targets) {
        if (col < 0 || col >= logits.cols() || tok < 0 || tok >= logits.rows()) {
            throw UsageError("nll_value: target out of range");
        }
        double mx = logits(0, col);
        for (int i = 1; i < logits.rows(); ++i) mx = std::max(mx, logits(i, col));
        double z = 0.0;
        for (int i = 0; i < logits.rows(); ++i) z += std::exp(logits(i, col) - mx);
        loss += -(logits(tok, col) - mx - std::log(z));
    }
    return loss;
}

std::vector<int> generate(const BaseModel& model, std::span<const Mat> deltas,
                          std::span<const int> prompt, int max_steps, int eos) {
    if (max_steps < 1) throw UsageError("generate: max_steps must be >= 1");
    std::vector<int> seq(prompt.begin(), prompt.end());
    std::vector<int> out;
    for (int step = 0; step < max_steps; ++step) {
        if (static_cast<int>(seq.size()) >= model.shape.max_positions) break;
        Mat logits = forward(model, deltas, seq);
        const int col = logits.cols() - 1;
        int best = 0;
        double best_v = logits(0, col);
        for (int v = 1; v < logits.rows(); ++v) {
            if (logits(v, col) > best_v) {
                best_v = logits(v, col);
                best = v;
            }
        }
        seq.push_back(best);
        out.push_back(best);
        if (best == eos) break;
    }
    return out;
}

bool episode_success(const BaseModel& model, std::span<const Mat> deltas, const Episode& ep,
                     int max_steps) {
    std::vector<int> got = generate(model, deltas, ep.prompt, max_steps);
    return got == ep.target;
}

Episode make_window_episode(std::span<const int> instr, std::span<const int> window,
                            std::span<const int> out) {
    if (static_cast<int>(instr.size()) != episode_format::kInstrTokens ||
        static_cast<int>(window.size()) != episode_format::kWindow ||
        static_cast<int>(out.size()) != episode_format::kWindow) {
        throw UsageError("make_window_episode: wrong segment lengths");
    }
    Episode ep;
    ep.prompt.assign(instr.begin(), instr.end());
    ep.prompt.push_back(tokens::kSep);
    ep.prompt.insert(ep.prompt.end(), window.begin(), window.end());
    ep.prompt.push_back(tokens::kSep);
    ep.target.assign(out.begin(), out.end());
    ep.target.push_back(tokens::kEos);
    return ep;
}

namespace {

bool is_data_token(int t) { return t >= tokens::kDataLo && t <= tokens::kDataHi; }

std::vector<int> window_reverse(const std::vector<int>& w) {
    return {w.rbegin(), w.rend()};
}

std::vector<int> window_swap_pairs(const std::vector<int>& w) {
    std::vector<int> out = w;
    for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
    return out;
}

std::vector<int> window_repeat_first(const std::vector<int>& w) {
    int first = -1;
    for (int t : w) {
        if (is_data_token(t)) {
            first = t;
            break;
        }
    }
    std::vector<int> out = w;
    if (first >= 0) {
        for (int& t : out) {
            if (is_data_token(t)) t = first;
        }
    }
    return out;
}

std::vector<int> random_window(Rng& rng) {
    const int len = 4 + static_cast<int>(rng.below(5));
    std::vector<int> window(episode_format::kWindow, tokens::kPad);
    for (int i = episode_format::kWindow - len; i < episode_format::kWindow; ++i) {
        window[i] = tokens::kDataLo + static_cast<int>(rng.below(tokens::kDataSpan));
    }
    return window;
}

std::vector<int> random_instr(Rng& rng, int key_lo, int key_hi) {
    std::vector<int> instr(episode_format::kInstrTokens);
    instr[0] = key_lo + static_cast<int>(rng.below(key_hi - key_lo + 1));
    for (std::size_t i = 1; i < instr.size(); ++i) {
        instr[i] =
            tokens::kInstrLo + static_cast<int>(rng.below(tokens::kInstrHi - tokens::kInstrLo + 1));
    }
    return instr;
}

} // namespace

Episode make_copy_episode(const ModelShape& shape, Rng& rng) {
    (void)shape;
    std::vector<int> instr = random_instr(rng, pretrain_keys::kCopyLo, pretrain_keys::kCopyHi);
    std::vector<int> window = random_window(rng);
    return make_window_episode(instr, window, window);
}

Episode make_pretrain_episode(const ModelShape& shape, Rng& rng) {
    (void)shape;
    const double pick = rng.uniform();
    std::vector<int> window = random_window(rng);
    if (pick < 0.4) {
        std::vector<int> instr = random_instr(rng, pretrain_keys::kCopyLo, pretrain_keys::kCopyHi);
        return make_window_episode(instr, window, window);
    }
    if (pick < 0.65) {
        std::vector<int> instr =
            random_instr(rng, pretrain_keys::kReverseLo, pretrain_keys::kReverseHi);
        return make_window_episode(instr, window, window_reverse(window));
    }
    if (pick < 0.85) {
        std::vector<int> instr = random_instr(rng, pretrain_keys::kSwapLo, pretrain_keys::kSwapHi);
        return make_window_episode(instr, window, window_swap_pairs(window));
    }
    std::vector<int> instr = random_instr(rng, pretrain_keys::kRepeatLo, pretrain_keys::kRepeatHi);
    return make_window_episode(instr, window, window_repeat_first(window));
}

AdapterTape begin_adapter_tape(Tape& tape, const BaseModel& model, const SkillAdapter& adapter,
                               GateMode mode, std::span<const double> noise, double tau) {
    const int layers = model.shape.layers;
    if (adapter.layers() != layers) throw ShapeError("begin_adapter_tape: layer count mismatch");
    if (mode == GateMode::Gumbel && static_cast<int>(noise.size()) < 2 * layers) {
        throw UsageError("begin_adapter_tape: need two noise draws per layer");
    }
    AdapterTape at;
    for (int l = 0; l < layers; ++l) {
        NodeId a = tape.param(adapter.pairs[l].a);
        NodeId b = tape.param(adapter.pairs[l].b);
        at.a_ids.push_back(a);
        at.b_ids.push_back(b);
        NodeId delta = tape.matmul(b, a);
        NodeId update;
        if (mode == GateMode::Gumbel) {
            NodeId lg = tape.param(adapter.gate_logits[l]);
            at.logit_ids.push_back(lg);
            auto gate = tape.st_gumbel_gate(lg, noise[2 * l], noise[2 * l + 1], tau);
            at.soft_gates.push_back(gate.soft);
            at.hard_gates.push_back(gate.hard);
            update = tape.scalar_mat(gate.gate, delta);
        } else {
            at.hard_gates.push_back(1);
            update = delta;
        }
        at.w_eff.push_back(tape.add(tape.constant(model.w0[l]), update));
        at.bias_ids.push_back(tape.constant(model.bias[l]));
    }
    return at;
}

NodeId episode_nll(Tape& tape, const BaseModel& model, const AdapterTape& at, const Episode& ep) {
    std::vector<int> seq = ep.prompt;
    seq.insert(seq.end(), ep.target.begin(), ep.target.end());

    const int len = static_cast<int>(seq.size());
    NodeId x = tape.constant(input_features(model, seq));
    Mat ones(1, len);
    for (int i = 0; i < len; ++i) ones(0, i) = 1.0;
    NodeId ones_id = tape.constant(std::move(ones));
    for (int l = 0; l < model.shape.layers; ++l) {
        NodeId z = tape.matmul(at.w_eff[l], x);
        NodeId zb = tape.add(z, tape.matmul(at.bias_ids[l], ones_id));
        x = tape.add(x, tape.tanh_op(zb));
    }
    NodeId logits = tape.matmul(tape.constant(model.head), x);

    std::vector<std::pair<int, int>> targets;
    const int p = static_cast<int>(ep.prompt.size());
    for (std::size_t g = 0; g < ep.target.size(); ++g) {
        targets.emplace_back(p - 1 + static_cast<int>(g), ep.target[g]);
    }
    return tape.softmax_xent(logits, std::move(targets));
}

void pretrain_base(BaseModel& model, const PretrainConfig& cfg) {
    Rng data_rng(derive_seed(cfg.seed, "pretrain-data"));
    Adam opt({.lr = cfg.lr});
    const int layers = model.shape.layers;

    for (int step = 0; step < cfg.steps; ++step) {
        // cosine decay to lr/20 settles the late phase
        const double frac = static_cast<double>(step) / cfg.steps;
        opt.set_lr(cfg.lr * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(3.141592653589793 * frac))));
        Tape tape;
        std::vector<NodeId> w_ids, b_ids;
        for (int l = 0; l < layers; ++l) {
            w_ids.push_back(tape.param(model.w0[l]));
            b_ids.push_back(tape.param(model.bias[l]));
        }
        NodeId head_id = tape.param(model.head);

        NodeId total = tape.constant(Mat(1, 1));
        for (int e = 0; e < cfg.batch; ++e) {
            Episode ep = make_pretrain_episode(model.shape, data_rng);
            std::vector<int> seq = ep.prompt;
            seq.insert(seq.end(), ep.target.begin(), ep.target.end());
            const int len = static_cast<int>(seq.size());

            NodeId x = tape.constant(input_features(model, seq));
            Mat ones(1, len);
            for (int i = 0; i < len; ++i) ones(0, i) = 1.0;
            NodeId ones_id = tape.constant(std::move(ones));
            for (int l = 0; l < layers; ++l) {
                NodeId z = tape.matmul(w_ids[l], x);
                NodeId zb = tape.add(z, tape.matmul(b_ids[l], ones_id));
                x = tape.add(x, tape.tanh_op(zb));
            }
            NodeId logits = tape.matmul(head_id, x);
            std::vector<std::pair<int, int>> targets;
            const int p = static_cast<int>(ep.prompt.size());
            for (std::size_t g = 0; g < ep.target.size(); ++g) {
                targets.emplace_back(p - 1 + static_cast<int>(g), ep.target[g]);
            }
            total = tape.add(total, tape.softmax_xent(logits, std::move(targets)));
        }
        NodeId loss = tape.const_mul(1.0 / cfg.batch, total);
        auto grads = tape.backward(loss);

        std::vector<Mat*> params;
        std::vector<Mat> gs;
        for (int l = 0; l < layers; ++l) {
            params.push_back(&model.w0[l]);
            gs.push_back(grads.at(w_ids[l]));
        }
        for (int l = 0; l < layers; ++l) {
            params.push_back(&model.bias[l]);
            gs.push_back(grads.at(b_ids[l]));
        }
        params.push_back(&model.head);
        gs.push_back(grads.at(head_id));
        opt.step(std::move(params), gs);
    }
}

double copy_accuracy(const BaseModel& model, int episodes, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "copy-eval"));
    int ok = 0;
    for (int i = 0; i < episodes; ++i) {
        Episode ep = make_copy_episode(model.shape, rng);
        if (episode_success(model, {}, ep)) ++ok;
    }
    return static_cast<double>(ok) / episodes;
}

} // namespace lifelora
