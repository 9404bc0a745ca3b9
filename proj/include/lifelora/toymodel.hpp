#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lifelora/adapters.hpp"
#include "lifelora/mat.hpp"
#include "lifelora/rng.hpp"
#include "lifelora/tape.hpp"

namespace lifelora {

// Vocabulary layout shared by episode generation and the base model's
// pretraining corpus. Assumes vocab_size >= 32.
namespace tokens {
constexpr int kDataLo = 0;
constexpr int kDataHi = 15;
constexpr int kDataSpan = kDataHi - kDataLo + 1;
constexpr int kInstrLo = 20;
constexpr int kInstrHi = 28;
constexpr int kPad = 29;
constexpr int kSep = 30;
constexpr int kEos = 31;
constexpr int kMinVocab = 32;
} // namespace tokens

// Fixed episode geometry: [instr x6][sep][window x8][sep] -> [out x8][eos].
// Inputs shorter than the window are right-aligned behind pad tokens, so
// every output slot is a fixed positional function of the input slots.
namespace episode_format {
constexpr int kInstrTokens = 6;
constexpr int kWindow = 8;
constexpr int kPromptLen = kInstrTokens + 1 + kWindow + 1;
constexpr int kTargetLen = kWindow + 1;
} // namespace episode_format

// First-instruction-token bands used by the pretraining mixture. The base
// learns a switchable routing keyed by this token; skill adapters later
// re-key the routing for their own instruction encodings.
namespace pretrain_keys {
constexpr int kCopyLo = 20;
constexpr int kCopyHi = 21;
constexpr int kReverseLo = 22;
constexpr int kReverseHi = 23;
constexpr int kSwapLo = 24;
constexpr int kSwapHi = 25;
constexpr int kRepeatLo = 26;
constexpr int kRepeatHi = 26;
} // namespace pretrain_keys

struct ModelShape {
    int vocab = 32;
    int hidden = 32;
    int layers = 4;
    int max_positions = 48;

    bool operator==(const ModelShape&) const = default;
};

struct Episode {
    std::vector<int> prompt;
    std::vector<int> target; // ends with kEos
};

// Frozen autoregressive base. Position i's input feature is the running mean
// of position-bound embeddings up to i (plus a current-token emphasis and a
// position marker), pushed through a tanh layer stack with a tied output
// head. Causal by construction and attention-free.
struct BaseModel {
    ModelShape shape;
    std::uint64_t seed = 0;
    Mat embed;              // vocab x hidden feature table, fixed at build
    Mat head;               // vocab x hidden output head; starts as a copy of
                            // embed, shaped during pretraining, frozen after
    std::vector<Mat> w0;    // layers x (hidden x hidden)
    std::vector<Mat> bias;  // layers x (hidden x 1)
    Mat pos_sign;           // max_positions x hidden, +-1 binding patterns
    Mat pos_mark;           // max_positions x hidden, additive position marker
};

BaseModel make_base(const ModelShape& shape, std::uint64_t seed);

struct PretrainConfig {
    int steps = 4000;
    double lr = 3e-3;
    int batch = 16;
    std::uint64_t seed = 104729;
};

// Trains the layer weights and biases on a key-routed mixture of copy,
// reverse and repeat-first window tasks; the structured embedding table
// stays fixed. After this the whole base is frozen.
void pretrain_base(BaseModel& model, const PretrainConfig& cfg = {});

// Fraction of fresh copy episodes the base solves exactly.
double copy_accuracy(const BaseModel& model, int episodes, std::uint64_t seed);

// Assembles the fixed-format episode from its parts (target gets the eos).
Episode make_window_episode(std::span<const int> instr, std::span<const int> window,
                            std::span<const int> out);

Episode make_copy_episode(const ModelShape& shape, Rng& rng);
// One episode of the keyed pretraining mixture.
Episode make_pretrain_episode(const ModelShape& shape, Rng& rng);

// h x len feature matrix; column i depends only on tokens[0..i].
Mat input_features(const BaseModel& model, std::span<const int> seq);

// vocab x len logits. `deltas` holds per-layer effective updates (already
// gate-masked); empty means base only.
Mat forward(const BaseModel& model, std::span<const Mat> deltas, std::span<const int> seq);

// Sum over (column, token) pairs of -log softmax(logits[:, column])[token].
double nll_value(const Mat& logits, const std::vector<std::pair<int, int>>& targets);

// Greedy decode; stops after emitting eos or max_steps tokens. Returns only
// the generated suffix.
std::vector<int> generate(const BaseModel& model, std::span<const Mat> deltas,
                          std::span<const int> prompt, int max_steps, int eos = tokens::kEos);

bool episode_success(const BaseModel& model, std::span<const Mat> deltas, const Episode& ep,
                     int max_steps = 16);

// --- tape-side training forward ---

enum class GateMode {
    Gumbel,   // straight-through hard gates with fresh noise
    ForcedOn, // every layer injects, no gate parameters trained
};

// Per-batch adapter binding: params for A, B and gate logits plus the
// per-layer effective weight nodes shared by every episode in the batch.
struct AdapterTape {
    std::vector<NodeId> a_ids;
    std::vector<NodeId> b_ids;
    std::vector<NodeId> logit_ids;
    std::vector<NodeId> soft_gates; // empty in ForcedOn mode
    std::vector<int> hard_gates;
    std::vector<NodeId> w_eff;
    std::vector<NodeId> bias_ids; // constants
};

// `noise` supplies two Gumbel draws per layer (ignored in ForcedOn mode).
AdapterTape begin_adapter_tape(Tape& tape, const BaseModel& model, const SkillAdapter& adapter,
                               GateMode mode, std::span<const double> noise, double tau);

NodeId episode_nll(Tape& tape, const BaseModel& model, const AdapterTape& at,
                   const Episode& ep);

} // namespace lifelora
