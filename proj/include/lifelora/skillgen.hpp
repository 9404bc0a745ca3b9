#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lifelora/mat.hpp"
#include "lifelora/toymodel.hpp"

namespace lifelora {

enum class PrimitiveKind { Shift, MapReflect, Reverse, SwapPairs, RepeatFirst };

// Token-level window transform; Shift and MapReflect carry an amount.
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Shift;
    int param = 0;

    bool operator==(const Primitive&) const = default;
    std::string name() const;
};

bool operator<(const Primitive& a, const Primitive& b);

struct SkillSpec {
    int skill_id = -1;
    std::string name;
    std::vector<Primitive> chain;          // applied left to right
    std::vector<std::string> instructions; // paraphrase strings, globally unique
    int train_episodes = 64;
    int eval_episodes = 25;
};

struct StreamConfig {
    int n_train = 8;
    int n_holdout = 2;
    double overlap_prob = 0.5; // chance a skill inherits a primitive from its predecessor
    int paraphrases = 8;
    int train_episodes = 64;
    int eval_episodes = 25;
};

struct SkillStream {
    std::uint64_t seed = 0;
    StreamConfig config;
    std::vector<SkillSpec> train;
    std::vector<SkillSpec> holdout;

    const SkillSpec& spec_at(int index) const; // train then holdout order
    int total_skills() const { return static_cast<int>(train.size() + holdout.size()); }
};

// Holdout skills recombine primitives already seen in training skills under
// fresh instructions, so they are open-world but composable.
SkillStream generate_stream(std::uint64_t seed, const StreamConfig& cfg = {});

// |chain_i intersect chain_j| / min(|chain_i|, |chain_j|) over train then
// holdout skills; symmetric with unit diagonal.
Mat relatedness_matrix(const SkillStream& stream);

std::vector<int> apply_chain(const std::vector<Primitive>& chain, std::vector<int> window);

// Deterministic 6-token encoding of an instruction string.
std::vector<int> instruction_tokens(const std::string& text);

struct SkillEpisode {
    int instruction_index = 0;
    Episode ep;
};

std::vector<SkillEpisode> render_episodes(const SkillSpec& spec, int count, std::uint64_t seed);

// One-file JSON round trip so runs are shareable.
void save_stream(const SkillStream& stream, const std::string& path);
SkillStream load_stream(const std::string& path);

} // namespace lifelora
