#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lifelora/embed.hpp"
#include "lifelora/kbstore.hpp"
#include "lifelora/skillgen.hpp"
#include "lifelora/subspace.hpp"
#include "lifelora/toymodel.hpp"

namespace lifelora {

// Method switches:
//   full     - inheritance + orthogonality + gumbel gates, aggregate inference
//   no-GGM   - gates forced on
//   no-INA   - fresh Kaiming A every skill
//   no-SOT   - orthogonality weight zero
//   seq-ft   - one adapter fine-tuned through the whole stream
//   independent - fresh vanilla adapter per skill, no gates/orthogonality
//                 (the preliminary-study setting; also a storage baseline)
//   top1     - trains like full, inference loads only the most similar skill
//   avg-pool - trains like full, inference merges with uniform weights
struct RunConfig {
    // stream
    std::uint64_t stream_seed = 0;
    int n_train_skills = 8;
    int n_holdout = 2;
    double overlap_prob = 0.5;
    int paraphrases = 8;
    int train_episodes = 64;

    // base model (built once per process and shared between runs)
    ModelShape model{32, 48, 4, 48};
    std::uint64_t base_seed = 11;
    int pretrain_steps = 6000;
    double pretrain_lr = 1e-2;

    // adapters and aggregation
    int rank = 8;
    int subspace_rank = 4;
    int embed_dim = 512;
    double gamma = 5.0;
    double tau = 1.0;
    double lambda = 0.1;
    double lambda_s = 0.01;
    double eps = 0.01;

    // per-skill optimization
    double lr = 1e-4;
    int epochs = 4;
    int batch = 16;
    std::uint64_t train_seed = 1;

    // evaluation
    int eval_episodes = 25;
    std::string method = "full";
    std::string out_dir;

    std::string inference_mode() const; // aggregate | top1 | avg
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    void validate() const; // usage errors before any training starts
};

struct RunReport {
    RunConfig config;
    std::vector<std::string> skill_names;   // train skills
    std::vector<double> sr_gt;              // measured right after each skill
    std::vector<double> final_asr;          // after the whole stream
    std::vector<double> fr;                 // NaN marks undefined (sr_gt == 0)
    std::vector<std::vector<double>> stage_asr;      // stage t -> asr of skills 0..t
    std::vector<std::vector<double>> mean_omega;     // per skill, mean inference weights
    std::vector<std::vector<int>> gate_bitmaps;      // frozen decisions per skill
    std::vector<std::string> holdout_names;
    std::vector<double> holdout_asr;
    double avg_fr = 0.0;  // mean over defined entries; NaN if none defined
    double avg_asr = 0.0; // mean over train skills
    double wall_seconds = 0.0; // written to a sidecar, not the canonical json

    nlohmann::json to_json() const; // canonical (no wall clock)
};

struct RunResult {
    KnowledgeBase kb;
    RunReport report;
    SkillStream stream;
};

// Pretrained bases are cached per (shape, seed, steps, lr) for the process
// lifetime; every run with the same settings shares one frozen instance.
const BaseModel& shared_base(const RunConfig& cfg);

ModelFingerprint fingerprint_of(const RunConfig& cfg);

// Sequentially learns every training skill, snapshotting SR_gt after each
// stage, then evaluates the final system (training skills + holdout).
RunResult train_stream(const RunConfig& cfg, const EmbeddingProvider& provider);
RunResult train_stream(const RunConfig& cfg, const EmbeddingProvider& provider,
                       const SkillStream& stream, const BaseModel& base);

struct InferResult {
    std::vector<int> generated;
    std::vector<double> omega;
    int top1 = -1;
    std::vector<int> merged_gates;
};

// Skill-id agnostic inference: routes by the instruction text only.
// `inputs` is the raw data string (window padding is applied internally).
InferResult infer(const KnowledgeBase& kb, const BaseModel& base,
                  const EmbeddingProvider& provider, const std::string& instruction,
                  std::span<const int> inputs, const std::string& mode = "aggregate",
                  double gamma = 5.0);

// Per-skill ASR of `skill_index` under the current kb (routing inference,
// or the latest adapter for seq-ft).
double evaluate_skill(const KnowledgeBase& kb, const BaseModel& base,
                      const EmbeddingProvider& provider, const SkillStream& stream,
                      int skill_index, int episodes, const std::string& method, double gamma,
                      std::uint64_t eval_seed, std::vector<double>* mean_omega = nullptr);

struct StudyReport {
    Mat param_similarity;
    Mat semantic_similarity;
    double spearman = 0.0;
    double mean_a_similarity = 0.0;
    double mean_b_similarity = 0.0;
    std::vector<std::vector<double>> layer_profile; // per skill, per layer mean |delta|

    nlohmann::json to_json() const;
};

StudyReport observation_study(const KnowledgeBase& kb, const SkillStream& stream,
                              const EmbeddingProvider& provider);

// format: json -> report.json (+ timing.json), csv -> report.csv,
// plotdata -> plotdata.csv
void emit_report(const RunReport& report, const std::string& dir,
                 const std::vector<std::string>& formats);

struct AblateRow {
    std::uint64_t seed = 0;
    std::string method;
    double avg_asr = 0.0;
    double avg_fr = 0.0;
    double holdout_asr = 0.0;
};

// Runs the method grid over the given seeds; top1/avg-pool rows reuse the
// full run's knowledge base and differ only at inference.
std::vector<AblateRow> ablate(const RunConfig& base_cfg, const std::vector<std::uint64_t>& seeds,
                              const std::vector<std::string>& methods,
                              const EmbeddingProvider& provider);

double median(std::vector<double> xs);

} // namespace lifelora
