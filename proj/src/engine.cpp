#include "lifelora/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include "lifelora/rng.hpp"

namespace lifelora {

namespace {

constexpr double kPi = 3.141592653589793;

bool is_train_method(const std::string& m) {
    return m == "full" || m == "no-GGM" || m == "no-INA" || m == "no-SOT" || m == "seq-ft" ||
           m == "independent";
}

bool is_known_method(const std::string& m) {
    return is_train_method(m) || m == "top1" || m == "avg-pool";
}

std::string corpus_digest(const std::vector<std::string>& instructions) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const std::string& s : instructions) h = fnv1a(s, h) ^ (h << 1);
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

std::vector<LayerShape> adapter_shapes(const ModelShape& shape) {
    return std::vector<LayerShape>(shape.layers, LayerShape{shape.hidden, shape.hidden});
}

// normalized mean embedding of a skill's paraphrase corpus, the skill-level
// routing query
std::vector<double> mean_embedding(const EmbeddingProvider& provider,
                                   const std::vector<std::string>& instructions) {
    Mat x = embed_corpus(provider, instructions);
    std::vector<double> mean(x.cols(), 0.0);
    for (int i = 0; i < x.rows(); ++i) {
        for (int j = 0; j < x.cols(); ++j) mean[j] += x(i, j);
    }
    const double n = norm2(mean);
    if (n > 1e-12) {
        for (double& v : mean) v /= n;
    }
    return mean;
}

std::vector<double> similarities(const KnowledgeBase& kb, std::span<const double> query) {
    std::vector<double> sims;
    sims.reserve(kb.records.size());
    for (const SkillRecord& r : kb.records) sims.push_back(skill_similarity(query, r.subspace));
    return sims;
}

std::vector<double> weights_for_mode(const std::vector<double>& sims, double gamma,
                                     const std::string& mode) {
    const std::size_t n = sims.size();
    if (mode == "top1") {
        std::vector<double> w(n, 0.0);
        w[std::max_element(sims.begin(), sims.end()) - sims.begin()] = 1.0;
        return w;
    }
    if (mode == "avg") return std::vector<double>(n, 1.0 / static_cast<double>(n));
    if (mode != "aggregate") throw UsageError("unknown inference mode '" + mode + "'");
    return aggregation_weights(sims, gamma).weights;
}

std::vector<std::vector<Mat>> gated_record_deltas(const KnowledgeBase& kb) {
    std::vector<std::vector<Mat>> out(kb.records.size());
    for (std::size_t r = 0; r < kb.records.size(); ++r) {
        const SkillAdapter& ad = kb.records[r].adapter;
        for (int l = 0; l < ad.layers(); ++l) {
            out[r].push_back(gated_delta(ad.pairs[l], ad.gate_decisions[l]));
        }
    }
    return out;
}

std::vector<Mat> merge_deltas(const std::vector<std::vector<Mat>>& rec_deltas,
                              std::span<const double> weights) {
    const int layers = static_cast<int>(rec_deltas[0].size());
    std::vector<Mat> merged;
    merged.reserve(layers);
    for (int l = 0; l < layers; ++l) {
        Mat m(rec_deltas[0][l].rows(), rec_deltas[0][l].cols());
        for (std::size_t r = 0; r < rec_deltas.size(); ++r) {
            if (weights[r] <= 1e-12) continue;
            const double w = weights[r];
            const Mat& d = rec_deltas[r][l];
            for (int i = 0; i < m.size(); ++i) m.data()[i] += w * d.data()[i];
        }
        merged.push_back(std::move(m));
    }
    return merged;
}

// one skill's optimizer loop; priors' B factors are the orthogonality anchors
void train_one_skill(const RunConfig& cfg, const BaseModel& base, SkillAdapter& adapter,
                     const std::vector<SkillEpisode>& episodes,
                     const std::vector<std::vector<Mat>>& prior_bs, int stage) {
    const bool gumbel =
        cfg.method != "no-GGM" && cfg.method != "seq-ft" && cfg.method != "independent";
    const bool use_orth = cfg.lambda > 0.0 && cfg.method != "no-SOT" && cfg.method != "seq-ft" &&
                          cfg.method != "independent" && !prior_bs.empty();

    const int n = static_cast<int>(episodes.size());
    const int batches = (n + cfg.batch - 1) / cfg.batch;
    const int total_steps = cfg.epochs * batches;

    Adam opt({.lr = cfg.lr});
    Rng order_rng(derive_seed(cfg.train_seed, "batch-order", static_cast<std::uint64_t>(stage)));
    Rng noise_rng(derive_seed(cfg.train_seed, "gumbel", static_cast<std::uint64_t>(stage)));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[order_rng.below(i)]);
        }
        for (int b = 0; b < batches; ++b, ++step) {
            const double frac = total_steps > 1 ? static_cast<double>(step) / total_steps : 0.0;
            opt.set_lr(cfg.lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(kPi * frac))));

            Tape tape;
            std::vector<double> noise(2 * base.shape.layers, 0.0);
            if (gumbel) {
                for (double& u : noise) u = noise_rng.gumbel();
            }
            AdapterTape at = begin_adapter_tape(tape, base, adapter,
                                                gumbel ? GateMode::Gumbel : GateMode::ForcedOn,
                                                noise, cfg.tau);
            NodeId total = tape.constant(Mat(1, 1));
            int in_batch = 0;
            for (int k = b * cfg.batch; k < std::min(n, (b + 1) * cfg.batch); ++k, ++in_batch) {
                total = tape.add(total, episode_nll(tape, base, at, episodes[order[k]].ep));
            }
            NodeId loss = tape.const_mul(1.0 / std::max(1, in_batch), total);
            if (use_orth) {
                loss = tape.add(loss,
                                tape.const_mul(cfg.lambda,
                                               orthogonality_term(tape, at.b_ids, prior_bs, cfg.eps)));
            }
            if (gumbel && cfg.lambda_s > 0.0) {
                loss = tape.add(loss, tape.const_mul(cfg.lambda_s, sparsity_term(tape, at.soft_gates)));
            }
            auto grads = tape.backward(loss);

            std::vector<Mat*> params;
            std::vector<Mat> gs;
            for (int l = 0; l < base.shape.layers; ++l) {
                params.push_back(&adapter.pairs[l].a);
                gs.push_back(grads.at(at.a_ids[l]));
                params.push_back(&adapter.pairs[l].b);
                gs.push_back(grads.at(at.b_ids[l]));
                if (gumbel) {
                    params.push_back(&adapter.gate_logits[l]);
                    gs.push_back(grads.at(at.logit_ids[l]));
                }
            }
            opt.step(std::move(params), gs);
        }
    }

    if (gumbel) {
        freeze_gates(adapter);
    } else {
        for (Mat& lg : adapter.gate_logits) lg = Mat(1, 2, {0.0, 1.0});
        freeze_gates(adapter); // every layer injects
    }
}

std::vector<int> window_from_inputs(std::span<const int> inputs) {
    if (inputs.empty() || static_cast<int>(inputs.size()) > episode_format::kWindow) {
        throw UsageError("inputs must hold 1.." + std::to_string(episode_format::kWindow) +
                         " data tokens");
    }
    for (int t : inputs) {
        if (t < tokens::kDataLo || t > tokens::kDataHi) {
            throw UsageError("input token " + std::to_string(t) + " outside the data alphabet 0.." +
                             std::to_string(tokens::kDataHi));
        }
    }
    std::vector<int> window(episode_format::kWindow, tokens::kPad);
    std::copy(inputs.begin(), inputs.end(),
              window.begin() + (episode_format::kWindow - inputs.size()));
    return window;
}

} // namespace

double median(std::vector<double> xs) {
    if (xs.empty()) throw UsageError("median: empty input");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::string RunConfig::inference_mode() const {
    if (method == "top1") return "top1";
    if (method == "avg-pool") return "avg";
    return "aggregate";
}

void RunConfig::validate() const {
    if (!is_known_method(method)) throw UsageError("unknown method '" + method + "'");
    if (n_train_skills < 1) throw UsageError("need at least one training skill");
    if (n_holdout < 0) throw UsageError("negative holdout count");
    if (paraphrases < 1) throw UsageError("need at least one paraphrase per skill");
    if (subspace_rank < 1 || subspace_rank > paraphrases || subspace_rank > embed_dim) {
        throw UsageError("subspace rank " + std::to_string(subspace_rank) +
                         " must lie in 1..min(paraphrases=" + std::to_string(paraphrases) +
                         ", embed_dim=" + std::to_string(embed_dim) + ")");
    }
    if (rank < 1) throw UsageError("adapter rank must be positive");
    if (epochs < 1 || batch < 1) throw UsageError("epochs and batch must be positive");
    if (train_episodes < 1 || eval_episodes < 1) throw UsageError("episode counts must be positive");
    if (tau <= 0.0) throw UsageError("gate temperature must be positive");
    if (model.vocab < tokens::kMinVocab) {
        throw UsageError("model vocab must be at least " + std::to_string(tokens::kMinVocab));
    }
}

nlohmann::json RunConfig::to_json() const {
    return {{"stream_seed", stream_seed},
            {"n_train_skills", n_train_skills},
            {"n_holdout", n_holdout},
            {"overlap_prob", overlap_prob},
            {"paraphrases", paraphrases},
            {"train_episodes", train_episodes},
            {"model", {{"vocab", model.vocab},
                       {"hidden", model.hidden},
                       {"layers", model.layers},
                       {"max_positions", model.max_positions}}},
            {"base_seed", base_seed},
            {"pretrain_steps", pretrain_steps},
            {"pretrain_lr", pretrain_lr},
            {"rank", rank},
            {"subspace_rank", subspace_rank},
            {"embed_dim", embed_dim},
            {"gamma", gamma},
            {"tau", tau},
            {"lambda", lambda},
            {"lambda_s", lambda_s},
            {"eps", eps},
            {"lr", lr},
            {"epochs", epochs},
            {"batch", batch},
            {"train_seed", train_seed},
            {"eval_episodes", eval_episodes},
            {"method", method},
            {"out_dir", out_dir}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("stream_seed", c.stream_seed);
    get("n_train_skills", c.n_train_skills);
    get("n_holdout", c.n_holdout);
    get("overlap_prob", c.overlap_prob);
    get("paraphrases", c.paraphrases);
    get("train_episodes", c.train_episodes);
    if (j.contains("model")) {
        const auto& m = j.at("model");
        if (m.contains("vocab")) c.model.vocab = m.at("vocab").get<int>();
        if (m.contains("hidden")) c.model.hidden = m.at("hidden").get<int>();
        if (m.contains("layers")) c.model.layers = m.at("layers").get<int>();
        if (m.contains("max_positions")) c.model.max_positions = m.at("max_positions").get<int>();
    }
    get("base_seed", c.base_seed);
    get("pretrain_steps", c.pretrain_steps);
    get("pretrain_lr", c.pretrain_lr);
    get("rank", c.rank);
    get("subspace_rank", c.subspace_rank);
    get("embed_dim", c.embed_dim);
    get("gamma", c.gamma);
    get("tau", c.tau);
    get("lambda", c.lambda);
    get("lambda_s", c.lambda_s);
    get("eps", c.eps);
    get("lr", c.lr);
    get("epochs", c.epochs);
    get("batch", c.batch);
    get("train_seed", c.train_seed);
    get("eval_episodes", c.eval_episodes);
    get("method", c.method);
    get("out_dir", c.out_dir);
    return c;
}

ModelFingerprint fingerprint_of(const RunConfig& cfg) {
    return {cfg.model.vocab, cfg.model.hidden, cfg.model.layers, cfg.rank, cfg.embed_dim};
}

const BaseModel& shared_base(const RunConfig& cfg) {
    static std::mutex mu;
    static std::map<std::string, std::unique_ptr<BaseModel>> cache;

    std::ostringstream key;
    key << cfg.model.vocab << ":" << cfg.model.hidden << ":" << cfg.model.layers << ":"
        << cfg.model.max_positions << ":" << cfg.base_seed << ":" << cfg.pretrain_steps << ":"
        << cfg.pretrain_lr;

    std::scoped_lock lock(mu);
    auto it = cache.find(key.str());
    if (it == cache.end()) {
        auto base = std::make_unique<BaseModel>(make_base(cfg.model, cfg.base_seed));
        PretrainConfig pc;
        pc.steps = cfg.pretrain_steps;
        pc.lr = cfg.pretrain_lr;
        pretrain_base(*base, pc);
        it = cache.emplace(key.str(), std::move(base)).first;
    }
    return *it->second;
}

double evaluate_skill(const KnowledgeBase& kb, const BaseModel& base,
                      const EmbeddingProvider& provider, const SkillStream& stream,
                      int skill_index, int episodes, const std::string& method, double gamma,
                      std::uint64_t eval_seed, std::vector<double>* mean_omega) {
    const SkillSpec& spec = stream.spec_at(skill_index);
    const std::vector<SkillEpisode> eps = render_episodes(spec, episodes, eval_seed);
    if (kb.records.empty()) throw UsageError("evaluate_skill: empty knowledge base");

    const auto rec_deltas = gated_record_deltas(kb);
    const std::string mode =
        method == "top1" ? "top1" : (method == "avg-pool" ? "avg" : "aggregate");
    const bool seqft = method == "seq-ft";

    std::vector<int> ok(eps.size(), 0);
    std::vector<std::vector<double>> omegas(eps.size());
#pragma omp parallel for schedule(dynamic)
    for (int e = 0; e < static_cast<int>(eps.size()); ++e) {
        if (seqft) {
            ok[e] = episode_success(base, rec_deltas.back(), eps[e].ep);
            continue;
        }
        const std::string& instruction = spec.instructions[eps[e].instruction_index];
        InstructionEmbedding emb = provider.embed(instruction);
        std::vector<double> sims = similarities(kb, emb.vector);
        std::vector<double> w = weights_for_mode(sims, gamma, mode);
        omegas[e] = w;
        std::vector<Mat> merged = merge_deltas(rec_deltas, w);
        ok[e] = episode_success(base, merged, eps[e].ep);
    }

    if (mean_omega) {
        mean_omega->assign(kb.records.size(), 0.0);
        int counted = 0;
        for (const auto& w : omegas) {
            if (w.empty()) continue;
            for (std::size_t i = 0; i < w.size(); ++i) (*mean_omega)[i] += w[i];
            ++counted;
        }
        if (counted > 0) {
            for (double& v : *mean_omega) v /= counted;
        }
    }
    int total = 0;
    for (int v : ok) total += v;
    return static_cast<double>(total) / static_cast<double>(eps.size());
}

InferResult infer(const KnowledgeBase& kb, const BaseModel& base,
                  const EmbeddingProvider& provider, const std::string& instruction,
                  std::span<const int> inputs, const std::string& mode, double gamma) {
    if (kb.records.empty()) throw UsageError("infer: empty knowledge base");
    if (provider.digest() != kb.embedding_digest) {
        throw CompatError("infer: embedding digest '" + provider.digest() +
                          "' does not match knowledge base digest '" + kb.embedding_digest + "'");
    }

    InstructionEmbedding emb = provider.embed(instruction);
    std::vector<double> sims = similarities(kb, emb.vector);
    std::vector<double> w = weights_for_mode(sims, gamma, mode);

    std::vector<SkillAdapter> adapters;
    adapters.reserve(kb.records.size());
    for (const SkillRecord& r : kb.records) adapters.push_back(r.adapter);
    MergedAdapter merged = aggregate_adapters(adapters, w);

    std::vector<int> window = window_from_inputs(inputs);
    Episode probe = make_window_episode(instruction_tokens(instruction), window, window);

    InferResult res;
    res.omega = std::move(w);
    res.top1 = merged.top1;
    res.merged_gates = merged.gates;
    res.generated = generate(base, merged.deltas, probe.prompt, 16);
    return res;
}

RunResult train_stream(const RunConfig& cfg, const EmbeddingProvider& provider) {
    StreamConfig sc;
    sc.n_train = cfg.n_train_skills;
    sc.n_holdout = cfg.n_holdout;
    sc.overlap_prob = cfg.overlap_prob;
    sc.paraphrases = cfg.paraphrases;
    sc.train_episodes = cfg.train_episodes;
    sc.eval_episodes = cfg.eval_episodes;
    SkillStream stream = generate_stream(cfg.stream_seed, sc);
    return train_stream(cfg, provider, stream, shared_base(cfg));
}

RunResult train_stream(const RunConfig& cfg, const EmbeddingProvider& provider,
                       const SkillStream& stream, const BaseModel& base) {
    cfg.validate();
    if (provider.dim() != cfg.embed_dim) {
        throw UsageError("embedding provider dim " + std::to_string(provider.dim()) +
                         " does not match configured embed_dim " + std::to_string(cfg.embed_dim));
    }
    if (base.shape != cfg.model) throw UsageError("train_stream: base model shape mismatch");
    const auto started = std::chrono::steady_clock::now();

    RunResult out;
    out.stream = stream;
    out.kb.fingerprint = fingerprint_of(cfg);
    out.kb.embedding_digest = provider.digest();

    RunReport& report = out.report;
    report.config = cfg;

    const int T = static_cast<int>(stream.train.size());
    const std::uint64_t train_split = derive_seed(cfg.train_seed, "train-split");
    const std::uint64_t eval_split = derive_seed(cfg.train_seed, "eval-split");

    SkillAdapter seqft_adapter;
    for (int t = 0; t < T; ++t) {
        const SkillSpec& spec = stream.train[t];
        const std::vector<SkillEpisode> episodes =
            render_episodes(spec, cfg.train_episodes, train_split);

        SkillAdapter adapter;
        if (cfg.method == "seq-ft") {
            if (t == 0) {
                seqft_adapter = init_first_skill(adapter_shapes(cfg.model), cfg.rank,
                                                 derive_seed(cfg.train_seed, "init", 0), 0);
            }
            adapter = std::move(seqft_adapter);
            adapter.skill_id = t;
        } else if (t == 0 || cfg.method == "no-INA" || cfg.method == "independent") {
            adapter = init_first_skill(adapter_shapes(cfg.model), cfg.rank,
                                       derive_seed(cfg.train_seed, "init", t), t);
        } else {
            std::vector<double> query = mean_embedding(provider, spec.instructions);
            std::vector<double> sims = similarities(out.kb, query);
            AggregationWeights w = aggregation_weights(sims, cfg.gamma);
            std::vector<SkillAdapter> priors;
            priors.reserve(out.kb.records.size());
            for (const SkillRecord& r : out.kb.records) priors.push_back(r.adapter);
            adapter = inherit_from(priors, w.weights, t);
        }

        std::vector<std::vector<Mat>> prior_bs;
        if (cfg.method != "seq-ft" && cfg.method != "no-SOT" && cfg.method != "independent") {
            for (const SkillRecord& r : out.kb.records) {
                std::vector<Mat> bs;
                for (const AdapterPair& p : r.adapter.pairs) bs.push_back(p.b);
                prior_bs.push_back(std::move(bs));
            }
        }

        train_one_skill(cfg, base, adapter, episodes, prior_bs, t);

        SkillRecord record;
        record.skill_id = t;
        record.name = spec.name;
        record.instruction_digest = corpus_digest(spec.instructions);
        record.adapter = adapter;
        record.subspace =
            build_subspace(embed_corpus(provider, spec.instructions), cfg.subspace_rank, t);
        out.kb = append_record(out.kb, std::move(record));
        if (cfg.method == "seq-ft") seqft_adapter = std::move(adapter);

        // stage snapshot: the system right after learning skills 0..t
        std::vector<double> stage(t + 1, 0.0);
        for (int j = 0; j <= t; ++j) {
            stage[j] = evaluate_skill(out.kb, base, provider, stream, j, cfg.eval_episodes,
                                      cfg.method, cfg.gamma, eval_split, nullptr);
        }
        out.kb.records.back().sr_gt = stage[t];
        report.stage_asr.push_back(std::move(stage));
    }

    report.skill_names.reserve(T);
    for (const SkillSpec& s : stream.train) report.skill_names.push_back(s.name);
    for (const SkillRecord& r : out.kb.records) {
        report.sr_gt.push_back(r.sr_gt);
        report.gate_bitmaps.push_back(r.adapter.gate_decisions);
    }

    // final pass over training skills, capturing the inference weights
    report.final_asr.resize(T);
    report.mean_omega.resize(T);
    for (int j = 0; j < T; ++j) {
        report.final_asr[j] = evaluate_skill(out.kb, base, provider, stream, j, cfg.eval_episodes,
                                             cfg.method, cfg.gamma, eval_split,
                                             &report.mean_omega[j]);
    }

    report.fr.resize(T);
    double fr_sum = 0.0;
    int fr_count = 0;
    for (int j = 0; j < T; ++j) {
        if (report.sr_gt[j] > 0.0) {
            report.fr[j] = (report.sr_gt[j] - report.final_asr[j]) / report.sr_gt[j];
            fr_sum += report.fr[j];
            ++fr_count;
        } else {
            report.fr[j] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    report.avg_fr = fr_count > 0 ? fr_sum / fr_count : std::numeric_limits<double>::quiet_NaN();
    report.avg_asr = std::accumulate(report.final_asr.begin(), report.final_asr.end(), 0.0) / T;

    for (std::size_t k = 0; k < stream.holdout.size(); ++k) {
        report.holdout_names.push_back(stream.holdout[k].name);
        report.holdout_asr.push_back(evaluate_skill(out.kb, base, provider, stream,
                                                    T + static_cast<int>(k), cfg.eval_episodes,
                                                    cfg.method, cfg.gamma, eval_split, nullptr));
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
}

nlohmann::json RunReport::to_json() const {
    nlohmann::json j;
    j["config"] = config.to_json();
    j["skill_names"] = skill_names;
    j["sr_gt"] = sr_gt;
    j["final_asr"] = final_asr;
    nlohmann::json frj = nlohmann::json::array();
    for (double v : fr) {
        if (std::isnan(v)) {
            frj.push_back(nullptr);
        } else {
            frj.push_back(v);
        }
    }
    j["fr"] = std::move(frj);
    j["stage_asr"] = stage_asr;
    j["mean_omega"] = mean_omega;
    j["gate_bitmaps"] = gate_bitmaps;
    j["holdout_names"] = holdout_names;
    j["holdout_asr"] = holdout_asr;
    j["avg_fr"] = std::isnan(avg_fr) ? nlohmann::json(nullptr) : nlohmann::json(avg_fr);
    j["avg_asr"] = avg_asr;
    return j;
}

StudyReport observation_study(const KnowledgeBase& kb, const SkillStream& stream,
                              const EmbeddingProvider& provider) {
    const int n = static_cast<int>(kb.records.size());
    if (n < 4) throw UsageError("observation_study: need at least 4 learned skills");

    const auto rec_deltas = gated_record_deltas(kb);
    auto flatten = [](const std::vector<Mat>& mats) {
        std::vector<double> v;
        for (const Mat& m : mats) v.insert(v.end(), m.data(), m.data() + m.size());
        return v;
    };

    StudyReport study;
    study.param_similarity = Mat(n, n);
    study.semantic_similarity = Mat(n, n);

    std::vector<std::vector<double>> params;
    std::vector<std::vector<double>> means;
    std::vector<std::vector<double>> a_flat, b_flat;
    for (int i = 0; i < n; ++i) {
        params.push_back(flatten(rec_deltas[i]));
        means.push_back(mean_embedding(provider, stream.spec_at(i).instructions));
        std::vector<Mat> as, bs;
        for (const AdapterPair& p : kb.records[i].adapter.pairs) {
            as.push_back(p.a);
            bs.push_back(p.b);
        }
        a_flat.push_back(flatten(as));
        b_flat.push_back(flatten(bs));
    }

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            study.param_similarity(i, j) = i == j ? 1.0 : cosine(params[i], params[j]);
            study.semantic_similarity(i, j) = i == j ? 1.0 : cosine(means[i], means[j]);
        }
    }

    // Spearman rank correlation over the strict upper triangle
    std::vector<double> ps, ss;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            ps.push_back(study.param_similarity(i, j));
            ss.push_back(study.semantic_similarity(i, j));
        }
    }
    auto ranks = [](const std::vector<double>& v) {
        const int m = static_cast<int>(v.size());
        std::vector<int> idx(m);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
        std::vector<double> r(m);
        int i = 0;
        while (i < m) {
            int j = i;
            while (j + 1 < m && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * (i + j) + 1.0;
            for (int k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rp = ranks(ps);
    const auto rs = ranks(ss);
    const int m = static_cast<int>(ps.size());
    double mp = 0, ms = 0;
    for (int i = 0; i < m; ++i) {
        mp += rp[i];
        ms += rs[i];
    }
    mp /= m;
    ms /= m;
    double sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < m; ++i) {
        sxy += (rp[i] - mp) * (rs[i] - ms);
        sxx += (rp[i] - mp) * (rp[i] - mp);
        syy += (rs[i] - ms) * (rs[i] - ms);
    }
    study.spearman = (sxx > 0 && syy > 0) ? sxy / std::sqrt(sxx * syy) : 0.0;

    double a_sum = 0, b_sum = 0;
    int pairs = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            a_sum += cosine(a_flat[i], a_flat[j]);
            b_sum += cosine(b_flat[i], b_flat[j]);
            ++pairs;
        }
    }
    study.mean_a_similarity = a_sum / pairs;
    study.mean_b_similarity = b_sum / pairs;

    for (int i = 0; i < n; ++i) {
        std::vector<double> profile;
        for (const Mat& d : rec_deltas[i]) {
            double acc = 0.0;
            for (int k = 0; k < d.size(); ++k) acc += std::abs(d.data()[k]);
            profile.push_back(acc / std::max(1, d.size()));
        }
        study.layer_profile.push_back(std::move(profile));
    }
    return study;
}

nlohmann::json StudyReport::to_json() const {
    auto mat_to_json = [](const Mat& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (int i = 0; i < m.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    return {{"param_similarity", mat_to_json(param_similarity)},
            {"semantic_similarity", mat_to_json(semantic_similarity)},
            {"spearman", spearman},
            {"mean_a_similarity", mean_a_similarity},
            {"mean_b_similarity", mean_b_similarity},
            {"layer_profile", layer_profile}};
}

void emit_report(const RunReport& report, const std::string& dir,
                 const std::vector<std::string>& formats) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("emit_report: cannot create directory " + dir);

    auto open = [&](const std::string& name) {
        std::ofstream out(dir + "/" + name, std::ios::trunc);
        if (!out) throw IoError("emit_report: cannot write " + dir + "/" + name);
        return out;
    };

    for (const std::string& fmt : formats) {
        if (fmt == "json") {
            open("report.json") << report.to_json().dump(2) << "\n";
            open("timing.json") << nlohmann::json{{"wall_seconds", report.wall_seconds}}.dump(2)
                                << "\n";
        } else if (fmt == "csv") {
            auto out = open("report.csv");
            out << "skill,name,sr_gt,asr,fr\n";
            for (std::size_t i = 0; i < report.skill_names.size(); ++i) {
                out << i << "," << report.skill_names[i] << "," << report.sr_gt[i] << ","
                    << report.final_asr[i] << ",";
                if (std::isnan(report.fr[i])) {
                    out << "undefined";
                } else {
                    out << report.fr[i];
                }
                out << "\n";
            }
            for (std::size_t k = 0; k < report.holdout_names.size(); ++k) {
                out << (report.skill_names.size() + k) << "," << report.holdout_names[k] << ",,"
                    << report.holdout_asr[k] << ",\n";
            }
        } else if (fmt == "plotdata") {
            auto out = open("plotdata.csv");
            out << "stage,skill,asr\n";
            for (std::size_t t = 0; t < report.stage_asr.size(); ++t) {
                for (std::size_t j = 0; j < report.stage_asr[t].size(); ++j) {
                    out << t << "," << j << "," << report.stage_asr[t][j] << "\n";
                }
            }
        } else {
            throw UsageError("emit_report: unknown format '" + fmt + "'");
        }
    }
}

std::vector<AblateRow> ablate(const RunConfig& base_cfg, const std::vector<std::uint64_t>& seeds,
                              const std::vector<std::string>& methods,
                              const EmbeddingProvider& provider) {
    for (const std::string& m : methods) {
        if (!is_known_method(m)) throw UsageError("ablate: unknown method '" + m + "'");
    }
    const bool needs_full =
        std::any_of(methods.begin(), methods.end(),
                    [](const std::string& m) { return !is_train_method(m) || m == "full"; });

    const BaseModel& base = shared_base(base_cfg);
    std::vector<std::vector<AblateRow>> per_seed(seeds.size());

#pragma omp parallel for schedule(dynamic)
    for (int si = 0; si < static_cast<int>(seeds.size()); ++si) {
        RunConfig cfg = base_cfg;
        cfg.stream_seed = seeds[si];

        StreamConfig sc;
        sc.n_train = cfg.n_train_skills;
        sc.n_holdout = cfg.n_holdout;
        sc.overlap_prob = cfg.overlap_prob;
        sc.paraphrases = cfg.paraphrases;
        sc.train_episodes = cfg.train_episodes;
        sc.eval_episodes = cfg.eval_episodes;
        const SkillStream stream = generate_stream(cfg.stream_seed, sc);

        std::optional<RunResult> full;
        if (needs_full) {
            RunConfig fc = cfg;
            fc.method = "full";
            full = train_stream(fc, provider, stream, base);
        }

        for (const std::string& method : methods) {
            AblateRow row;
            row.seed = seeds[si];
            row.method = method;
            if (method == "full") {
                row.avg_asr = full->report.avg_asr;
                row.avg_fr = full->report.avg_fr;
                row.holdout_asr = full->report.holdout_asr.empty()
                                      ? 0.0
                                      : std::accumulate(full->report.holdout_asr.begin(),
                                                        full->report.holdout_asr.end(), 0.0) /
                                            full->report.holdout_asr.size();
            } else if (is_train_method(method)) {
                RunConfig mc = cfg;
                mc.method = method;
                RunResult res = train_stream(mc, provider, stream, base);
                row.avg_asr = res.report.avg_asr;
                row.avg_fr = res.report.avg_fr;
                row.holdout_asr = res.report.holdout_asr.empty()
                                      ? 0.0
                                      : std::accumulate(res.report.holdout_asr.begin(),
                                                        res.report.holdout_asr.end(), 0.0) /
                                            res.report.holdout_asr.size();
            } else {
                // top1 / avg-pool: training identical to full, only inference
                // changes; reuse the full knowledge base
                const std::uint64_t eval_split = derive_seed(cfg.train_seed, "eval-split");
                const int T = static_cast<int>(stream.train.size());
                double asr_sum = 0.0, fr_sum = 0.0;
                int fr_count = 0;
                for (int j = 0; j < T; ++j) {
                    const double asr = evaluate_skill(full->kb, base, provider, stream, j,
                                                      cfg.eval_episodes, method, cfg.gamma,
                                                      eval_split, nullptr);
                    asr_sum += asr;
                    const double sr = full->report.sr_gt[j];
                    if (sr > 0.0) {
                        fr_sum += (sr - asr) / sr;
                        ++fr_count;
                    }
                }
                double hold_sum = 0.0;
                for (std::size_t k = 0; k < stream.holdout.size(); ++k) {
                    hold_sum += evaluate_skill(full->kb, base, provider, stream,
                                               T + static_cast<int>(k), cfg.eval_episodes, method,
                                               cfg.gamma, eval_split, nullptr);
                }
                row.avg_asr = asr_sum / T;
                row.avg_fr = fr_count > 0 ? fr_sum / fr_count
                                          : std::numeric_limits<double>::quiet_NaN();
                row.holdout_asr =
                    stream.holdout.empty() ? 0.0 : hold_sum / stream.holdout.size();
            }
            per_seed[si].push_back(std::move(row));
        }
    }

    std::vector<AblateRow> rows;
    for (auto& chunk : per_seed) {
        for (auto& row : chunk) rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace lifelora
