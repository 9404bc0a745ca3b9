#include "lifelora/skillgen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lifelora/rng.hpp"

namespace lifelora {

namespace {

using episode_format::kWindow;

bool is_data_token(int t) { return t >= tokens::kDataLo && t <= tokens::kDataHi; }

const std::vector<std::string> kNouns = {
    "beads", "tiles",  "cards", "marbles", "runes", "chips", "coins", "stones",
    "shells", "pegs",  "gems",  "knots",   "rings", "dice",  "masks", "seeds",
    "locks", "spools", "reels", "charms"};

const std::vector<std::string> kNumberWords = {"zero", "one", "two",  "three",
                                               "four", "five", "six", "seven"};

const std::vector<std::string> kShiftVerbs = {"shift", "rotate", "advance", "cycle", "step"};
const std::vector<std::string> kMapVerbs = {"reflect", "mirror", "complement"};
const std::vector<std::string> kConnectors = {", then ", " and then ", ", afterwards "};
const std::vector<std::string> kFillers = {"", " now", " carefully", " in one go", " quickly"};

std::string pick(const std::vector<std::string>& pool, Rng& rng) {
    return pool[rng.below(pool.size())];
}

std::string primitive_phrase(const Primitive& p, const std::string& noun, Rng& rng) {
    std::ostringstream os;
    // the verb is fixed by the parameter, so instructions for different
    // amounts stay well separated in n-gram space while paraphrases of one
    // skill keep a common core
    switch (p.kind) {
    case PrimitiveKind::Shift: {
        const std::string& verb = kShiftVerbs[p.param % kShiftVerbs.size()];
        switch (rng.below(3)) {
        case 0: os << verb << " the " << noun << " forward by " << kNumberWords[p.param]; break;
        case 1: os << verb << " the " << noun << " " << kNumberWords[p.param] << " places"; break;
        default: os << verb << " each of the " << noun << " by " << kNumberWords[p.param]; break;
        }
        break;
    }
    case PrimitiveKind::MapReflect: {
        const std::string& verb = kMapVerbs[p.param % kMapVerbs.size()];
        switch (rng.below(2)) {
        case 0: os << verb << " the " << noun << " with offset " << kNumberWords[p.param]; break;
        default: os << verb << " every one of the " << noun << " about " << kNumberWords[p.param];
            break;
        }
        break;
    }
    case PrimitiveKind::Reverse:
        switch (rng.below(3)) {
        case 0: os << "reverse the " << noun; break;
        case 1: os << "flip the " << noun << " end to end"; break;
        default: os << "invert the order of the " << noun; break;
        }
        break;
    case PrimitiveKind::SwapPairs:
        switch (rng.below(3)) {
        case 0: os << "swap neighboring " << noun; break;
        case 1: os << "exchange adjacent " << noun << " in pairs"; break;
        default: os << "switch the " << noun << " pairwise"; break;
        }
        break;
    case PrimitiveKind::RepeatFirst:
        switch (rng.below(3)) {
        case 0: os << "repeat the first of the " << noun << " everywhere"; break;
        case 1: os << "echo the leading one of the " << noun << " across the row"; break;
        default: os << "fill the row with the first of the " << noun; break;
        }
        break;
    }
    return os.str();
}

std::string chain_instruction(const std::vector<Primitive>& chain, const std::string& noun,
                              Rng& rng) {
    std::ostringstream os;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        if (i > 0) os << pick(kConnectors, rng);
        os << primitive_phrase(chain[i], noun, rng);
    }
    os << pick(kFillers, rng);
    return os.str();
}

Primitive random_primitive(Rng& rng) {
    const double pick = rng.uniform();
    if (pick < 0.30) return {PrimitiveKind::Shift, 1 + static_cast<int>(rng.below(7))};
    if (pick < 0.60) return {PrimitiveKind::MapReflect, 1 + static_cast<int>(rng.below(5))};
    if (pick < 0.80) return {PrimitiveKind::Reverse, 0};
    if (pick < 0.90) return {PrimitiveKind::RepeatFirst, 0};
    return {PrimitiveKind::SwapPairs, 0};
}

bool contains(const std::vector<Primitive>& chain, const Primitive& p) {
    return std::find(chain.begin(), chain.end(), p) != chain.end();
}

std::vector<Primitive> random_chain(Rng& rng) {
    const double pick = rng.uniform();
    const int len = pick < 0.40 ? 1 : (pick < 0.85 ? 2 : 3);
    std::vector<Primitive> chain;
    while (static_cast<int>(chain.size()) < len) {
        Primitive p = random_primitive(rng);
        if (!contains(chain, p)) chain.push_back(p);
    }
    return chain;
}

std::set<Primitive> chain_set(const std::vector<Primitive>& chain) {
    return {chain.begin(), chain.end()};
}

std::vector<std::string> make_paraphrases(const std::vector<Primitive>& chain,
                                          const std::string& noun, int count, Rng& rng,
                                          std::set<std::string>& taken) {
    std::vector<std::string> out;
    int guard = 0;
    while (static_cast<int>(out.size()) < count) {
        std::string s = chain_instruction(chain, noun, rng);
        if (taken.insert(s).second) {
            out.push_back(std::move(s));
        } else if (++guard > 500) {
            throw NumericError("skillgen: unable to draw enough distinct paraphrases");
        }
    }
    return out;
}

std::string skill_name(int id, const std::vector<Primitive>& chain, const std::string& noun) {
    std::ostringstream os;
    os << "s" << (id < 10 ? "0" : "") << id;
    for (const Primitive& p : chain) os << "-" << p.name();
    os << "-" << noun;
    return os.str();
}

std::string kind_tag(PrimitiveKind k) {
    switch (k) {
    case PrimitiveKind::Shift: return "shift";
    case PrimitiveKind::MapReflect: return "map";
    case PrimitiveKind::Reverse: return "reverse";
    case PrimitiveKind::SwapPairs: return "swap";
    case PrimitiveKind::RepeatFirst: return "repeat";
    }
    return "?";
}

PrimitiveKind kind_from_tag(const std::string& tag) {
    if (tag == "shift") return PrimitiveKind::Shift;
    if (tag == "map") return PrimitiveKind::MapReflect;
    if (tag == "reverse") return PrimitiveKind::Reverse;
    if (tag == "swap") return PrimitiveKind::SwapPairs;
    if (tag == "repeat") return PrimitiveKind::RepeatFirst;
    throw FormatError("skillgen: unknown primitive tag '" + tag + "'");
}

} // namespace

bool operator<(const Primitive& a, const Primitive& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.param < b.param;
}

std::string Primitive::name() const {
    std::string n = kind_tag(kind);
    if (kind == PrimitiveKind::Shift || kind == PrimitiveKind::MapReflect) {
        n += std::to_string(param);
    }
    return n;
}

const SkillSpec& SkillStream::spec_at(int index) const {
    const int t = static_cast<int>(train.size());
    if (index < 0 || index >= total_skills()) throw UsageError("spec_at: index out of range");
    return index < t ? train[index] : holdout[index - t];
}

std::vector<int> apply_chain(const std::vector<Primitive>& chain, std::vector<int> window) {
    for (const Primitive& p : chain) {
        switch (p.kind) {
        case PrimitiveKind::Shift:
            for (int& t : window) {
                if (is_data_token(t)) {
                    t = tokens::kDataLo + (t - tokens::kDataLo + p.param) % tokens::kDataSpan;
                }
            }
            break;
        case PrimitiveKind::MapReflect:
            for (int& t : window) {
                if (is_data_token(t)) {
                    t = tokens::kDataLo + (tokens::kDataHi - t + p.param) % tokens::kDataSpan;
                }
            }
            break;
        case PrimitiveKind::Reverse:
            std::reverse(window.begin(), window.end());
            break;
        case PrimitiveKind::SwapPairs:
            for (std::size_t i = 0; i + 1 < window.size(); i += 2) std::swap(window[i], window[i + 1]);
            break;
        case PrimitiveKind::RepeatFirst: {
            int first = -1;
            for (int t : window) {
                if (is_data_token(t)) {
                    first = t;
                    break;
                }
            }
            if (first >= 0) {
                for (int& t : window) {
                    if (is_data_token(t)) t = first;
                }
            }
            break;
        }
        }
    }
    return window;
}

SkillStream generate_stream(std::uint64_t seed, const StreamConfig& cfg) {
    if (cfg.n_train < 2) throw UsageError("generate_stream: need at least 2 training skills");
    if (cfg.n_holdout < 0) throw UsageError("generate_stream: negative holdout count");
    if (cfg.n_train + cfg.n_holdout > static_cast<int>(kNouns.size())) {
        throw UsageError("generate_stream: not enough distinct nouns for that many skills");
    }
    if (cfg.paraphrases < 1) throw UsageError("generate_stream: need at least one paraphrase");

    Rng rng(derive_seed(seed, "stream"));
    SkillStream stream;
    stream.seed = seed;
    stream.config = cfg;

    // distinct noun per skill
    std::vector<std::string> nouns = kNouns;
    for (std::size_t i = nouns.size(); i > 1; --i) std::swap(nouns[i - 1], nouns[rng.below(i)]);

    std::set<std::string> taken_instructions;
    std::set<std::set<Primitive>> taken_chains;

    for (int t = 0; t < cfg.n_train; ++t) {
        std::vector<Primitive> chain;
        for (int attempt = 0;; ++attempt) {
            chain = random_chain(rng);
            if (t > 0 && rng.uniform() < cfg.overlap_prob) {
                const auto& prev = stream.train.back().chain;
                Primitive shared = prev[rng.below(prev.size())];
                if (!contains(chain, shared)) chain[rng.below(chain.size())] = shared;
            }
            if (taken_chains.insert(chain_set(chain)).second) break;
            if (attempt > 200) throw NumericError("skillgen: chain space exhausted");
        }
        SkillSpec spec;
        spec.skill_id = t;
        spec.chain = chain;
        spec.train_episodes = cfg.train_episodes;
        spec.eval_episodes = cfg.eval_episodes;
        spec.name = skill_name(t, chain, nouns[t]);
        spec.instructions = make_paraphrases(chain, nouns[t], cfg.paraphrases, rng, taken_instructions);
        stream.train.push_back(std::move(spec));
    }

    for (int k = 0; k < cfg.n_holdout; ++k) {
        const SkillSpec& source = stream.train[rng.below(stream.train.size())];
        std::vector<Primitive> chain = source.chain;
        if (chain.size() > 1 && rng.uniform() < 0.5) {
            chain.erase(chain.begin() + static_cast<std::ptrdiff_t>(rng.below(chain.size())));
        }
        const int id = cfg.n_train + k;
        SkillSpec spec;
        spec.skill_id = id;
        spec.chain = chain;
        spec.train_episodes = cfg.train_episodes;
        spec.eval_episodes = cfg.eval_episodes;
        spec.name = skill_name(id, chain, nouns[id]);
        spec.instructions = make_paraphrases(chain, nouns[id], cfg.paraphrases, rng, taken_instructions);
        stream.holdout.push_back(std::move(spec));
    }
    return stream;
}

Mat relatedness_matrix(const SkillStream& stream) {
    const int n = stream.total_skills();
    Mat rel(n, n);
    std::vector<std::set<Primitive>> sets;
    sets.reserve(n);
    for (int i = 0; i < n; ++i) sets.push_back(chain_set(stream.spec_at(i).chain));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            std::vector<Primitive> common;
            std::set_intersection(sets[i].begin(), sets[i].end(), sets[j].begin(), sets[j].end(),
                                  std::back_inserter(common));
            const double denom = static_cast<double>(std::min(sets[i].size(), sets[j].size()));
            rel(i, j) = static_cast<double>(common.size()) / denom;
        }
    }
    return rel;
}

std::vector<int> instruction_tokens(const std::string& text) {
    std::vector<int> out;
    std::string word;
    auto flush = [&] {
        if (word.size() >= 3 && static_cast<int>(out.size()) < episode_format::kInstrTokens) {
            const std::uint64_t hash = fnv1a(word);
            out.push_back(tokens::kInstrLo +
                          static_cast<int>(hash % (tokens::kInstrHi - tokens::kInstrLo + 1)));
        }
        word.clear();
    };
    for (unsigned char ch : text) {
        if (std::isalnum(ch)) {
            word.push_back(static_cast<char>(std::tolower(ch)));
        } else {
            flush();
        }
    }
    flush();
    while (static_cast<int>(out.size()) < episode_format::kInstrTokens) out.push_back(tokens::kPad);
    return out;
}

std::vector<SkillEpisode> render_episodes(const SkillSpec& spec, int count, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "episodes", static_cast<std::uint64_t>(spec.skill_id)));
    std::vector<SkillEpisode> out;
    out.reserve(count);
    for (int e = 0; e < count; ++e) {
        const int idx = static_cast<int>(rng.below(spec.instructions.size()));
        const int len = 4 + static_cast<int>(rng.below(5));
        std::vector<int> window(kWindow, tokens::kPad);
        for (int i = kWindow - len; i < kWindow; ++i) {
            window[i] = tokens::kDataLo + static_cast<int>(rng.below(tokens::kDataSpan));
        }
        std::vector<int> target = apply_chain(spec.chain, window);
        SkillEpisode se;
        se.instruction_index = idx;
        se.ep = make_window_episode(instruction_tokens(spec.instructions[idx]), window, target);
        out.push_back(std::move(se));
    }
    return out;
}

namespace {

nlohmann::json spec_to_json(const SkillSpec& s) {
    nlohmann::json chain = nlohmann::json::array();
    for (const Primitive& p : s.chain) {
        chain.push_back({{"kind", kind_tag(p.kind)}, {"param", p.param}});
    }
    return {{"skill_id", s.skill_id},
            {"name", s.name},
            {"chain", chain},
            {"instructions", s.instructions},
            {"train_episodes", s.train_episodes},
            {"eval_episodes", s.eval_episodes}};
}

SkillSpec spec_from_json(const nlohmann::json& j) {
    SkillSpec s;
    s.skill_id = j.at("skill_id").get<int>();
    s.name = j.at("name").get<std::string>();
    for (const auto& pj : j.at("chain")) {
        s.chain.push_back({kind_from_tag(pj.at("kind").get<std::string>()), pj.at("param").get<int>()});
    }
    s.instructions = j.at("instructions").get<std::vector<std::string>>();
    s.train_episodes = j.at("train_episodes").get<int>();
    s.eval_episodes = j.at("eval_episodes").get<int>();
    return s;
}

} // namespace

void save_stream(const SkillStream& stream, const std::string& path) {
    nlohmann::json j;
    j["seed"] = stream.seed;
    j["config"] = {{"n_train", stream.config.n_train},
                   {"n_holdout", stream.config.n_holdout},
                   {"overlap_prob", stream.config.overlap_prob},
                   {"paraphrases", stream.config.paraphrases},
                   {"train_episodes", stream.config.train_episodes},
                   {"eval_episodes", stream.config.eval_episodes}};
    j["train"] = nlohmann::json::array();
    for (const SkillSpec& s : stream.train) j["train"].push_back(spec_to_json(s));
    j["holdout"] = nlohmann::json::array();
    for (const SkillSpec& s : stream.holdout) j["holdout"].push_back(spec_to_json(s));

    std::ofstream out(path);
    if (!out) throw IoError("save_stream: cannot write " + path);
    out << j.dump(2) << "\n";
}

SkillStream load_stream(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_stream: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_stream: bad JSON in " + path + ": " + e.what());
    }
    try {
        SkillStream stream;
        stream.seed = j.at("seed").get<std::uint64_t>();
        const auto& cj = j.at("config");
        stream.config.n_train = cj.at("n_train").get<int>();
        stream.config.n_holdout = cj.at("n_holdout").get<int>();
        stream.config.overlap_prob = cj.at("overlap_prob").get<double>();
        stream.config.paraphrases = cj.at("paraphrases").get<int>();
        stream.config.train_episodes = cj.at("train_episodes").get<int>();
        stream.config.eval_episodes = cj.at("eval_episodes").get<int>();
        for (const auto& sj : j.at("train")) stream.train.push_back(spec_from_json(sj));
        for (const auto& sj : j.at("holdout")) stream.holdout.push_back(spec_from_json(sj));
        return stream;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("load_stream: missing field in " + path + ": " + e.what());
    }
}

} // namespace lifelora
