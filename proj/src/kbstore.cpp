#include "lifelora/kbstore.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace lifelora {

namespace {

constexpr char kMagic[4] = {'A', 'B', 'K', '1'};

struct BlobRef {
    const Mat* mat;
    std::uint64_t offset;
};

std::uint64_t blob_bytes(const Mat& m) { return static_cast<std::uint64_t>(m.size()) * 4; }

void append_f32(std::string& out, const Mat& m) {
    for (int i = 0; i < m.size(); ++i) {
        const float f = static_cast<float>(m.data()[i]);
        char bytes[4];
        std::memcpy(bytes, &f, 4);
        out.append(bytes, 4);
    }
}

Mat read_f32(const std::string& section, std::uint64_t offset, int rows, int cols) {
    Mat m(rows, cols);
    const char* p = section.data() + offset;
    for (int i = 0; i < m.size(); ++i) {
        float f;
        std::memcpy(&f, p + static_cast<std::size_t>(i) * 4, 4);
        m.data()[i] = static_cast<double>(f);
    }
    return m;
}

void validate_record(const KnowledgeBase& kb, const SkillRecord& r) {
    const ModelFingerprint& fp = kb.fingerprint;
    if (r.adapter.layers() != fp.layers) {
        throw UsageError("kbstore: record '" + r.name + "' has " +
                         std::to_string(r.adapter.layers()) + " layers, fingerprint says " +
                         std::to_string(fp.layers));
    }
    if (r.adapter.gate_decisions.size() != r.adapter.pairs.size()) {
        throw UsageError("kbstore: record '" + r.name + "' has unfrozen gates");
    }
    for (const AdapterPair& p : r.adapter.pairs) {
        if (p.rank != fp.rank || p.a.rows() != fp.rank || p.a.cols() != fp.hidden ||
            p.b.rows() != fp.hidden || p.b.cols() != fp.rank) {
            throw UsageError("kbstore: record '" + r.name + "' adapter shapes do not match fingerprint");
        }
    }
    if (r.subspace.dim != fp.embed_dim) {
        throw UsageError("kbstore: record '" + r.name + "' subspace dim " +
                         std::to_string(r.subspace.dim) + " does not match fingerprint dim " +
                         std::to_string(fp.embed_dim));
    }
    for (const SkillRecord& other : kb.records) {
        if (other.skill_id == r.skill_id) {
            throw UsageError("kbstore: duplicate skill id " + std::to_string(r.skill_id));
        }
    }
}

} // namespace

std::string ModelFingerprint::str() const {
    std::ostringstream os;
    os << "V=" << vocab << ",h=" << hidden << ",L=" << layers << ",r=" << rank
       << ",d=" << embed_dim;
    return os.str();
}

KnowledgeBase append_record(const KnowledgeBase& kb, SkillRecord record) {
    validate_record(kb, record);
    KnowledgeBase out = kb;
    out.records.push_back(std::move(record));
    return out;
}

void save_kb(const KnowledgeBase& kb, const std::string& path) {
    for (const SkillRecord& r : kb.records) {
        KnowledgeBase probe = kb;
        probe.records.clear();
        validate_record(probe, r);
    }

    // canonical blob order: per record a0,b0,gate0,a1,... then basis
    nlohmann::json records = nlohmann::json::array();
    std::vector<BlobRef> blobs;
    std::uint64_t offset = 0;
    for (const SkillRecord& r : kb.records) {
        nlohmann::json meta;
        meta["skill_id"] = r.skill_id;
        meta["name"] = r.name;
        meta["instruction_digest"] = r.instruction_digest;
        meta["sr_gt"] = r.sr_gt;
        meta["rank"] = r.adapter.pairs.empty() ? 0 : r.adapter.pairs[0].rank;
        meta["gate_decisions"] = r.adapter.gate_decisions;
        meta["subspace_rank"] = r.subspace.rank;

        nlohmann::json blob_index;
        auto add_blob = [&](const std::string& name, const Mat& m) {
            blob_index[name] = {{"shape", {m.rows(), m.cols()}},
                                {"offset", offset},
                                {"length", blob_bytes(m)}};
            blobs.push_back({&m, offset});
            offset += blob_bytes(m);
        };
        for (std::size_t l = 0; l < r.adapter.pairs.size(); ++l) {
            add_blob("a" + std::to_string(l), r.adapter.pairs[l].a);
            add_blob("b" + std::to_string(l), r.adapter.pairs[l].b);
            add_blob("gate" + std::to_string(l), r.adapter.gate_logits[l]);
        }
        add_blob("basis", r.subspace.basis);
        meta["blobs"] = std::move(blob_index);
        records.push_back(std::move(meta));
    }

    nlohmann::json envelope;
    envelope["version"] = kb.version;
    envelope["fingerprint"] = {{"vocab", kb.fingerprint.vocab},
                               {"hidden", kb.fingerprint.hidden},
                               {"layers", kb.fingerprint.layers},
                               {"rank", kb.fingerprint.rank},
                               {"embed_dim", kb.fingerprint.embed_dim}};
    envelope["embedding_digest"] = kb.embedding_digest;
    envelope["records"] = std::move(records);

    const std::string env_str = envelope.dump();
    std::string body;
    body.reserve(12 + env_str.size() + offset);
    body.append(kMagic, 4);
    const std::uint64_t env_len = env_str.size();
    for (int i = 0; i < 8; ++i) body.push_back(static_cast<char>((env_len >> (8 * i)) & 0xff));
    body += env_str;
    for (const BlobRef& b : blobs) append_f32(body, *b.mat);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("save_kb: cannot write " + tmp);
        out.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!out) throw IoError("save_kb: short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw IoError("save_kb: cannot rename " + tmp + " to " + path);
    }
}

KnowledgeBase load_kb(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_kb: cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (data.size() < 12 || std::memcmp(data.data(), kMagic, 4) != 0) {
        throw FormatError("load_kb: " + path + " is not a knowledge base (bad magic)");
    }
    std::uint64_t env_len = 0;
    for (int i = 0; i < 8; ++i) {
        env_len |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[4 + i])) << (8 * i);
    }
    if (12 + env_len > data.size()) throw CorruptionError("load_kb: envelope extends past end of file");

    nlohmann::json envelope;
    try {
        envelope = nlohmann::json::parse(data.substr(12, env_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_kb: bad envelope JSON: ") + e.what());
    }

    const std::string section = data.substr(12 + env_len);
    KnowledgeBase kb;
    try {
        kb.version = envelope.at("version").get<int>();
        if (kb.version != 1) {
            throw FormatError("load_kb: unsupported version " + std::to_string(kb.version));
        }
        const auto& fj = envelope.at("fingerprint");
        kb.fingerprint.vocab = fj.at("vocab").get<int>();
        kb.fingerprint.hidden = fj.at("hidden").get<int>();
        kb.fingerprint.layers = fj.at("layers").get<int>();
        kb.fingerprint.rank = fj.at("rank").get<int>();
        kb.fingerprint.embed_dim = fj.at("embed_dim").get<int>();
        kb.embedding_digest = envelope.at("embedding_digest").get<std::string>();

        for (const auto& meta : envelope.at("records")) {
            SkillRecord r;
            r.skill_id = meta.at("skill_id").get<int>();
            r.name = meta.at("name").get<std::string>();
            r.instruction_digest = meta.at("instruction_digest").get<std::string>();
            r.sr_gt = meta.at("sr_gt").get<double>();
            const int rank = meta.at("rank").get<int>();
            r.adapter.skill_id = r.skill_id;
            r.adapter.gate_decisions = meta.at("gate_decisions").get<std::vector<int>>();

            auto fetch = [&](const std::string& name) {
                const auto& bj = meta.at("blobs").at(name);
                const int rows = bj.at("shape").at(0).get<int>();
                const int cols = bj.at("shape").at(1).get<int>();
                const std::uint64_t off = bj.at("offset").get<std::uint64_t>();
                const std::uint64_t len = bj.at("length").get<std::uint64_t>();
                if (len != static_cast<std::uint64_t>(rows) * cols * 4) {
                    throw CorruptionError("load_kb: blob '" + name + "' length disagrees with shape");
                }
                if (off + len > section.size()) {
                    throw CorruptionError("load_kb: blob '" + name + "' extends past end of file");
                }
                return read_f32(section, off, rows, cols);
            };

            for (int l = 0; l < kb.fingerprint.layers; ++l) {
                AdapterPair p;
                p.rank = rank;
                p.a = fetch("a" + std::to_string(l));
                p.b = fetch("b" + std::to_string(l));
                r.adapter.pairs.push_back(std::move(p));
                r.adapter.gate_logits.push_back(fetch("gate" + std::to_string(l)));
            }
            r.subspace.skill_id = r.skill_id;
            r.subspace.basis = fetch("basis");
            r.subspace.dim = r.subspace.basis.rows();
            r.subspace.rank = meta.at("subspace_rank").get<int>();
            if (r.subspace.rank != r.subspace.basis.cols()) {
                throw CorruptionError("load_kb: subspace rank disagrees with basis shape");
            }
            kb.records.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_kb: envelope missing field: ") + e.what());
    }
    return kb;
}

void check_fingerprint(const KnowledgeBase& kb, const ModelFingerprint& expected) {
    if (!(kb.fingerprint == expected)) {
        throw CompatError("knowledge base fingerprint " + kb.fingerprint.str() +
                          " does not match session fingerprint " + expected.str());
    }
}

} // namespace lifelora
