#pragma once

#include <string>
#include <vector>

#include "lifelora/adapters.hpp"
#include "lifelora/subspace.hpp"

namespace lifelora {

struct ModelFingerprint {
    int vocab = 0;
    int hidden = 0;
    int layers = 0;
    int rank = 0;
    int embed_dim = 0;

    bool operator==(const ModelFingerprint&) const = default;
    std::string str() const;
};

// Everything one learned skill leaves behind: its adapter, its semantic
// subspace basis, and the success rate measured right after it was learned.
struct SkillRecord {
    int skill_id = -1;
    std::string name;
    std::string instruction_digest;
    SkillAdapter adapter;
    SubspaceProjection subspace;
    double sr_gt = -1.0; // mean success right after learning; -1 = never measured
};

struct KnowledgeBase {
    int version = 1;
    std::string embedding_digest;
    ModelFingerprint fingerprint;
    std::vector<SkillRecord> records;
};

// Value semantics: returns the extended base, the input is untouched.
// Duplicate skill ids and shape mismatches are usage errors.
KnowledgeBase append_record(const KnowledgeBase& kb, SkillRecord record);

// Single-file format: 4-byte magic "ABK1", an 8-byte little-endian envelope
// length, the JSON envelope, then a section of little-endian f32 matrix
// blobs at envelope-declared offsets (relative to the section start).
// Writes are atomic (temp file + rename). Byte-identical across
// save/load/save round trips.
void save_kb(const KnowledgeBase& kb, const std::string& path);
KnowledgeBase load_kb(const std::string& path);

// CompatError naming both fingerprints when they differ.
void check_fingerprint(const KnowledgeBase& kb, const ModelFingerprint& expected);

} // namespace lifelora
