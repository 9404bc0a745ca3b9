#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lifelora/mat.hpp"

namespace lifelora {

struct EmbeddingConfig {
    int dim = 512;
    int ngram_min = 2;
    int ngram_max = 4;
    std::uint64_t seed = 0x1f2e3d4c5b6a7988ULL;
    bool normalize = true;
};

struct InstructionEmbedding {
    std::vector<double> vector;
    std::uint64_t source_digest = 0;
};

// Instruction-to-vector source. The default is a hashed character n-gram
// embedding; a file of precomputed vectors can be swapped in without any
// caller changes.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual InstructionEmbedding embed(const std::string& text) const = 0;
    virtual int dim() const = 0;
    virtual std::string digest() const = 0; // stable id of provider + config
};

// Signed hashed n-gram counts over the lowercased, whitespace-normalized
// text, L2-normalized. Deterministic in (text, config), bit for bit.
class HashedNgramProvider final : public EmbeddingProvider {
public:
    explicit HashedNgramProvider(EmbeddingConfig cfg = {});

    InstructionEmbedding embed(const std::string& text) const override;
    int dim() const override { return cfg_.dim; }
    std::string digest() const override;
    const EmbeddingConfig& config() const { return cfg_; }

private:
    EmbeddingConfig cfg_;
};

// JSON document mapping instruction string -> array of dim reals. The loader
// checks dimensions agree and every vector is unit length.
class PrecomputedProvider final : public EmbeddingProvider {
public:
    static PrecomputedProvider load(const std::string& path);

    InstructionEmbedding embed(const std::string& text) const override;
    int dim() const override { return dim_; }
    std::string digest() const override { return digest_; }

private:
    PrecomputedProvider() = default;
    int dim_ = 0;
    std::string digest_;
    std::vector<std::pair<std::string, std::vector<double>>> entries_;
};

// Row i is embed(texts[i]); throws UsageError naming the index of any empty
// text.
Mat embed_corpus(const EmbeddingProvider& provider, const std::vector<std::string>& texts);

} // namespace lifelora
