#include "lifelora/embed.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lifelora/rng.hpp"

namespace lifelora {

namespace {

// lowercase, trim, collapse whitespace runs to single spaces
std::string canonical_text(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool in_space = true; // swallows leading whitespace
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

} // namespace

HashedNgramProvider::HashedNgramProvider(EmbeddingConfig cfg) : cfg_(cfg) {
    if (cfg_.dim < 1) throw UsageError("embedding: dim must be positive");
    if (cfg_.ngram_min < 1 || cfg_.ngram_max < cfg_.ngram_min) {
        throw UsageError("embedding: bad ngram range");
    }
}

InstructionEmbedding HashedNgramProvider::embed(const std::string& text) const {
    const std::string canon = canonical_text(text);
    if (canon.empty()) throw UsageError("embedding: empty instruction text");

    // sentinel spaces mark word boundaries and keep one-char texts nonzero
    const std::string padded = " " + canon + " ";

    InstructionEmbedding e;
    e.vector.assign(cfg_.dim, 0.0);
    for (int n = cfg_.ngram_min; n <= cfg_.ngram_max; ++n) {
        if (static_cast<std::size_t>(n) > padded.size()) break;
        for (std::size_t i = 0; i + n <= padded.size(); ++i) {
            const std::uint64_t h = fnv1a({padded.data() + i, static_cast<std::size_t>(n)},
                                          cfg_.seed ^ (0x9e37ULL * n));
            const int bucket = static_cast<int>(h % static_cast<std::uint64_t>(cfg_.dim));
            e.vector[bucket] += (h >> 63) ? 1.0 : -1.0;
        }
    }
    if (cfg_.normalize) {
        double nrm = 0.0;
        for (double v : e.vector) nrm += v * v;
        nrm = std::sqrt(nrm);
        if (nrm > 0.0) {
            for (double& v : e.vector) v /= nrm;
        }
    }
    e.source_digest = fnv1a(canon, fnv1a(digest()));
    return e;
}

std::string HashedNgramProvider::digest() const {
    std::ostringstream os;
    os << "ngram:d=" << cfg_.dim << ",n=" << cfg_.ngram_min << "-" << cfg_.ngram_max
       << ",seed=" << cfg_.seed << ",norm=" << (cfg_.normalize ? 1 : 0);
    return os.str();
}

PrecomputedProvider PrecomputedProvider::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("embedding: cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("embedding: bad JSON in " + path + ": " + e.what());
    }
    if (!doc.is_object() || doc.empty()) {
        throw FormatError("embedding: " + path + " must be a non-empty object of text -> vector");
    }

    PrecomputedProvider p;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!it.value().is_array()) throw FormatError("embedding: value for '" + it.key() + "' is not an array");
        std::vector<double> v = it.value().get<std::vector<double>>();
        if (p.dim_ == 0) p.dim_ = static_cast<int>(v.size());
        if (static_cast<int>(v.size()) != p.dim_ || p.dim_ == 0) {
            throw FormatError("embedding: vector for '" + it.key() + "' has length " +
                              std::to_string(v.size()) + ", expected " + std::to_string(p.dim_));
        }
        double nrm = 0.0;
        for (double x : v) nrm += x * x;
        if (std::abs(std::sqrt(nrm) - 1.0) > 1e-6) {
            throw FormatError("embedding: vector for '" + it.key() + "' is not unit length");
        }
        p.entries_.emplace_back(canonical_text(it.key()), std::move(v));
    }
    p.digest_ = "file:" + std::to_string(fnv1a(doc.dump())) + ",d=" + std::to_string(p.dim_);
    return p;
}

InstructionEmbedding PrecomputedProvider::embed(const std::string& text) const {
    const std::string canon = canonical_text(text);
    if (canon.empty()) throw UsageError("embedding: empty instruction text");
    for (const auto& [key, vec] : entries_) {
        if (key == canon) {
            InstructionEmbedding e;
            e.vector = vec;
            e.source_digest = fnv1a(canon, fnv1a(digest_));
            return e;
        }
    }
    throw UsageError("embedding: no precomputed vector for '" + text + "'");
}

Mat embed_corpus(const EmbeddingProvider& provider, const std::vector<std::string>& texts) {
    if (texts.empty()) throw UsageError("embed_corpus: empty corpus");
    Mat x(static_cast<int>(texts.size()), provider.dim());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (canonical_text(texts[i]).empty()) {
            throw UsageError("embed_corpus: text at index " + std::to_string(i) + " is empty");
        }
        InstructionEmbedding e = provider.embed(texts[i]);
        for (int j = 0; j < provider.dim(); ++j) x(static_cast<int>(i), j) = e.vector[j];
    }
    return x;
}

} // namespace lifelora
