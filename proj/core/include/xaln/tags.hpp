#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "xaln/tensor.hpp"

namespace xaln::tags {

inline constexpr int kMaxTags = 10;            // T_w
inline constexpr int kDefaultVocabSize = 1000;  // C
// Tokens present in more than this fraction of documents are dropped.
inline constexpr int kDocFreqCutNum = 7;
inline constexpr int kDocFreqCutDen = 10;

struct EmptyTagSetError : Error {
    explicit EmptyTagSetError(const std::string& d) : Error("empty-tagset", d) {}
};

// Preprocessed, deduplicated tags in first-occurrence order, at most kMaxTags.
struct TagSet {
    std::vector<std::string> tags;
};

struct Vocabulary {
    std::vector<std::string> tokens;      // index order
    std::vector<std::int64_t> doc_freq;   // parallel to tokens
    std::unordered_map<std::string, std::int64_t> index;
    std::int64_t corpus_size = 0;

    bool contains(const std::string& t) const { return index.count(t) != 0; }
    std::int64_t id(const std::string& t) const;
    std::int64_t size() const { return static_cast<std::int64_t>(tokens.size()); }

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json& j);
};

const std::vector<std::string>& stopword_list();
bool is_stopword(const std::string& token);

// Lowercases and trims; returns empty string for all-whitespace input.
std::string normalize_token(const std::string& raw);

// Suffix-rule singularization with an exception list. Idempotent by
// construction: every rule's output is left untouched by a second pass.
std::string singularize(const std::string& token);

// lowercase -> drop stop-words -> singularize -> drop stop-words again ->
// vocabulary filter (when given) -> dedup -> truncate to the 10 most frequent
// by document frequency (requires a vocabulary; without one the first 10
// survive). Throws EmptyTagSetError when nothing survives.
TagSet preprocess_tags(const std::vector<std::string>& raw,
                       const Vocabulary* vocab);

// Normalizes every document, drops tokens in more than 70% of documents and
// keeps the max_size most frequent survivors (ties broken lexicographically).
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                            std::int64_t max_size = kDefaultVocabSize);

struct CbowConfig {
    std::int64_t dim = 128;  // F_w
    int epochs = 15;
    double lr = 0.025;
    double min_lr = 1e-4;
    int negatives = 5;
    std::uint64_t seed = 0;
};

struct WordEmbeddingTable {
    std::int64_t dim = 0;
    Tensor table;  // [C x F_w], frozen after training
};

Tensor cbow_init_table(std::int64_t vocab_size, std::int64_t dim,
                       std::uint64_t seed);

// CBOW with negative sampling over co-occurring tags: for each target tag the
// context is every other tag of the same document (tag sets are unordered, so
// there is no positional window). Documents with fewer than two in-vocabulary
// tags are skipped. Returns the input-vector table.
WordEmbeddingTable train_cbow(const std::vector<std::vector<std::string>>& docs,
                              const Vocabulary& vocab, const CbowConfig& cfg);

// One negative-sampling step on double-precision tables, exposed so its
// gradients can be finite-difference checked. w_in/w_out are [C x F] row
// major. Returns the loss at the pre-update parameters.
double cbow_step(std::vector<double>& w_in, std::vector<double>& w_out,
                 std::int64_t dim, const std::vector<std::int64_t>& context,
                 std::int64_t target, const std::vector<std::int64_t>& negatives,
                 double lr);

// The loss evaluated by cbow_step, without updating anything.
double cbow_loss(const std::vector<double>& w_in, const std::vector<double>& w_out,
                 std::int64_t dim, const std::vector<std::int64_t>& context,
                 std::int64_t target, const std::vector<std::int64_t>& negatives);

// Z_w rows plus validity mask for one example.
struct EmbeddedTags {
    Tensor rows;                     // [kMaxTags x F_w]; zero rows when masked
    std::vector<std::uint8_t> mask;  // kMaxTags entries
    int valid = 0;
};

EmbeddedTags embed_tags(const TagSet& ts, const Vocabulary& vocab,
                        const WordEmbeddingTable& table);

}  // namespace xaln::tags
