#include "xaln/tags.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "xaln/rng.hpp"

namespace xaln::tags {

namespace {

// Fixed English stop-word list, versioned with the repository so results are
// reproducible.
const char* kStopwords[] = {
    "a", "about", "above", "after", "again", "against", "all", "am", "an",
    "and", "any", "are", "as", "at", "be", "because", "been", "before",
    "being", "below", "between", "both", "but", "by", "can", "cannot",
    "could", "did", "do", "does", "doing", "down", "during", "each", "few",
    "for", "from", "further", "had", "has", "have", "having", "he", "her",
    "here", "hers", "herself", "him", "himself", "his", "how", "i", "if",
    "in", "into", "is", "it", "its", "itself", "just", "me", "more", "most",
    "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own",
    "same", "she", "should", "so", "some", "such", "than", "that", "the",
    "their", "theirs", "them", "themselves", "then", "there", "these",
    "they", "this", "those", "through", "to", "too", "under", "until", "up",
    "us", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "you", "your", "yours",
    "yourself", "yourselves",
};

// Words the suffix rules would mangle.
const char* kSingularExceptions[] = {
    "blues", "news", "species", "lossless",
};

const std::unordered_set<std::string>& stopword_set() {
    static const std::unordered_set<std::string> s(std::begin(kStopwords),
                                                   std::end(kStopwords));
    return s;
}

const std::unordered_set<std::string>& exception_set() {
    static const std::unordered_set<std::string> s(
        std::begin(kSingularExceptions), std::end(kSingularExceptions));
    return s;
}

bool ends_with(const std::string& s, const char* suffix) {
    std::size_t n = std::strlen(suffix);
    return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

}  // namespace

const std::vector<std::string>& stopword_list() {
    static const std::vector<std::string> v(std::begin(kStopwords),
                                            std::end(kStopwords));
    return v;
}

bool is_stopword(const std::string& token) {
    return stopword_set().count(token) != 0;
}

std::string normalize_token(const std::string& raw) {
    std::size_t b = 0, e = raw.size();
    while (b < e && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(raw[e - 1]))) --e;
    std::string out;
    out.reserve(e - b);
    for (std::size_t i = b; i < e; ++i) {
        out.push_back(static_cast<char>(
            std::tolower(static_cast<unsigned char>(raw[i]))));
    }
    return out;
}

std::string singularize(const std::string& token) {
    if (token.size() < 3 || exception_set().count(token)) return token;
    if (ends_with(token, "ss")) return token;
    if (ends_with(token, "ies") && token.size() >= 5) {
        return token.substr(0, token.size() - 3) + "y";
    }
    if ((ends_with(token, "sses") || ends_with(token, "xes") ||
         ends_with(token, "ches") || ends_with(token, "shes") ||
         ends_with(token, "zes")) &&
        token.size() >= 5) {
        return token.substr(0, token.size() - 2);
    }
    // Plain trailing s, except -us/-is words (chorus, analysis, ...).
    if (ends_with(token, "s") && !ends_with(token, "us") &&
        !ends_with(token, "is")) {
        return token.substr(0, token.size() - 1);
    }
    return token;
}

std::int64_t Vocabulary::id(const std::string& t) const {
    auto it = index.find(t);
    if (it == index.end()) {
        throw ContractViolation("token '" + t + "' is not in the vocabulary");
    }
    return it->second;
}

nlohmann::json Vocabulary::to_json() const {
    return {{"tokens", tokens}, {"doc_freq", doc_freq}, {"corpus_size", corpus_size}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
    Vocabulary v;
    v.tokens = j.at("tokens").get<std::vector<std::string>>();
    v.doc_freq = j.at("doc_freq").get<std::vector<std::int64_t>>();
    v.corpus_size = j.at("corpus_size").get<std::int64_t>();
    if (v.tokens.size() != v.doc_freq.size()) {
        throw ConfigError("vocabulary tokens/doc_freq length mismatch");
    }
    for (std::size_t i = 0; i < v.tokens.size(); ++i) {
        v.index[v.tokens[i]] = static_cast<std::int64_t>(i);
    }
    return v;
}

namespace {

// Shared normalization pipeline without the truncation/error policy.
std::vector<std::string> clean_tokens(const std::vector<std::string>& raw,
                                      const Vocabulary* vocab) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& r : raw) {
        std::string t = normalize_token(r);
        if (t.empty() || is_stopword(t)) continue;
        t = singularize(t);
        if (is_stopword(t)) continue;
        if (vocab && !vocab->contains(t)) continue;
        if (seen.insert(t).second) out.push_back(t);
    }
    return out;
}

}  // namespace

TagSet preprocess_tags(const std::vector<std::string>& raw,
                       const Vocabulary* vocab) {
    if (raw.empty()) throw InvalidInputError("empty raw tag list");
    std::vector<std::string> tokens = clean_tokens(raw, vocab);
    if (tokens.empty()) {
        throw EmptyTagSetError("all tags were filtered out");
    }
    if (static_cast<int>(tokens.size()) > kMaxTags) {
        if (vocab) {
            // Keep the kMaxTags most document-frequent, ties lexicographic,
            // preserving the original relative order of the survivors.
            std::vector<std::string> ranked = tokens;
            std::sort(ranked.begin(), ranked.end(),
                      [&](const std::string& a, const std::string& b) {
                          auto fa = vocab->doc_freq[static_cast<std::size_t>(vocab->id(a))];
                          auto fb = vocab->doc_freq[static_cast<std::size_t>(vocab->id(b))];
                          if (fa != fb) return fa > fb;
                          return a < b;
                      });
            std::unordered_set<std::string> keep(ranked.begin(),
                                                 ranked.begin() + kMaxTags);
            std::vector<std::string> kept;
            for (auto& t : tokens) {
                if (keep.count(t)) kept.push_back(std::move(t));
            }
            tokens = std::move(kept);
        } else {
            tokens.resize(kMaxTags);
        }
    }
    return TagSet{std::move(tokens)};
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                            std::int64_t max_size) {
    if (docs.empty()) throw InvalidInputError("empty corpus");
    if (max_size < 1) throw ContractViolation("vocabulary size must be >= 1");

    std::unordered_map<std::string, std::int64_t> df;
    for (const auto& doc : docs) {
        for (const auto& t : clean_tokens(doc, nullptr)) df[t] += 1;
    }
    auto corpus = static_cast<std::int64_t>(docs.size());

    std::vector<std::pair<std::string, std::int64_t>> survivors;
    for (auto& [tok, n] : df) {
        // Strict inequality, in exact integer arithmetic: drop iff
        // n / corpus > 7 / 10.
        if (n * kDocFreqCutDen > corpus * kDocFreqCutNum) continue;
        survivors.emplace_back(tok, n);
    }
    std::sort(survivors.begin(), survivors.end(),
              [](const auto& a, const auto& b) {
                  if (a.second != b.second) return a.second > b.second;
                  return a.first < b.first;
              });
    if (static_cast<std::int64_t>(survivors.size()) < max_size) {
        std::fprintf(stderr,
                     "warning: vocabulary has only %zu tokens (requested %lld)\n",
                     survivors.size(), static_cast<long long>(max_size));
    } else {
        survivors.resize(static_cast<std::size_t>(max_size));
    }

    Vocabulary v;
    v.corpus_size = corpus;
    for (auto& [tok, n] : survivors) {
        v.index[tok] = static_cast<std::int64_t>(v.tokens.size());
        v.tokens.push_back(tok);
        v.doc_freq.push_back(n);
    }
    return v;
}

Tensor cbow_init_table(std::int64_t vocab_size, std::int64_t dim,
                       std::uint64_t seed) {
    RngStream rng(seed, stream::cbow);
    Tensor t = Tensor::zeros({vocab_size, dim});
    float* p = t.data();
    float inv = 1.0f / static_cast<float>(dim);
    for (std::int64_t i = 0; i < vocab_size * dim; ++i) {
        p[i] = static_cast<float>(rng.next_double() - 0.5) * inv;
    }
    return t;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Context mean h, scores against target + negatives, per-sample logistic
// errors. Shared by cbow_loss and cbow_step so the finite-difference check on
// cbow_loss covers the update path.
struct CbowForward {
    std::vector<double> h;
    std::vector<std::int64_t> samples;  // target first, then negatives
    std::vector<double> err;            // sigma(score) - label
    double loss = 0;
};

CbowForward cbow_forward(const std::vector<double>& w_in,
                         const std::vector<double>& w_out, std::int64_t dim,
                         const std::vector<std::int64_t>& context,
                         std::int64_t target,
                         const std::vector<std::int64_t>& negatives) {
    if (context.empty()) throw ContractViolation("cbow context must be non-empty");
    CbowForward f;
    f.h.assign(static_cast<std::size_t>(dim), 0.0);
    for (auto c : context) {
        const double* row = w_in.data() + c * dim;
        for (std::int64_t j = 0; j < dim; ++j) f.h[static_cast<std::size_t>(j)] += row[j];
    }
    double inv = 1.0 / static_cast<double>(context.size());
    for (auto& v : f.h) v *= inv;

    f.samples.push_back(target);
    for (auto n : negatives) f.samples.push_back(n);
    for (std::size_t s = 0; s < f.samples.size(); ++s) {
        const double* row = w_out.data() + f.samples[s] * dim;
        double score = 0;
        for (std::int64_t j = 0; j < dim; ++j) score += f.h[static_cast<std::size_t>(j)] * row[j];
        double label = s == 0 ? 1.0 : 0.0;
        double p = sigmoid(score);
        f.err.push_back(p - label);
        f.loss += s == 0 ? -std::log(std::max(p, 1e-12))
                         : -std::log(std::max(1.0 - p, 1e-12));
    }
    return f;
}

}  // namespace

double cbow_loss(const std::vector<double>& w_in, const std::vector<double>& w_out,
                 std::int64_t dim, const std::vector<std::int64_t>& context,
                 std::int64_t target, const std::vector<std::int64_t>& negatives) {
    return cbow_forward(w_in, w_out, dim, context, target, negatives).loss;
}

double cbow_step(std::vector<double>& w_in, std::vector<double>& w_out,
                 std::int64_t dim, const std::vector<std::int64_t>& context,
                 std::int64_t target, const std::vector<std::int64_t>& negatives,
                 double lr) {
    CbowForward f = cbow_forward(w_in, w_out, dim, context, target, negatives);
    std::vector<double> grad_h(static_cast<std::size_t>(dim), 0.0);
    for (std::size_t s = 0; s < f.samples.size(); ++s) {
        double* row = w_out.data() + f.samples[s] * dim;
        double e = f.err[s];
        for (std::int64_t j = 0; j < dim; ++j) {
            grad_h[static_cast<std::size_t>(j)] += e * row[j];
            row[j] -= lr * e * f.h[static_cast<std::size_t>(j)];
        }
    }
    double inv = 1.0 / static_cast<double>(context.size());
    for (auto c : context) {
        double* row = w_in.data() + c * dim;
        for (std::int64_t j = 0; j < dim; ++j) {
            row[j] -= lr * grad_h[static_cast<std::size_t>(j)] * inv;
        }
    }
    return f.loss;
}

WordEmbeddingTable train_cbow(const std::vector<std::vector<std::string>>& docs,
                              const Vocabulary& vocab, const CbowConfig& cfg) {
    if (cfg.dim < 1) throw ContractViolation("embedding dimension must be >= 1");
    if (vocab.size() < 1) throw ContractViolation("vocabulary is empty");

    std::int64_t c = vocab.size(), f = cfg.dim;
    Tensor init = cbow_init_table(c, f, cfg.seed);
    std::vector<double> w_in(static_cast<std::size_t>(c * f));
    for (std::int64_t i = 0; i < c * f; ++i) w_in[static_cast<std::size_t>(i)] = init.data()[i];
    std::vector<double> w_out(static_cast<std::size_t>(c * f), 0.0);

    // Tokenized documents (vocabulary filter applied, dedup).
    std::vector<std::vector<std::int64_t>> token_docs;
    std::int64_t unigram_total = 0;
    std::vector<std::int64_t> counts(static_cast<std::size_t>(c), 0);
    for (const auto& doc : docs) {
        std::vector<std::int64_t> ids;
        for (const auto& t : clean_tokens(doc, &vocab)) ids.push_back(vocab.id(t));
        if (!ids.empty()) {
            for (auto id : ids) {
                counts[static_cast<std::size_t>(id)] += 1;
                ++unigram_total;
            }
            token_docs.push_back(std::move(ids));
        }
    }

    // Negative sampling from the unigram^0.75 distribution.
    std::vector<double> cdf(static_cast<std::size_t>(c), 0.0);
    double z = 0;
    for (std::int64_t i = 0; i < c; ++i) {
        z += std::pow(static_cast<double>(counts[static_cast<std::size_t>(i)]), 0.75);
        cdf[static_cast<std::size_t>(i)] = z;
    }
    RngStream rng(cfg.seed, stream::cbow + 1000);
    auto sample_negative = [&]() -> std::int64_t {
        if (z <= 0) return 0;
        double u = rng.next_double() * z;
        auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        return static_cast<std::int64_t>(it - cdf.begin());
    };

    std::int64_t total_targets = 0;
    for (const auto& d : token_docs) {
        if (d.size() >= 2) total_targets += static_cast<std::int64_t>(d.size());
    }
    std::int64_t total_steps = std::max<std::int64_t>(1, total_targets * cfg.epochs);

    std::int64_t step = 0;
    std::vector<std::int64_t> context;
    std::vector<std::int64_t> negatives;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& d : token_docs) {
            if (d.size() < 2) continue;  // no context for a lone tag
            for (std::size_t i = 0; i < d.size(); ++i) {
                context.clear();
                for (std::size_t j = 0; j < d.size(); ++j) {
                    if (j != i) context.push_back(d[j]);
                }
                negatives.clear();
                while (static_cast<int>(negatives.size()) < cfg.negatives) {
                    std::int64_t neg = sample_negative();
                    if (neg != d[i]) negatives.push_back(neg);
                }
                double progress = static_cast<double>(step) / static_cast<double>(total_steps);
                double lr = std::max(cfg.min_lr, cfg.lr * (1.0 - progress));
                cbow_step(w_in, w_out, f, context, d[i], negatives, lr);
                ++step;
            }
        }
    }

    WordEmbeddingTable table;
    table.dim = f;
    table.table = Tensor::zeros({c, f});
    for (std::int64_t i = 0; i < c * f; ++i) {
        table.table.data()[i] = static_cast<float>(w_in[static_cast<std::size_t>(i)]);
    }
    ensure_finite(table.table, "train_cbow");
    return table;
}

EmbeddedTags embed_tags(const TagSet& ts, const Vocabulary& vocab,
                        const WordEmbeddingTable& table) {
    if (ts.tags.empty()) throw EmptyTagSetError("cannot embed an empty tag set");
    if (static_cast<int>(ts.tags.size()) > kMaxTags) {
        throw ContractViolation("tag set exceeds the maximum of 10 tags");
    }
    if (table.table.shape[0] != vocab.size() || table.table.shape[1] != table.dim) {
        throw ShapeError("embedding table does not match vocabulary");
    }
    EmbeddedTags out;
    out.rows = Tensor::zeros({kMaxTags, table.dim});
    out.mask.assign(kMaxTags, 0);
    out.valid = static_cast<int>(ts.tags.size());
    for (int i = 0; i < out.valid; ++i) {
        std::int64_t id = vocab.id(ts.tags[static_cast<std::size_t>(i)]);
        std::memcpy(out.rows.data() + i * table.dim,
                    table.table.data() + id * table.dim,
                    static_cast<std::size_t>(table.dim) * sizeof(float));
        out.mask[static_cast<std::size_t>(i)] = 1;
    }
    return out;
}

}  // namespace xaln::tags
