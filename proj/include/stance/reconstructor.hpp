#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "stance/affinity.hpp"
#include "stance/corpus.hpp"

namespace stance::reconstructor {

inline constexpr std::size_t kDefaultOrientationSize = 25;
inline constexpr std::size_t kShortlistSize = 200;

/// Lexical stand-in for a domain orientation vector: the domain's top-m
/// n-grams ranked by rho.
struct Orientation {
    std::string domain;
    std::vector<std::string> representative_ngrams;
};

Orientation make_orientation(const affinity::NgramTable& table, std::string_view domain,
                             std::size_t m = kDefaultOrientationSize);

enum class GeneratorKind { NgramInfiller, LexiconSwapper };
enum class Sampling { Argmax, Sample };

struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::NgramInfiller;
    Sampling sampling = Sampling::Sample;
    double temperature = 1.0;
    std::uint64_t seed = 0;
};

std::string_view to_string(GeneratorKind k);
std::string_view to_string(Sampling s);
GeneratorKind parse_generator_kind(std::string_view s);
Sampling parse_sampling(std::string_view s);

/// Per-domain trigram model with add-alpha smoothing and backoff to the
/// bigram and unigram distributions when a context was never observed.
class InfillerModel {
public:
    using TokenId = std::uint32_t;
    static constexpr TokenId kBoundary = 0;  // "<s>", context only
    static constexpr TokenId kUnknown = 0xffffffffu;

    InfillerModel(std::vector<std::string> domains, double alpha);

    void add_document(const std::vector<std::string>& tokens, std::size_t domain);

    TokenId id(std::string_view token) const;
    const std::string& token(TokenId id) const { return vocab_[id]; }
    /// Number of predictable token types (excludes the boundary symbol).
    std::size_t vocab_size() const { return vocab_.size() - 1; }
    double alpha() const { return alpha_; }
    const std::vector<std::string>& domains() const { return domains_; }
    std::size_t domain_index(std::string_view d) const;

    /// P(w | u v) in `domain`; sums to 1 over the vocabulary for any context.
    double prob(std::size_t domain, TokenId u, TokenId v, TokenId w) const;

    std::uint64_t unigram_count(std::size_t domain, TokenId w) const;
    std::uint64_t unigram_total(std::size_t domain) const { return tables_[domain].total; }

    /// Canonical JSON form (entries sorted by token strings).
    nlohmann::ordered_json to_json() const;

private:
    struct DomainCounts {
        std::vector<std::uint64_t> unigram;
        std::uint64_t total = 0;
        std::unordered_map<std::uint64_t, std::uint64_t> bigram, bigram_ctx;
        std::unordered_map<std::uint64_t, std::uint64_t> trigram, trigram_ctx;
    };
    TokenId intern(const std::string& token);

    std::vector<std::string> domains_;
    double alpha_;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, TokenId> ids_;
    std::vector<DomainCounts> tables_;
};

/// Smoothed probabilities for a count vector: (c_i + alpha) / (sum + alpha * n).
std::vector<double> add_alpha(const std::vector<std::uint64_t>& counts, double alpha);

struct InfillerOptions {
    double alpha = 0.1;
    double tau_mask_train = 0.2;
    double max_mask_frac = 0.5;
    std::size_t orientation_size = kDefaultOrientationSize;
    std::size_t min_count = affinity::kDefaultMinCount;
    /// Cap on documents per domain used by the self-reconstruction check
    /// (0 = every training document).
    std::size_t sanity_limit = 0;
};

struct InfillerReport {
    std::size_t documents = 0;
    std::size_t slots = 0;
    std::size_t tokens_total = 0;
    std::size_t tokens_correct = 0;
    double fill_accuracy() const {
        return tokens_total ? static_cast<double>(tokens_correct) / static_cast<double>(tokens_total) : 0.0;
    }
};

/// Builds the per-domain model, then masks each training document by its
/// own-domain affinity rho(w, S) > tau_mask_train and reconstructs it with
/// its own orientation, reporting token-level fill accuracy.
InfillerModel train_infiller(const corpus::Corpus& train, const affinity::NgramTable& table,
                             const InfillerOptions& options, InfillerReport* report = nullptr);

struct Fill {
    std::size_t output_position = 0;      // start in the counterfactual tokens
    std::vector<std::string> tokens;      // inserted span
    std::vector<std::string> original;    // span it replaced
};

struct Counterfactual {
    corpus::Example example;
    std::string parent_id;
    std::vector<Fill> fills;
};

/// Fills masked slots to move text toward an orientation's domain.
class Generator {
public:
    Generator(GeneratorSpec spec, const InfillerModel& model, const affinity::NgramTable& table);

    const GeneratorSpec& spec() const { return spec_; }

    /// Slots are filled left to right. `k` numbers the draw for the id suffix.
    Counterfactual generate(const affinity::MaskedText& masked, const Orientation& orientation,
                            const corpus::Example& parent, std::size_t k, Rng& rng) const;

private:
    struct Candidate {
        std::string key;
        std::vector<InfillerModel::TokenId> ids;
        std::vector<std::string> tokens;
        double log_rho;
    };
    const std::vector<Candidate>& shortlist_for(std::size_t domain) const;
    std::vector<std::string> fallback_fill(std::size_t domain) const;

    GeneratorSpec spec_;
    const InfillerModel* model_;
    const affinity::NgramTable* table_;
    std::vector<std::vector<Candidate>> shortlists_;  // per table domain
    std::vector<std::string> best_unigram_;           // per table domain
};

struct PassOptions {
    std::size_t iterations = 1;  // I
    double tau_mask = 0.2;
    double max_mask_frac = 0.5;
};

struct PassResult {
    corpus::Corpus corpus;
    std::vector<Counterfactual> records;
    std::size_t parents = 0;
    std::size_t skipped_unmasked = 0;
};

/// For each source-domain example, corrupt toward `target` and generate up to
/// `iterations` distinct counterfactuals. Parents with no masked span yield
/// nothing. Labels are copied verbatim.
PassResult counterfactual_pass(const corpus::Corpus& train, const affinity::NgramTable& table,
                               const Generator& generator, const Orientation& orientation,
                               std::string_view source, std::string_view target, const PassOptions& options);

/// Largest rho toward `domain` over retained n-grams fully inside `span`
/// (0 when none is retained).
double max_span_rho(const affinity::NgramTable& table, const std::vector<std::string>& span, std::size_t domain);

}  // namespace stance::reconstructor
