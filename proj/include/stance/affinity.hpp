#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stance/corpus.hpp"

namespace stance::affinity {

inline constexpr std::size_t kMaxN = 3;
inline constexpr std::size_t kDefaultMinCount = 2;

/// N-grams are keyed by their tokens joined with single spaces.
std::string ngram_key(const std::vector<std::string>& tokens, std::size_t pos, std::size_t n);
std::vector<std::string> split_key(std::string_view key);
std::size_t ngram_order(std::string_view key);

/// Per-domain occurrence counts of all 1-, 2- and 3-grams (sliding window,
/// n-grams touching a sentinel skipped).
class NgramTable {
public:
    NgramTable(std::vector<std::string> domains, std::size_t min_count);

    static NgramTable build(const corpus::Corpus& corpus, std::size_t min_count = kDefaultMinCount);

    void add_document(const std::vector<std::string>& tokens, std::size_t domain);
    /// Count-merge of another table over the same registry.
    void merge(const NgramTable& other);

    const std::vector<std::string>& domains() const { return domains_; }
    std::size_t num_domains() const { return domains_.size(); }
    std::size_t min_count() const { return min_count_; }
    std::size_t domain_index(std::string_view domain) const;
    const std::vector<std::uint64_t>& domain_totals() const { return domain_totals_; }

    std::uint64_t count(std::string_view ngram, std::size_t domain) const;
    std::uint64_t total(std::string_view ngram) const;
    bool retained(std::string_view ngram) const { return total(ngram) >= min_count_ && total(ngram) > 0; }

    /// Raw per-domain counts (size N) or nullptr when the n-gram never occurred.
    const std::vector<std::uint64_t>* counts(std::string_view ngram) const;

    /// Every n-gram with at least one occurrence, sorted.
    std::vector<std::string> all_ngrams() const;
    std::vector<std::string> retained_ngrams() const;

    /// rho(w, S) = P(S|w) * (1 - H(S|w) / ln N), natural logs, 0 ln 0 = 0.
    double rho(std::string_view ngram, std::size_t domain) const;
    double rho(std::string_view ngram, std::string_view domain) const { return rho(ngram, domain_index(domain)); }

    /// rho(w, S) - rho(w, T).
    double mask_score(std::string_view ngram, std::size_t source, std::size_t target) const;
    double mask_score(std::string_view ngram, std::string_view source, std::string_view target) const {
        return mask_score(ngram, domain_index(source), domain_index(target));
    }

    /// Retained n-grams ranked by rho toward `domain` (desc), then total count
    /// (desc), then key; at most `limit` entries, only those with rho > 0.
    std::vector<std::string> top_by_rho(std::size_t domain, std::size_t limit) const;

private:
    std::vector<std::string> domains_;
    std::size_t min_count_;
    std::unordered_map<std::string, std::vector<std::uint64_t>> counts_;
    std::vector<std::uint64_t> domain_totals_;
};

std::string mask_token(std::size_t index);  // "<mask_1>", ...

struct Slot {
    std::size_t position = 0;             // start offset in the original tokens
    std::vector<std::string> original;    // masked n-gram
    double score = 0.0;
};

/// Token sequence with masked spans replaced by <mask_1>, <mask_2>, ... in
/// reading order; slots are ordered by position and never overlap.
struct MaskedText {
    std::vector<std::string> tokens;
    std::vector<Slot> slots;
    std::string source_example_id;

    /// Substitutes every slot's original n-gram back into its sentinel.
    std::vector<std::string> restore() const;
};

using SpanScorer = std::function<double(std::string_view ngram)>;

/// Greedy span masking: candidates scoring above `tau` are taken by
/// descending score, then descending n, then leftmost position; overlapping
/// candidates are skipped and selection stops once the next span would push
/// the masked-token fraction past `max_mask_frac`.
MaskedText corrupt_with(const NgramTable& table, const corpus::Example& x, const SpanScorer& scorer,
                        double tau, double max_mask_frac);

/// Cross-domain corruption scored by mask(w, S, T).
MaskedText corrupt(const NgramTable& table, const corpus::Example& x, std::string_view source,
                   std::string_view target, double tau_mask, double max_mask_frac);

/// TSV: ngram, n, count per domain, rho per domain, mask(S,T); sorted by
/// mask descending then n-gram.
void write_tsv(std::ostream& out, const NgramTable& table, std::string_view source, std::string_view target);

}  // namespace stance::affinity
