#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stance/common.hpp"

namespace stance::corpus {

inline constexpr std::string_view kUrlToken = "<url>";
inline constexpr std::string_view kUserToken = "<user>";
inline constexpr std::string_view kSepToken = "<sep>";

/// True for placeholder tokens that never count as lexical content:
/// <url>, <user>, <sep> and indexed mask sentinels <mask_k>.
bool is_sentinel(std::string_view token);

/// Lowercase, split punctuation into single-character tokens, and replace
/// URLs and @-mentions with sentinels. Reserved sentinels in the input are
/// split like ordinary text. Idempotent on its own output.
std::vector<std::string> normalize(std::string_view text);

std::string join_tokens(const std::vector<std::string>& tokens, std::string_view sep = " ");

struct Example {
    std::string id;
    std::string raw_text;
    std::vector<std::string> tokens;
    std::vector<std::string> target;
    Stance stance = Stance::Favor;
    std::string domain;
};

/// Ordered collection of examples with a domain registry and label set.
/// Read-only once built; safe to share between readers.
class Corpus {
public:
    Corpus();
    explicit Corpus(std::vector<std::string> domains);

    /// Validates the example (nonempty tokens, unique id) and registers its
    /// domain if unseen.
    void add(Example ex);

    const std::vector<Example>& examples() const { return examples_; }
    const std::vector<std::string>& domains() const { return domains_; }
    const std::vector<Stance>& label_set() const { return label_set_; }
    std::size_t size() const { return examples_.size(); }
    bool empty() const { return examples_.empty(); }

    bool has_domain(std::string_view d) const;
    std::size_t domain_index(std::string_view d) const;
    void register_domain(const std::string& d);

    /// Index of a stance in label_set(); throws if absent.
    std::size_t label_index(Stance s) const;

    /// Copy holding the examples matching `keep`, with the same registry.
    Corpus filtered(const std::function<bool(const Example&)>& keep) const;

    /// Content hash over ids, tokens, targets, labels and domains in order.
    std::uint64_t fingerprint() const;

private:
    std::vector<Example> examples_;
    std::vector<std::string> domains_;
    std::vector<Stance> label_set_;
    std::unordered_map<std::string, std::size_t> ids_;
};

/// Alias table for stance labels, keys compared case-insensitively.
/// Canonical names FAVOR / AGAINST / NONE are always accepted.
using LabelMap = std::map<std::string, std::string>;

LabelMap parse_label_map(std::string_view spec);  // "pro=FAVOR,anti=AGAINST"

Corpus read_jsonl(std::istream& in, const LabelMap& label_map = {});
Corpus load_jsonl(const std::string& path, const LabelMap& label_map = {});

/// One object per line; `split` is written as an extra field when given.
void write_jsonl(std::ostream& out, const Corpus& corpus,
                 std::optional<std::string_view> split = std::nullopt);
void save_jsonl(const std::string& path, const Corpus& corpus,
                std::optional<std::string_view> split = std::nullopt);

struct SplitSpec {
    std::string source_domain;
    std::string target_domain;
    double gamma = 0.30;
    std::uint64_t seed = 0;
    double holdout = 0.20;
    bool include_none = false;

    void validate() const;
};

struct Split {
    Corpus train;
    Corpus test_source;
    Corpus test_target;
};

/// Per-domain holdout first, then a nested gamma-prefix of a fixed seeded
/// permutation of the remaining target pool.
Split make_split(const Corpus& corpus, const SplitSpec& spec);

inline constexpr std::size_t kMinDomainExamples = 10;

struct SynthConfig {
    std::size_t docs_per_domain = 2000;
    // Per-domain document counts; empty means docs_per_domain for each.
    std::vector<std::size_t> domain_doc_counts;
    std::size_t domain_marker_vocab_size = 120;
    std::size_t stance_marker_vocab_size = 8;
    std::size_t shared_vocab_size = 400;
    std::size_t tokens_min = 10;
    std::size_t tokens_max = 18;
    // Probability a document carries stance cues at all; 0 makes labels
    // independent of tokens.
    double marker_injection_rate = 0.9;
    // Per domain: chance a cued document contains a shared stance marker.
    std::vector<double> stance_marker_rates = {0.55, 0.85};
    // Per domain: chance a cued document's domain markers are drawn from the
    // half of the domain vocabulary tied to its stance (a domain-local cue).
    std::vector<double> shortcut_rates = {1.0, 0.0};
    // Per domain: chance each domain-marker slot is drawn (stance-free) from
    // the other domain's marker vocabulary.
    std::vector<double> foreign_marker_rates = {0.0, 0.0};
    std::size_t domain_markers_min = 2;
    std::size_t domain_markers_max = 3;
    double marker_zipf = 1.0;
    std::vector<std::string> domain_names = {"domain_a", "domain_b"};
    std::vector<std::string> target_phrases = {"vaccine mandates", "face masks"};
    std::uint64_t seed = 7;

    void validate() const;
};

/// Two-domain benchmark: shared stance markers, disjoint domain markers.
Corpus synth_benchmark(const SynthConfig& config);

}  // namespace stance::corpus
