#include "stance/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace stance::corpus {

namespace {

bool is_word_byte(unsigned char c) {
    return std::isalnum(c) || c == '_' || c >= 0x80;
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_mask_sentinel(std::string_view t) {
    if (!starts_with(t, "<mask_") || t.size() < 8 || t.back() != '>') return false;
    for (std::size_t i = 6; i + 1 < t.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(t[i]))) return false;
    return true;
}

std::optional<Stance> canonical_stance(std::string_view name) {
    const std::string up = [&] {
        std::string s(name);
        for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return s;
    }();
    if (up == "FAVOR") return Stance::Favor;
    if (up == "AGAINST") return Stance::Against;
    if (up == "NONE") return Stance::None;
    return std::nullopt;
}

}  // namespace

bool is_sentinel(std::string_view token) {
    return token == kUrlToken || token == kUserToken || token == kSepToken || is_mask_sentinel(token);
}

std::vector<std::string> normalize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j == i) break;
        const std::string chunk = lower_ascii(text.substr(i, j - i));
        i = j;

        if (starts_with(chunk, "http://") || starts_with(chunk, "https://") || starts_with(chunk, "www.")) {
            out.emplace_back(kUrlToken);
            continue;
        }
        // Only the text-level sentinels pass through; <sep> and <mask_k> are
        // reserved for featurization and corruption and get split like text.
        if (chunk == kUrlToken || chunk == kUserToken) {
            out.push_back(chunk);
            continue;
        }
        std::string word;
        auto flush = [&] {
            if (!word.empty()) out.push_back(std::move(word));
            word.clear();
        };
        for (std::size_t k = 0; k < chunk.size(); ++k) {
            const auto c = static_cast<unsigned char>(chunk[k]);
            if (c == '@' && word.empty() && k + 1 < chunk.size() &&
                is_word_byte(static_cast<unsigned char>(chunk[k + 1]))) {
                while (k + 1 < chunk.size() && is_word_byte(static_cast<unsigned char>(chunk[k + 1]))) ++k;
                out.emplace_back(kUserToken);
            } else if (is_word_byte(c)) {
                word.push_back(static_cast<char>(c));
            } else {
                flush();
                out.emplace_back(1, static_cast<char>(c));
            }
        }
        flush();
    }
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.append(sep);
        out.append(tokens[i]);
    }
    return out;
}

// ---- Corpus ---------------------------------------------------------------

Corpus::Corpus() : label_set_{Stance::Favor, Stance::Against} {}

Corpus::Corpus(std::vector<std::string> domains) : Corpus() {
    for (auto& d : domains) register_domain(d);
}

void Corpus::register_domain(const std::string& d) {
    if (d.empty()) throw ValidationError("empty domain identifier");
    if (!has_domain(d)) domains_.push_back(d);
}

bool Corpus::has_domain(std::string_view d) const {
    return std::find(domains_.begin(), domains_.end(), d) != domains_.end();
}

std::size_t Corpus::domain_index(std::string_view d) const {
    auto it = std::find(domains_.begin(), domains_.end(), d);
    if (it == domains_.end()) throw ValidationError("unknown domain '" + std::string(d) + "'");
    return static_cast<std::size_t>(it - domains_.begin());
}

std::size_t Corpus::label_index(Stance s) const {
    auto it = std::find(label_set_.begin(), label_set_.end(), s);
    if (it == label_set_.end())
        throw ValidationError("label " + std::string(stance_name(s)) + " not in label set");
    return static_cast<std::size_t>(it - label_set_.begin());
}

void Corpus::add(Example ex) {
    if (ex.tokens.empty()) throw ValidationError("example '" + ex.id + "' has no tokens");
    if (ex.id.empty()) throw ValidationError("example without id");
    if (ids_.count(ex.id)) throw ValidationError("duplicate example id '" + ex.id + "'");
    for (const auto& t : ex.tokens)
        if (t == kSepToken || is_mask_sentinel(t))
            throw ValidationError("example '" + ex.id + "' contains reserved token '" + t + "'");
    register_domain(ex.domain);
    if (ex.stance == Stance::None &&
        std::find(label_set_.begin(), label_set_.end(), Stance::None) == label_set_.end())
        label_set_.push_back(Stance::None);
    ids_.emplace(ex.id, examples_.size());
    examples_.push_back(std::move(ex));
}

Corpus Corpus::filtered(const std::function<bool(const Example&)>& keep) const {
    Corpus out(domains_);
    out.label_set_ = label_set_;
    for (const auto& ex : examples_)
        if (keep(ex)) out.add(ex);
    return out;
}

std::uint64_t Corpus::fingerprint() const {
    std::uint64_t h = 0x5eed;
    auto feed = [&h](std::string_view s) { h = hash_bytes(s, h); };
    for (const auto& ex : examples_) {
        feed(ex.id);
        feed(join_tokens(ex.tokens, "\x1f"));
        feed(join_tokens(ex.target, "\x1f"));
        feed(stance_name(ex.stance));
        feed(ex.domain);
    }
    return h;
}

// ---- JSONL ----------------------------------------------------------------

LabelMap parse_label_map(std::string_view spec) {
    LabelMap map;
    std::string item;
    std::stringstream ss{std::string(spec)};
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
            throw ValidationError("bad label alias '" + item + "', expected alias=LABEL");
        std::string to = item.substr(eq + 1);
        if (!canonical_stance(to)) throw ValidationError("label alias target '" + to + "' is not FAVOR/AGAINST/NONE");
        map[lower_ascii(item.substr(0, eq))] = to;
    }
    return map;
}

Corpus read_jsonl(std::istream& in, const LabelMap& label_map) {
    LabelMap lowered;
    for (const auto& [k, v] : label_map) lowered[lower_ascii(k)] = v;

    Corpus corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError("malformed JSON at line " + std::to_string(lineno) + ": " + e.what());
        }
        auto field = [&](const char* name) -> std::string {
            if (!rec.is_object() || !rec.contains(name) || !rec[name].is_string())
                throw ValidationError("malformed record at line " + std::to_string(lineno) +
                                      ": missing string field '" + name + "'");
            return rec[name].get<std::string>();
        };
        Example ex;
        ex.raw_text = field("text");
        const std::string target = field("target");
        const std::string stance = field("stance");
        ex.domain = field("domain");
        ex.id = rec.contains("id") && rec["id"].is_string() ? rec["id"].get<std::string>()
                                                              : ex.domain + "-" + std::to_string(lineno);

        std::optional<Stance> label = canonical_stance(stance);
        if (!label) {
            auto it = lowered.find(lower_ascii(stance));
            if (it != lowered.end()) label = canonical_stance(it->second);
        }
        if (!label)
            throw ValidationError("unknown label '" + stance + "' at line " + std::to_string(lineno));
        ex.stance = *label;
        ex.tokens = normalize(ex.raw_text);
        ex.target = normalize(target);
        if (ex.tokens.empty())
            throw ValidationError("empty text after normalization at line " + std::to_string(lineno));
        try {
            corpus.add(std::move(ex));
        } catch (const ValidationError& e) {
            throw ValidationError(std::string(e.what()) + " at line " + std::to_string(lineno));
        }
    }
    return corpus;
}

Corpus load_jsonl(const std::string& path, const LabelMap& label_map) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    return read_jsonl(in, label_map);
}

void write_jsonl(std::ostream& out, const Corpus& corpus, std::optional<std::string_view> split) {
    for (const auto& ex : corpus.examples()) {
        nlohmann::ordered_json rec;
        rec["id"] = ex.id;
        rec["text"] = ex.raw_text;
        rec["target"] = join_tokens(ex.target);
        rec["stance"] = stance_name(ex.stance);
        rec["domain"] = ex.domain;
        if (split) rec["split"] = *split;
        out << rec.dump() << '\n';
    }
}

void save_jsonl(const std::string& path, const Corpus& corpus, std::optional<std::string_view> split) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    write_jsonl(out, corpus, split);
}

// ---- Splits ---------------------------------------------------------------

void SplitSpec::validate() const {
    if (source_domain.empty() || target_domain.empty())
        throw ValidationError("split requires source and target domains");
    if (source_domain == target_domain) throw ValidationError("source and target domain must differ");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in [0, 1]");
    if (!(holdout > 0.0 && holdout < 1.0)) throw ValidationError("holdout must lie in (0, 1)");
}

Split make_split(const Corpus& corpus, const SplitSpec& spec) {
    spec.validate();
    auto pool_of = [&](const std::string& d) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            const auto& ex = corpus.examples()[i];
            if (ex.domain == d && (spec.include_none || ex.stance != Stance::None)) idx.push_back(i);
        }
        return idx;
    };
    std::vector<std::size_t> src = pool_of(spec.source_domain);
    std::vector<std::size_t> tgt = pool_of(spec.target_domain);
    if (src.size() < kMinDomainExamples || tgt.size() < kMinDomainExamples)
        throw ValidationError("insufficient examples for split: source '" + spec.source_domain + "' has " +
                              std::to_string(src.size()) + ", target '" + spec.target_domain + "' has " +
                              std::to_string(tgt.size()) + " (need >= " + std::to_string(kMinDomainExamples) +
                              " each)");

    Rng holdout_rng(derive_seed(spec.seed, {1}));
    holdout_rng.shuffle(src);
    holdout_rng.shuffle(tgt);
    const auto n_test = [&](std::size_t n) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.holdout + 1e-9));
    };
    const std::size_t src_test = n_test(src.size());
    const std::size_t tgt_test = n_test(tgt.size());

    // Pool permutation is independent of gamma so smaller gammas are prefixes.
    std::vector<std::size_t> pool(tgt.begin() + static_cast<std::ptrdiff_t>(tgt_test), tgt.end());
    std::sort(pool.begin(), pool.end());
    Rng pool_rng(derive_seed(spec.seed, {2}));
    pool_rng.shuffle(pool);
    const auto n_gamma =
        static_cast<std::size_t>(std::floor(spec.gamma * static_cast<double>(pool.size()) + 1e-9));

    std::vector<char> in_train(corpus.size(), 0), in_src_test(corpus.size(), 0), in_tgt_test(corpus.size(), 0);
    for (std::size_t i = 0; i < src.size(); ++i) (i < src_test ? in_src_test : in_train)[src[i]] = 1;
    for (std::size_t i = 0; i < tgt_test; ++i) in_tgt_test[tgt[i]] = 1;
    for (std::size_t i = 0; i < n_gamma; ++i) in_train[pool[i]] = 1;

    Split split{Corpus(corpus.domains()), Corpus(corpus.domains()), Corpus(corpus.domains())};
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& ex = corpus.examples()[i];
        if (in_train[i]) split.train.add(ex);
        if (in_src_test[i]) split.test_source.add(ex);
        if (in_tgt_test[i]) split.test_target.add(ex);
    }
    return split;
}

// ---- Synthetic benchmark -------------------------------------------------

void SynthConfig::validate() const {
    if (docs_per_domain == 0 || domain_marker_vocab_size < 2 || stance_marker_vocab_size == 0 ||
        shared_vocab_size == 0 || tokens_min == 0 || domain_markers_min == 0)
        throw ValidationError("synth config counts must be positive (domain marker vocab >= 2)");
    if (tokens_max < tokens_min || domain_markers_max < domain_markers_min)
        throw ValidationError("synth config ranges must satisfy min <= max");
    if (domain_names.size() != 2 || target_phrases.size() != 2 || stance_marker_rates.size() != 2 ||
        shortcut_rates.size() != 2 || foreign_marker_rates.size() != 2)
        throw ValidationError("synth config describes exactly two domains");
    if (!domain_doc_counts.empty() &&
        (domain_doc_counts.size() != 2 || std::find(domain_doc_counts.begin(), domain_doc_counts.end(), 0u) !=
                                              domain_doc_counts.end()))
        throw ValidationError("domain_doc_counts needs two positive entries");
    if (domain_names[0] == domain_names[1]) throw ValidationError("synth domain names must differ");
    auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!rate_ok(marker_injection_rate) || !std::all_of(stance_marker_rates.begin(), stance_marker_rates.end(), rate_ok) ||
        !std::all_of(shortcut_rates.begin(), shortcut_rates.end(), rate_ok) ||
        !std::all_of(foreign_marker_rates.begin(), foreign_marker_rates.end(), rate_ok))
        throw ValidationError("synth config rates must lie in [0, 1]");
    if (!(marker_zipf >= 0.0)) throw ValidationError("marker_zipf must be non-negative");
}

Corpus synth_benchmark(const SynthConfig& config) {
    config.validate();
    Corpus corpus(config.domain_names);

    const std::size_t half = config.domain_marker_vocab_size / 2;
    std::vector<double> zipf(half);
    for (std::size_t r = 0; r < half; ++r) zipf[r] = 1.0 / std::pow(static_cast<double>(r + 1), config.marker_zipf);

    const char* stance_prefix[2] = {"yea", "nay"};

    for (std::size_t d = 0; d < 2; ++d) {
        Rng rng(derive_seed(config.seed, {0x5717, d}));
        const std::string domain_prefix = std::string(1, static_cast<char>('a' + d)) + "m";

        const std::size_t n_docs = config.domain_doc_counts.empty() ? config.docs_per_domain : config.domain_doc_counts[d];
        std::vector<Stance> labels(n_docs);
        for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (i % 2 == 0) ? Stance::Favor : Stance::Against;
        rng.shuffle(labels);

        for (std::size_t i = 0; i < n_docs; ++i) {
            const Stance y = labels[i];
            const int yi = static_cast<int>(y);
            const bool cued = rng.bernoulli(config.marker_injection_rate);

            std::vector<std::vector<std::string>> units;
            const auto length = static_cast<std::size_t>(rng.between(
                static_cast<std::int64_t>(config.tokens_min), static_cast<std::int64_t>(config.tokens_max)));
            const auto n_markers = static_cast<std::size_t>(rng.between(
                static_cast<std::int64_t>(config.domain_markers_min), static_cast<std::int64_t>(config.domain_markers_max)));

            for (std::size_t m = 0; m < n_markers; ++m) {
                const double foreign = config.foreign_marker_rates[d];
                if (foreign > 0.0 && rng.bernoulli(foreign)) {
                    const std::size_t id = rng.below(2) * half + rng.categorical(zipf);
                    units.push_back({std::string(1, static_cast<char>('a' + (1 - d))) + "m" + std::to_string(id)});
                    continue;
                }
                std::size_t side = (cued && rng.bernoulli(config.shortcut_rates[d])) ? static_cast<std::size_t>(yi)
                                                                                   : static_cast<std::size_t>(rng.below(2));
                const std::size_t id = side * half + rng.categorical(zipf);
                units.push_back({domain_prefix + std::to_string(id)});
            }
            if (cued && rng.bernoulli(config.stance_marker_rates[d])) {
                const auto id = rng.below(config.stance_marker_vocab_size);
                units.push_back({stance_prefix[yi] + std::to_string(id)});
            }
            while (units.size() < length) units.push_back({"w" + std::to_string(rng.below(config.shared_vocab_size))});
            rng.shuffle(units);

            Example ex;
            for (auto& u : units)
                for (auto& t : u) ex.tokens.push_back(t);
            ex.id = config.domain_names[d] + "-" + std::to_string(i);
            ex.raw_text = join_tokens(ex.tokens);
            ex.target = normalize(config.target_phrases[d]);
            ex.stance = y;
            ex.domain = config.domain_names[d];
            corpus.add(std::move(ex));
        }
    }
    return corpus;
}

}  // namespace stance::corpus
