#include "stance/affinity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace stance::affinity {

std::string ngram_key(const std::vector<std::string>& tokens, std::size_t pos, std::size_t n) {
    std::string key = tokens[pos];
    for (std::size_t k = 1; k < n; ++k) {
        key.push_back(' ');
        key.append(tokens[pos + k]);
    }
    return key;
}

std::vector<std::string> split_key(std::string_view key) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= key.size()) {
        std::size_t sp = key.find(' ', start);
        if (sp == std::string_view::npos) sp = key.size();
        out.emplace_back(key.substr(start, sp - start));
        start = sp + 1;
    }
    return out;
}

std::size_t ngram_order(std::string_view key) {
    return static_cast<std::size_t>(std::count(key.begin(), key.end(), ' ')) + 1;
}

NgramTable::NgramTable(std::vector<std::string> domains, std::size_t min_count)
    : domains_(std::move(domains)), min_count_(min_count), domain_totals_(domains_.size(), 0) {
    if (domains_.size() < 2) throw ValidationError("affinity requires >= 2 domains");
}

NgramTable NgramTable::build(const corpus::Corpus& corpus, std::size_t min_count) {
    NgramTable table(corpus.domains(), min_count);
    for (const auto& ex : corpus.examples()) table.add_document(ex.tokens, corpus.domain_index(ex.domain));
    return table;
}

void NgramTable::add_document(const std::vector<std::string>& tokens, std::size_t domain) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (corpus::is_sentinel(tokens[i])) continue;
        ++domain_totals_[domain];
        for (std::size_t n = 1; n <= kMaxN && i + n <= tokens.size(); ++n) {
            if (corpus::is_sentinel(tokens[i + n - 1])) break;
            auto& c = counts_[ngram_key(tokens, i, n)];
            if (c.empty()) c.assign(domains_.size(), 0);
            ++c[domain];
        }
    }
}

void NgramTable::merge(const NgramTable& other) {
    if (other.domains_ != domains_) throw Error("cannot merge n-gram tables over different registries");
    for (const auto& [k, v] : other.counts_) {
        auto& c = counts_[k];
        if (c.empty()) c.assign(domains_.size(), 0);
        for (std::size_t d = 0; d < v.size(); ++d) c[d] += v[d];
    }
    for (std::size_t d = 0; d < domains_.size(); ++d) domain_totals_[d] += other.domain_totals_[d];
}

std::size_t NgramTable::domain_index(std::string_view domain) const {
    auto it = std::find(domains_.begin(), domains_.end(), domain);
    if (it == domains_.end()) throw ValidationError("unknown domain '" + std::string(domain) + "'");
    return static_cast<std::size_t>(it - domains_.begin());
}

const std::vector<std::uint64_t>* NgramTable::counts(std::string_view ngram) const {
    auto it = counts_.find(std::string(ngram));
    return it == counts_.end() ? nullptr : &it->second;
}

std::uint64_t NgramTable::count(std::string_view ngram, std::size_t domain) const {
    const auto* c = counts(ngram);
    return c ? (*c)[domain] : 0;
}

std::uint64_t NgramTable::total(std::string_view ngram) const {
    const auto* c = counts(ngram);
    if (!c) return 0;
    std::uint64_t t = 0;
    for (auto v : *c) t += v;
    return t;
}

std::vector<std::string> NgramTable::all_ngrams() const {
    std::vector<std::string> keys;
    keys.reserve(counts_.size());
    for (const auto& kv : counts_) keys.push_back(kv.first);
    std::sort(keys.begin(), keys.end());
    return keys;
}

std::vector<std::string> NgramTable::retained_ngrams() const {
    std::vector<std::string> keys;
    for (const auto& kv : counts_)
        if (retained(kv.first)) keys.push_back(kv.first);
    std::sort(keys.begin(), keys.end());
    return keys;
}

double NgramTable::rho(std::string_view ngram, std::size_t domain) const {
    if (domains_.size() < 2) throw Error("affinity requires >= 2 domains");
    if (domain >= domains_.size()) throw ValidationError("domain index out of range");
    const auto* c = counts(ngram);
    std::uint64_t total = 0;
    if (c)
        for (auto v : *c) total += v;
    if (total == 0 || total < min_count_)
        throw Error("n-gram '" + std::string(ngram) + "' is below min_count");
    const double t = static_cast<double>(total);
    double entropy = 0.0;
    for (auto v : *c) {
        if (v == 0) continue;
        const double p = static_cast<double>(v) / t;
        entropy -= p * std::log(p);
    }
    const double p_s = static_cast<double>((*c)[domain]) / t;
    const double factor = std::clamp(1.0 - entropy / std::log(static_cast<double>(domains_.size())), 0.0, 1.0);
    return p_s * factor;
}

double NgramTable::mask_score(std::string_view ngram, std::size_t source, std::size_t target) const {
    if (source == target) {
        rho(ngram, source);  // still validates retention
        return 0.0;
    }
    return rho(ngram, source) - rho(ngram, target);
}

std::vector<std::string> NgramTable::top_by_rho(std::size_t domain, std::size_t limit) const {
    struct Ranked {
        double rho;
        std::uint64_t total;
        const std::string* key;
    };
    std::vector<Ranked> ranked;
    for (const auto& [k, v] : counts_) {
        if (!retained(k)) continue;
        const double r = rho(k, domain);
        if (r <= 0.0) continue;
        std::uint64_t t = 0;
        for (auto x : v) t += x;
        ranked.push_back({r, t, &k});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.rho != b.rho) return a.rho > b.rho;
        if (a.total != b.total) return a.total > b.total;
        return *a.key < *b.key;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) out.push_back(*ranked[i].key);
    return out;
}

std::string mask_token(std::size_t index) { return "<mask_" + std::to_string(index) + ">"; }

std::vector<std::string> MaskedText::restore() const {
    std::vector<std::string> out;
    std::size_t next_slot = 0;
    for (const auto& t : tokens) {
        if (next_slot < slots.size() && t == mask_token(next_slot + 1)) {
            for (const auto& o : slots[next_slot].original) out.push_back(o);
            ++next_slot;
        } else {
            out.push_back(t);
        }
    }
    return out;
}

MaskedText corrupt_with(const NgramTable& table, const corpus::Example& x, const SpanScorer& scorer, double tau,
                        double max_mask_frac) {
    struct Candidate {
        std::size_t pos, n;
        double score;
    };
    const auto& toks = x.tokens;
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        for (std::size_t n = 1; n <= kMaxN && i + n <= toks.size(); ++n) {
            if (corpus::is_sentinel(toks[i + n - 1])) break;
            if (corpus::is_sentinel(toks[i])) break;
            const std::string key = ngram_key(toks, i, n);
            if (!table.retained(key)) continue;
            const double s = scorer(key);
            if (s > tau) cands.push_back({i, n, s});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.n != b.n) return a.n > b.n;
        return a.pos < b.pos;
    });

    const double budget = max_mask_frac * static_cast<double>(toks.size());
    std::vector<char> taken(toks.size(), 0);
    std::size_t masked = 0;
    std::vector<Candidate> chosen;
    for (const auto& c : cands) {
        bool overlap = false;
        for (std::size_t k = c.pos; k < c.pos + c.n; ++k) overlap = overlap || taken[k];
        if (overlap) continue;
        if (static_cast<double>(masked + c.n) > budget + 1e-12) break;
        for (std::size_t k = c.pos; k < c.pos + c.n; ++k) taken[k] = 1;
        masked += c.n;
        chosen.push_back(c);
    }
    std::sort(chosen.begin(), chosen.end(), [](const Candidate& a, const Candidate& b) { return a.pos < b.pos; });

    MaskedText out;
    out.source_example_id = x.id;
    std::size_t i = 0, next = 0;
    while (i < toks.size()) {
        if (next < chosen.size() && chosen[next].pos == i) {
            Slot slot;
            slot.position = i;
            slot.score = chosen[next].score;
            slot.original.assign(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                 toks.begin() + static_cast<std::ptrdiff_t>(i + chosen[next].n));
            out.slots.push_back(std::move(slot));
            out.tokens.push_back(mask_token(out.slots.size()));
            i += chosen[next].n;
            ++next;
        } else {
            out.tokens.push_back(toks[i]);
            ++i;
        }
    }
    return out;
}

MaskedText corrupt(const NgramTable& table, const corpus::Example& x, std::string_view source,
                   std::string_view target, double tau_mask, double max_mask_frac) {
    const std::size_t s = table.domain_index(source);
    const std::size_t t = table.domain_index(target);
    return corrupt_with(
        table, x, [&](std::string_view w) { return table.mask_score(w, s, t); }, tau_mask, max_mask_frac);
}

void write_tsv(std::ostream& out, const NgramTable& table, std::string_view source, std::string_view target) {
    const std::size_t s = table.domain_index(source);
    const std::size_t t = table.domain_index(target);
    struct Row {
        std::string key;
        double mask;
    };
    std::vector<Row> rows;
    for (auto& k : table.retained_ngrams()) rows.push_back({k, table.mask_score(k, s, t)});
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.mask > b.mask; });

    out << "ngram\tn";
    for (const auto& d : table.domains()) out << "\tcount:" << d;
    for (const auto& d : table.domains()) out << "\trho:" << d;
    out << "\tmask\n";
    char buf[32];
    for (const auto& r : rows) {
        out << r.key << '\t' << ngram_order(r.key);
        const auto* c = table.counts(r.key);
        for (auto v : *c) out << '\t' << v;
        for (std::size_t d = 0; d < table.num_domains(); ++d) {
            std::snprintf(buf, sizeof buf, "%.9f", table.rho(r.key, d));
            out << '\t' << buf;
        }
        std::snprintf(buf, sizeof buf, "%.9f", r.mask);
        out << '\t' << buf << '\n';
    }
}

}  // namespace stance::affinity
