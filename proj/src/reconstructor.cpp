#include "stance/reconstructor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace stance::reconstructor {

namespace {

constexpr std::uint64_t kIdBits = 21;
constexpr std::uint64_t kIdMask = (1ULL << kIdBits) - 1;

std::uint64_t key2(std::uint64_t a, std::uint64_t b) { return (a << kIdBits) | b; }
std::uint64_t key3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return (a << (2 * kIdBits)) | (b << kIdBits) | c;
}

std::uint64_t lookup(const std::unordered_map<std::uint64_t, std::uint64_t>& m, std::uint64_t k) {
    auto it = m.find(k);
    return it == m.end() ? 0 : it->second;
}

}  // namespace

Orientation make_orientation(const affinity::NgramTable& table, std::string_view domain, std::size_t m) {
    return Orientation{std::string(domain), table.top_by_rho(table.domain_index(domain), m)};
}

std::string_view to_string(GeneratorKind k) {
    return k == GeneratorKind::NgramInfiller ? "NGRAM_INFILLER" : "LEXICON_SWAPPER";
}
std::string_view to_string(Sampling s) { return s == Sampling::Argmax ? "ARGMAX" : "SAMPLE"; }

GeneratorKind parse_generator_kind(std::string_view s) {
    if (s == "NGRAM_INFILLER") return GeneratorKind::NgramInfiller;
    if (s == "LEXICON_SWAPPER") return GeneratorKind::LexiconSwapper;
    throw ValidationError("unknown generator kind '" + std::string(s) + "'");
}

Sampling parse_sampling(std::string_view s) {
    if (s == "ARGMAX") return Sampling::Argmax;
    if (s == "SAMPLE") return Sampling::Sample;
    throw ValidationError("unknown sampling mode '" + std::string(s) + "'");
}

// ---- InfillerModel --------------------------------------------------------

InfillerModel::InfillerModel(std::vector<std::string> domains, double alpha)
    : domains_(std::move(domains)), alpha_(alpha), tables_(domains_.size()) {
    if (!(alpha > 0.0)) throw ValidationError("infiller alpha must be positive");
    vocab_.emplace_back("<s>");
    ids_.emplace("<s>", kBoundary);
}

InfillerModel::TokenId InfillerModel::intern(const std::string& token) {
    auto [it, inserted] = ids_.emplace(token, static_cast<TokenId>(vocab_.size()));
    if (inserted) {
        if (vocab_.size() >= kIdMask) throw Error("infiller vocabulary overflow");
        vocab_.push_back(token);
    }
    return it->second;
}

InfillerModel::TokenId InfillerModel::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnknown : it->second;
}

std::size_t InfillerModel::domain_index(std::string_view d) const {
    auto it = std::find(domains_.begin(), domains_.end(), d);
    if (it == domains_.end()) throw ValidationError("infiller has no domain '" + std::string(d) + "'");
    return static_cast<std::size_t>(it - domains_.begin());
}

void InfillerModel::add_document(const std::vector<std::string>& tokens, std::size_t domain) {
    auto& t = tables_.at(domain);
    TokenId u = kBoundary, v = kBoundary;
    for (const auto& tok : tokens) {
        const TokenId w = intern(tok);
        if (t.unigram.size() <= w) t.unigram.resize(w + 1, 0);
        ++t.unigram[w];
        ++t.total;
        ++t.bigram[key2(v, w)];
        ++t.bigram_ctx[v];
        ++t.trigram[key3(u, v, w)];
        ++t.trigram_ctx[key2(u, v)];
        u = v;
        v = w;
    }
}

std::uint64_t InfillerModel::unigram_count(std::size_t domain, TokenId w) const {
    const auto& u = tables_.at(domain).unigram;
    return w < u.size() ? u[w] : 0;
}

double InfillerModel::prob(std::size_t domain, TokenId u, TokenId v, TokenId w) const {
    const auto& t = tables_.at(domain);
    const double smooth = alpha_ * static_cast<double>(vocab_size());
    const bool w_known = w != kUnknown;
    if (u != kUnknown && v != kUnknown) {
        const std::uint64_t ctx = lookup(t.trigram_ctx, key2(u, v));
        if (ctx > 0) {
            const std::uint64_t c = w_known ? lookup(t.trigram, key3(u, v, w)) : 0;
            return (static_cast<double>(c) + alpha_) / (static_cast<double>(ctx) + smooth);
        }
    }
    if (v != kUnknown) {
        const std::uint64_t ctx = lookup(t.bigram_ctx, v);
        if (ctx > 0) {
            const std::uint64_t c = w_known ? lookup(t.bigram, key2(v, w)) : 0;
            return (static_cast<double>(c) + alpha_) / (static_cast<double>(ctx) + smooth);
        }
    }
    const std::uint64_t c = w_known ? unigram_count(domain, w) : 0;
    return (static_cast<double>(c) + alpha_) / (static_cast<double>(t.total) + smooth);
}

nlohmann::ordered_json InfillerModel::to_json() const {
    nlohmann::ordered_json j;
    j["alpha"] = alpha_;
    std::vector<std::string> sorted_vocab(vocab_.begin() + 1, vocab_.end());
    std::sort(sorted_vocab.begin(), sorted_vocab.end());
    j["vocab"] = sorted_vocab;
    j["domains"] = nlohmann::ordered_json::array();
    for (std::size_t d = 0; d < domains_.size(); ++d) {
        const auto& t = tables_[d];
        nlohmann::ordered_json dj;
        dj["name"] = domains_[d];
        std::map<std::string, std::uint64_t> uni;
        for (TokenId w = 1; w < t.unigram.size(); ++w)
            if (t.unigram[w]) uni[vocab_[w]] = t.unigram[w];
        dj["unigrams"] = uni;
        std::map<std::string, std::uint64_t> bi, tri;
        for (const auto& [k, c] : t.bigram) bi[vocab_[k >> kIdBits] + " " + vocab_[k & kIdMask]] = c;
        for (const auto& [k, c] : t.trigram)
            tri[vocab_[k >> (2 * kIdBits)] + " " + vocab_[(k >> kIdBits) & kIdMask] + " " + vocab_[k & kIdMask]] = c;
        dj["bigrams"] = bi;
        dj["trigrams"] = tri;
        j["domains"].push_back(std::move(dj));
    }
    return j;
}

std::vector<double> add_alpha(const std::vector<std::uint64_t>& counts, double alpha) {
    double total = 0.0;
    for (auto c : counts) total += static_cast<double>(c);
    const double denom = total + alpha * static_cast<double>(counts.size());
    std::vector<double> p;
    p.reserve(counts.size());
    for (auto c : counts) p.push_back((static_cast<double>(c) + alpha) / denom);
    return p;
}

// ---- Generator -------------------------------------------------------------

Generator::Generator(GeneratorSpec spec, const InfillerModel& model, const affinity::NgramTable& table)
    : spec_(spec), model_(&model), table_(&table) {
    if (spec_.sampling == Sampling::Sample && !(spec_.temperature > 0.0))
        throw ValidationError("sampling temperature must be positive");
    for (std::size_t d = 0; d < table.num_domains(); ++d) {
        std::vector<Candidate> list;
        for (auto& key : table.top_by_rho(d, kShortlistSize)) {
            Candidate c;
            c.tokens = affinity::split_key(key);
            for (auto& t : c.tokens) c.ids.push_back(model.id(t));
            c.log_rho = std::log(table.rho(key, d));
            c.key = std::move(key);
            list.push_back(std::move(c));
        }
        std::string best;
        for (const auto& c : list)
            if (c.tokens.size() == 1) {
                best = c.key;
                break;
            }
        if (best.empty())
            for (auto& key : table.top_by_rho(d, std::numeric_limits<std::size_t>::max()))
                if (affinity::ngram_order(key) == 1) {
                    best = key;
                    break;
                }
        shortlists_.push_back(std::move(list));
        best_unigram_.push_back(std::move(best));
    }
}

const std::vector<Generator::Candidate>& Generator::shortlist_for(std::size_t domain) const {
    return shortlists_.at(domain);
}

std::vector<std::string> Generator::fallback_fill(std::size_t domain) const {
    if (best_unigram_.at(domain).empty()) return {};
    return {best_unigram_[domain]};
}

Counterfactual Generator::generate(const affinity::MaskedText& masked, const Orientation& orientation,
                                   const corpus::Example& parent, std::size_t k, Rng& rng) const {
    const std::size_t tdom = table_->domain_index(orientation.domain);
    const std::size_t mdom = model_->domain_index(orientation.domain);

    // Shortlist = orientation representatives (not already listed) + top-rho n-grams.
    std::vector<const Candidate*> shortlist;
    std::vector<Candidate> extra;
    if (spec_.kind == GeneratorKind::NgramInfiller) {
        std::set<std::string_view> seen;
        for (const auto& c : shortlist_for(tdom)) seen.insert(c.key);
        for (const auto& key : orientation.representative_ngrams) {
            if (seen.count(key) || !table_->retained(key)) continue;
            const double r = table_->rho(key, tdom);
            if (r <= 0.0) continue;
            Candidate c;
            c.key = key;
            c.tokens = affinity::split_key(key);
            for (auto& t : c.tokens) c.ids.push_back(model_->id(t));
            c.log_rho = std::log(r);
            extra.push_back(std::move(c));
        }
        for (const auto& c : extra) shortlist.push_back(&c);
        for (const auto& c : shortlist_for(tdom)) shortlist.push_back(&c);
    }

    Counterfactual cf;
    cf.parent_id = parent.id;
    std::vector<std::string> out;
    std::vector<InfillerModel::TokenId> out_ids;
    std::size_t slot = 0;
    const auto& toks = masked.tokens;

    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (slot >= masked.slots.size() || toks[i] != affinity::mask_token(slot + 1)) {
            out.push_back(toks[i]);
            out_ids.push_back(model_->id(toks[i]));
            continue;
        }
        const auto& original = masked.slots[slot].original;
        std::vector<std::string> fill;

        if (spec_.kind == GeneratorKind::LexiconSwapper) {
            std::vector<const std::string*> same_len;
            for (const auto& r : orientation.representative_ngrams)
                if (affinity::ngram_order(r) == original.size()) same_len.push_back(&r);
            if (!same_len.empty())
                fill = affinity::split_key(*same_len[slot % same_len.size()]);
            else if (!orientation.representative_ngrams.empty())
                fill = affinity::split_key(
                    orientation.representative_ngrams[slot % orientation.representative_ngrams.size()]);
            else
                fill = fallback_fill(tdom);
        } else if (!shortlist.empty()) {
            std::vector<InfillerModel::TokenId> right;
            for (std::size_t j = i + 1; j < toks.size() && right.size() < 2; ++j) {
                if (corpus::is_sentinel(toks[j]) && toks[j].rfind("<mask_", 0) == 0) break;
                right.push_back(model_->id(toks[j]));
            }
            const auto n = out_ids.size();
            const InfillerModel::TokenId u0 = n >= 2 ? out_ids[n - 2] : InfillerModel::kBoundary;
            const InfillerModel::TokenId v0 = n >= 1 ? out_ids[n - 1] : InfillerModel::kBoundary;

            std::vector<double> scores(shortlist.size());
            for (std::size_t c = 0; c < shortlist.size(); ++c) {
                double ll = shortlist[c]->log_rho;
                InfillerModel::TokenId u = u0, v = v0;
                for (auto w : shortlist[c]->ids) {
                    ll += std::log(model_->prob(mdom, u, v, w));
                    u = v;
                    v = w;
                }
                for (auto w : right) {
                    ll += std::log(model_->prob(mdom, u, v, w));
                    u = v;
                    v = w;
                }
                scores[c] = ll;
            }
            std::size_t pick = 0;
            if (spec_.sampling == Sampling::Argmax) {
                for (std::size_t c = 1; c < scores.size(); ++c)
                    if (scores[c] > scores[pick]) pick = c;
            } else {
                const double top = *std::max_element(scores.begin(), scores.end());
                std::vector<double> w(scores.size());
                for (std::size_t c = 0; c < scores.size(); ++c) w[c] = std::exp((scores[c] - top) / spec_.temperature);
                pick = rng.categorical(w);
            }
            fill = shortlist[pick]->tokens;
        } else {
            fill = fallback_fill(tdom);
        }
        if (fill.empty()) fill = original;

        cf.fills.push_back(Fill{out.size(), fill, original});
        for (auto& t : fill) {
            out_ids.push_back(model_->id(t));
            out.push_back(std::move(t));
        }
        ++slot;
    }

    cf.example.id = parent.id + "#cf" + std::to_string(k);
    cf.example.tokens = std::move(out);
    cf.example.raw_text = corpus::join_tokens(cf.example.tokens);
    cf.example.target = parent.target;
    cf.example.stance = parent.stance;
    cf.example.domain = orientation.domain;
    return cf;
}

// ---- Training and the pass --------------------------------------------------

InfillerModel train_infiller(const corpus::Corpus& train, const affinity::NgramTable& table,
                             const InfillerOptions& options, InfillerReport* report) {
    InfillerModel model(train.domains(), options.alpha);
    std::vector<std::size_t> per_domain(train.domains().size(), 0);
    for (const auto& ex : train.examples()) {
        const std::size_t d = train.domain_index(ex.domain);
        model.add_document(ex.tokens, d);
        ++per_domain[d];
    }
    for (std::size_t d = 0; d < per_domain.size(); ++d)
        if (per_domain[d] == 0) throw ValidationError("infiller domain '" + train.domains()[d] + "' has no documents");

    if (!report) return model;
    *report = InfillerReport{};
    GeneratorSpec spec;
    spec.sampling = Sampling::Argmax;
    Generator gen(spec, model, table);
    std::vector<Orientation> orientation;
    for (const auto& d : train.domains()) orientation.push_back(make_orientation(table, d, options.orientation_size));

    std::vector<std::size_t> used(train.domains().size(), 0);
    Rng rng(0);
    for (const auto& ex : train.examples()) {
        const std::size_t d = table.domain_index(ex.domain);
        if (options.sanity_limit && used[d] >= options.sanity_limit) continue;
        ++used[d];
        const auto masked = affinity::corrupt_with(
            table, ex, [&](std::string_view w) { return table.rho(w, d); }, options.tau_mask_train,
            options.max_mask_frac);
        ++report->documents;
        if (masked.slots.empty()) continue;
        const auto cf = gen.generate(masked, orientation[d], ex, 0, rng);
        for (const auto& f : cf.fills) {
            ++report->slots;
            report->tokens_total += f.original.size();
            for (std::size_t i = 0; i < std::min(f.original.size(), f.tokens.size()); ++i)
                if (f.original[i] == f.tokens[i]) ++report->tokens_correct;
        }
    }
    return model;
}

PassResult counterfactual_pass(const corpus::Corpus& train, const affinity::NgramTable& table,
                               const Generator& generator, const Orientation& orientation,
                               std::string_view source, std::string_view target, const PassOptions& options) {
    if (orientation.domain != target) throw ValidationError("orientation domain must be the target domain");
    PassResult result{corpus::Corpus(train.domains()), {}, 0, 0};
    if (options.iterations == 0) return result;
    for (std::size_t e = 0; e < train.size(); ++e) {
        const auto& ex = train.examples()[e];
        if (ex.domain != source) continue;
        ++result.parents;
        const auto masked = affinity::corrupt(table, ex, source, target, options.tau_mask, options.max_mask_frac);
        if (masked.slots.empty()) {
            ++result.skipped_unmasked;
            continue;
        }
        std::set<std::vector<std::string>> seen;
        for (std::size_t k = 0; k < options.iterations; ++k) {
            Rng rng(derive_seed(generator.spec().seed, {e, k}));
            auto cf = generator.generate(masked, orientation, ex, k + 1, rng);
            if (!seen.insert(cf.example.tokens).second) continue;
            result.corpus.add(cf.example);
            result.records.push_back(std::move(cf));
        }
    }
    return result;
}

double max_span_rho(const affinity::NgramTable& table, const std::vector<std::string>& span, std::size_t domain) {
    double best = 0.0;
    for (std::size_t i = 0; i < span.size(); ++i)
        for (std::size_t n = 1; n <= affinity::kMaxN && i + n <= span.size(); ++n) {
            const std::string key = affinity::ngram_key(span, i, n);
            if (table.retained(key)) best = std::max(best, table.rho(key, domain));
        }
    return best;
}

}  // namespace stance::reconstructor
