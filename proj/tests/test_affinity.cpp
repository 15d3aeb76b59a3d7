#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "stance/affinity.hpp"

using namespace stance;
using namespace stance::affinity;

namespace {

corpus::Example doc(const std::string& id, const std::string& domain, std::vector<std::string> tokens) {
    corpus::Example x;
    x.id = id;
    x.domain = domain;
    x.tokens = std::move(tokens);
    x.target = {"t"};
    return x;
}

struct Fuzzed {
    corpus::Corpus corpus;
    std::vector<std::vector<std::string>> docs;
    std::vector<std::size_t> domain_of;
};

Fuzzed fuzz_corpus(Rng& rng) {
    Fuzzed f;
    const auto n_domains = static_cast<std::size_t>(rng.between(2, 5));
    std::vector<std::string> names;
    for (std::size_t d = 0; d < n_domains; ++d) names.push_back("d" + std::to_string(d));
    f.corpus = corpus::Corpus(names);
    const auto n_docs = static_cast<std::size_t>(rng.between(1, 200));
    const auto vocab = rng.between(3, 25);
    for (std::size_t i = 0; i < n_docs; ++i) {
        const auto d = static_cast<std::size_t>(rng.below(n_domains));
        std::vector<std::string> toks;
        const auto len = rng.between(1, 12);
        for (int k = 0; k < len; ++k) {
            if (rng.bernoulli(0.05))
                toks.push_back(rng.bernoulli(0.5) ? "<url>" : "<user>");
            else
                toks.push_back("v" + std::to_string(rng.below(static_cast<std::uint64_t>(vocab))) + "_" +
                               (rng.bernoulli(0.3) ? std::to_string(d) : "x"));
        }
        f.docs.push_back(toks);
        f.domain_of.push_back(d);
        f.corpus.add(doc("e" + std::to_string(i), names[d], toks));
    }
    return f;
}

}  // namespace

TEST(NgramTable, DirectCounts) {
    corpus::Corpus c({"X", "Y"});
    c.add(doc("1", "X", {"a", "b"}));
    const auto t = NgramTable::build(c, 1);
    EXPECT_EQ(t.count("a", 0), 1u);
    EXPECT_EQ(t.count("b", 0), 1u);
    EXPECT_EQ(t.count("a b", 0), 1u);
    EXPECT_EQ(t.count("a b", 1), 0u);
    EXPECT_EQ(t.all_ngrams(), (std::vector<std::string>{"a", "a b", "b"}));
}

TEST(NgramTable, DuplicateDocumentDoublesCounts) {
    corpus::Corpus one({"X", "Y"}), two({"X", "Y"});
    one.add(doc("1", "X", {"a", "b", "c"}));
    two.add(doc("1", "X", {"a", "b", "c"}));
    two.add(doc("2", "X", {"a", "b", "c"}));
    const auto t1 = NgramTable::build(one, 1), t2 = NgramTable::build(two, 1);
    for (const auto& g : t1.all_ngrams()) EXPECT_EQ(t2.count(g, 0), 2 * t1.count(g, 0)) << g;
}

TEST(NgramTable, SentinelsBreakNgrams) {
    corpus::Corpus c({"X", "Y"});
    c.add(doc("1", "X", {"a", "<url>", "b"}));
    const auto t = NgramTable::build(c, 1);
    EXPECT_EQ(t.all_ngrams(), (std::vector<std::string>{"a", "b"}));
}

TEST(NgramTable, SingleDomainRejected) {
    corpus::Corpus c({"X"});
    c.add(doc("1", "X", {"a"}));
    EXPECT_THROW(NgramTable::build(c), ValidationError);
}

TEST(NgramTable, MatchesBruteForceRecount) {
    Rng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        const auto f = fuzz_corpus(rng);
        const auto table = NgramTable::build(f.corpus, 1);
        const auto ref = oracle::ngram_counts(f.docs, f.domain_of, f.corpus.domains().size());
        ASSERT_EQ(table.all_ngrams().size(), ref.size());
        for (const auto& [key, counts] : ref) {
            const auto* got = table.counts(key);
            ASSERT_NE(got, nullptr) << key;
            EXPECT_EQ(*got, counts) << key;
        }
    }
}

TEST(Affinity, MatchesExactOracleOnFuzzedCorpora) {
    Rng rng(202);
    for (int trial = 0; trial < 50; ++trial) {
        const auto f = fuzz_corpus(rng);
        const auto table = NgramTable::build(f.corpus, 2);
        const auto ref = oracle::ngram_counts(f.docs, f.domain_of, f.corpus.domains().size());
        const std::size_t n = table.num_domains();
        for (const auto& key : table.retained_ngrams()) {
            const auto& counts = ref.at(key);
            double sum = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double r = table.rho(key, s);
                EXPECT_NEAR(r, static_cast<double>(oracle::rho(counts, s)), 1e-9) << key;
                EXPECT_GE(r, 0.0);
                EXPECT_LE(r, 1.0);
                sum += r;
                EXPECT_EQ(table.mask_score(key, s, s), 0.0);
                for (std::size_t t = 0; t < n; ++t) {
                    const double m = table.mask_score(key, s, t);
                    EXPECT_NEAR(m, static_cast<double>(oracle::rho(counts, s) - oracle::rho(counts, t)), 1e-9);
                    EXPECT_NEAR(m, -table.mask_score(key, t, s), 1e-12);
                }
            }
            EXPECT_LE(sum, 1.0 + 1e-12);
        }
    }
}

TEST(Affinity, WorkedExample) {
    corpus::Corpus c({"A", "B"});
    c.add(doc("1", "A", {"w"}));
    c.add(doc("2", "A", {"w"}));
    c.add(doc("3", "A", {"w"}));
    c.add(doc("4", "B", {"w"}));
    const auto t = NgramTable::build(c);
    const std::vector<std::uint64_t> counts{3, 1};
    const double ra = static_cast<double>(oracle::rho(counts, 0));
    const double rb = static_cast<double>(oracle::rho(counts, 1));
    EXPECT_NEAR(t.rho("w", "A"), ra, 1e-12);
    EXPECT_NEAR(t.mask_score("w", "A", "B"), ra - rb, 1e-12);
    EXPECT_NEAR(t.rho("w", "A"), 0.1416, 1e-4);
    EXPECT_NEAR(t.mask_score("w", "A", "B"), 0.0944, 1e-4);
}

TEST(Affinity, DegenerateDistributions) {
    corpus::Corpus c({"A", "B", "C"});
    for (const char* d : {"A", "B", "C"}) c.add(doc(std::string("u") + d, d, {"u"}));
    c.add(doc("x1", "A", {"x"}));
    c.add(doc("x2", "A", {"x"}));
    const auto t = NgramTable::build(c, 1);
    EXPECT_NEAR(t.rho("u", "A"), 0.0, 1e-15);
    EXPECT_EQ(t.rho("x", "A"), 1.0);
    EXPECT_EQ(t.mask_score("x", "A", "B"), 1.0);
}

TEST(Affinity, BelowMinCountRejected) {
    corpus::Corpus c({"A", "B"});
    c.add(doc("1", "A", {"rare", "w"}));
    c.add(doc("2", "B", {"w"}));
    const auto t = NgramTable::build(c, 2);
    EXPECT_THROW(t.rho("rare", "A"), Error);
    EXPECT_NO_THROW(t.rho("w", "A"));
}

namespace {

NgramTable marker_table() {
    corpus::Corpus c({"S", "T"});
    for (int i = 0; i < 6; ++i) {
        c.add(doc("s" + std::to_string(i), "S", {"the", "d1", "is", "d2", "here"}));
        c.add(doc("t" + std::to_string(i), "T", {"the", "e1", "is", "e2", "here"}));
    }
    return NgramTable::build(c);
}

}  // namespace

TEST(Corrupt, ExclusiveMarkersMasked) {
    const auto table = marker_table();
    const auto x = doc("q", "S", {"the", "d1", "is", "d2", "here"});
    const auto m = corrupt(table, x, "S", "T", 0.5, 1.0);
    // Exclusive n-grams all score 1; single-token spans keep "the is here".
    std::vector<std::string> kept;
    for (const auto& t : m.tokens)
        if (!corpus::is_sentinel(t)) kept.push_back(t);
    for (const auto& s : m.slots) EXPECT_NEAR(s.score, 1.0, 1e-12);
    EXPECT_EQ(m.restore(), x.tokens);
    EXPECT_EQ(std::count(kept.begin(), kept.end(), "d1"), 0);
    EXPECT_EQ(std::count(kept.begin(), kept.end(), "d2"), 0);
}

TEST(Corrupt, NothingAboveThreshold) {
    const auto table = marker_table();
    const auto x = doc("q", "S", {"the", "is", "here"});
    const auto m = corrupt(table, x, "S", "T", 0.2, 0.5);
    EXPECT_TRUE(m.slots.empty());
    EXPECT_EQ(m.tokens, x.tokens);
}

TEST(Corrupt, ThresholdOneMasksNothing) {
    const auto table = marker_table();
    const auto x = doc("q", "S", {"the", "d1", "is", "d2", "here"});
    EXPECT_TRUE(corrupt(table, x, "S", "T", 1.0, 1.0).slots.empty());
}

TEST(Corrupt, SameDomainMasksNothing) {
    const auto table = marker_table();
    const auto x = doc("q", "S", {"the", "d1", "is", "d2", "here"});
    EXPECT_TRUE(corrupt(table, x, "S", "S", 0.0, 1.0).slots.empty());
}

TEST(Corrupt, SlotsFaithfulOrderedAndCapped) {
    Rng rng(303);
    for (int trial = 0; trial < 50; ++trial) {
        const auto f = fuzz_corpus(rng);
        const auto table = NgramTable::build(f.corpus, 2);
        const double frac = 0.2 + 0.6 * rng.uniform();
        for (std::size_t i = 0; i < std::min<std::size_t>(f.corpus.size(), 20); ++i) {
            const auto& x = f.corpus.examples()[i];
            const auto m = corrupt(table, x, table.domains()[0], table.domains()[1], 0.05, frac);
            const auto again = corrupt(table, x, table.domains()[0], table.domains()[1], 0.05, frac);
            EXPECT_EQ(m.tokens, again.tokens);
            EXPECT_EQ(m.restore(), x.tokens);
            std::size_t masked = 0;
            for (std::size_t k = 0; k < m.slots.size(); ++k) {
                if (k) EXPECT_GE(m.slots[k].position, m.slots[k - 1].position + m.slots[k - 1].original.size());
                EXPECT_GT(m.slots[k].score, 0.05);
                masked += m.slots[k].original.size();
            }
            EXPECT_LE(static_cast<double>(masked), frac * static_cast<double>(x.tokens.size()) + 1e-9);
        }
    }
}

TEST(Tsv, SortedByMaskDescending) {
    const auto table = marker_table();
    std::ostringstream out;
    write_tsv(out, table, "S", "T");
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);  // header
    double prev = 2.0;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const double m = std::stod(line.substr(line.rfind('\t') + 1));
        EXPECT_LE(m, prev);
        prev = m;
        ++rows;
    }
    EXPECT_EQ(rows, table.retained_ngrams().size());
}
